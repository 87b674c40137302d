"""Partial rebuilding: announce, freeze-and-count, ideal reconstruction, splice.

Functions take the owning tree as their first argument for its configuration,
reclamation domain and statistics.  Both the plain and the collaborative
variants live here; :func:`help_rebuild` picks one from the tree config.
"""

import random
from math import isqrt

from . import hooks
from ._atomic import _MASK, _locks, cas_degree, cas_new_target, fetch_add_next_mark
from .dcss import (FAILED_AUX_ADDRESS, SUCCESS, DcssDescriptor, dcss,
                   dcss_read)
from .nodes import (STATUS_INIT, STATUS_STARTED, Empty, Inner, Leaf, Rebuild,
                    Single, finished_status)

_FINISHED = 0b10

# Helpers re-check whether the replacement already went in after this many
# collected keys and give up if so.
ABORT_CHECK_INTERVAL = 1024

# Rebuild targets whose initial size is below this are frozen and collected
# in a single walk by every helper.  Larger ones are collected in rank windows
# so late helpers can bail out early.
SMALL_REBUILD = 48 * 48


class Superseded(Exception):
    """The rebuild being helped has already been spliced in by someone else."""


# -- announce / help -------------------------------------------------------------

def announce(tree, node, parent, index):
    """Try to park a rebuild descriptor over ``node``; help it if installed.

    Returns True iff this call installed the descriptor.
    """
    op = Rebuild(node, parent, index)
    if dcss(parent.children, index, node, op, parent, STATUS_INIT,
            tree._reclaim) is not SUCCESS:
        return False
    tree.stats.announced.fetch_add(1)
    if hooks.enabled:
        hooks.fire("after_announce", op)
    help_rebuild(tree, op)
    return True


def help_rebuild(tree, op):
    """Drive ``op`` through marking, building and the final splice.

    Safe to call from any number of threads and after completion.
    """
    cfg = tree.config
    parent = op.parent
    counter = tree._new_root_counter() if parent is tree.anchor else None
    garbage = None
    try:
        target = op.target
        threshold = cfg.collaboration_threshold if cfg.collaborative else None
        if (target.__class__ is Inner and target.init_size < SMALL_REBUILD
                and not target.status & _FINISHED):
            # Freeze, collect and list the replaced nodes in one walk; the
            # build then slices the local snapshot instead of walking again.
            leaves = []
            garbage = [op]
            key_count = _freeze_collect(target, leaves, garbage, threshold)
            if hooks.enabled:
                hooks.fire("after_mark", op, key_count)
            if cfg.collaborative:
                ideal = create_ideal_collaborative(tree, op, key_count, counter,
                                                   leaves)
            else:
                ideal = build_ideal(leaves, 0, key_count, counter,
                                    cfg.leaf_capacity)
        elif cfg.collaborative:
            key_count = mark_and_count_collaborative(
                op.target, cfg.collaboration_threshold)
            if hooks.enabled:
                hooks.fire("after_mark", op, key_count)
            ideal = create_ideal_collaborative(tree, op, key_count, counter)
        else:
            key_count = mark_and_count(op.target)
            if hooks.enabled:
                hooks.fire("after_mark", op, key_count)
            ideal = create_ideal(op.target, 0, key_count, counter, watch=op,
                                 capacity=cfg.leaf_capacity)
    except Superseded:
        return
    if dcss(parent.children, op.index, op, ideal, parent, STATUS_INIT,
            tree._reclaim) is SUCCESS:
        tree.stats.rebuilds.fetch_add(1)
        if parent is tree.anchor:
            tree.stats.root_rebuilds.fetch_add(1)
        if garbage is None:
            retire_subtree(tree._reclaim, op, keep_leaves=True)
        else:
            tree._reclaim.retire_all(garbage)


def retire_subtree(reclaim, root, keep_leaves=False):
    """Retire every node reachable from ``root``, including nested descriptors.

    With ``keep_leaves`` the Singles are skipped: a rebuild moves them into the
    replacement, so they are still live.  Leaf arrays are always copied, so
    they are always retired.
    """
    found = []
    stack = [root]
    while stack:
        node = stack.pop()
        cls = node.__class__
        if cls is Single and keep_leaves:
            continue
        found.append(node)
        if cls is Inner:
            children = node.children
            for i in range(len(children)):
                child = children[i]
                if child.__class__ is DcssDescriptor:
                    child = dcss_read(children, i)
                stack.append(child)
        elif cls is Rebuild:
            stack.append(node.target)
    reclaim.retire_all(found)


# -- marking ---------------------------------------------------------------------

def mark_and_count(node):
    """Freeze every inner node under ``node`` and return its key count."""
    return _mark_any(node, None)


def mark_and_count_collaborative(node, threshold):
    """:func:`mark_and_count` with helpers scattered over wide nodes.

    Helpers first claim child indices through ``next_mark`` and descend into
    those; the full left-to-right pass afterwards still visits every child, so
    a helper that stalls after claiming cannot block the others.
    """
    return _mark_any(node, threshold)


def _mark_any(node, threshold):
    cls = node.__class__
    if cls is Inner:
        return _mark(node, threshold)
    if cls is Single:
        return 1
    if cls is Leaf:
        return len(node.keys)
    if cls is Rebuild:
        return _mark_any(node.target, threshold)
    return 0


def _mark(node, threshold):
    status = node.status
    if status & _FINISHED:
        return status >> 2
    lock = _locks[(id(node) >> 4) & _MASK]
    if status == STATUS_INIT:
        with lock:
            if node.status == STATUS_INIT:
                node.status = STATUS_STARTED
    children = node.children
    degree = len(children)
    if threshold is not None and degree > threshold:
        while True:
            index = fetch_add_next_mark(node)
            if index >= degree:
                break
            if hooks.enabled:
                hooks.fire("after_next_mark", node, index)
            _mark_any(dcss_read(children, index), threshold)
    total = 0
    for i in range(degree):
        child = children[i]
        cls = child.__class__
        if cls is DcssDescriptor:
            child = dcss_read(children, i)
            cls = child.__class__
        if cls is Single:
            total += 1
        elif cls is Leaf:
            total += len(child.keys)
        elif cls is Inner:
            status = child.status
            total += status >> 2 if status & _FINISHED else _mark(child,
                                                                    threshold)
        elif cls is Rebuild:
            total += _mark_any(child.target, threshold)
    with lock:
        if node.status == STATUS_STARTED:
            node.status = finished_status(total)
    return total


def _freeze_collect(node, leaves, garbage, threshold=None):
    """Freeze the Inner ``node`` like :func:`_mark`, appending its entries to
    ``leaves`` and every node a rebuild replaces to ``garbage``.

    Nodes wider than ``threshold`` are marked collaboratively first."""
    garbage.append(node)
    status = node.status
    if not status & _FINISHED and threshold is not None \
            and len(node.children) > threshold:
        status = finished_status(_mark(node, threshold))
    if status & _FINISHED:
        _collect_all(node, leaves, garbage)
        return status >> 2
    lock = _locks[(id(node) >> 4) & _MASK]
    if status == STATUS_INIT:
        with lock:
            if node.status == STATUS_INIT:
                node.status = STATUS_STARTED
    children = node.children
    total = 0
    for i in range(len(children)):
        child = children[i]
        cls = child.__class__
        if cls is DcssDescriptor:
            child = dcss_read(children, i)
            cls = child.__class__
        while cls is Rebuild:
            garbage.append(child)
            child = child.target
            cls = child.__class__
        if cls is Single:
            leaves.append(child)
            total += 1
        elif cls is Inner:
            total += _freeze_collect(child, leaves, garbage, threshold)
        elif cls is Leaf:
            leaves.extend(zip(child.keys, child.vals))
            garbage.append(child)
            total += len(child.keys)
        else:
            garbage.append(child)
    with lock:
        if node.status == STATUS_STARTED:
            node.status = finished_status(total)
    return total


# -- key extraction over frozen subtrees -------------------------------------------

def subtree_size(node):
    """Key count of a frozen subtree, read from the finished status words."""
    cls = node.__class__
    while cls is Rebuild:
        node = node.target
        cls = node.__class__
    if cls is Single:
        return 1
    if cls is Leaf:
        return len(node.keys)
    if cls is Empty:
        return 0
    status = node.status
    assert status & _FINISHED, "subtree is not frozen"
    return status >> 2


def _collect(node, lo, hi, skipped, leaves, watch):
    """Append the entries ranked in ``[lo, hi)`` below ``node``.

    Entries are the Singles themselves, or ``(key, value)`` pairs copied out
    of Leaf arrays.

    ``skipped`` is the number of keys left of ``node``; returns the same count
    for the right edge of ``node``.  Subtrees wholly outside the window are
    pruned by their frozen key counts.
    """
    cls = node.__class__
    if cls is Single:
        if lo <= skipped < hi:
            leaves.append(node)
            if watch is not None and len(leaves) % ABORT_CHECK_INTERVAL == 0:
                _check_superseded(watch)
        return skipped + 1
    if cls is Empty:
        return skipped
    if cls is Rebuild:
        return _collect(node.target, lo, hi, skipped, leaves, watch)
    if cls is Leaf:
        keys = node.keys
        end = skipped + len(keys)
        if end <= lo or skipped >= hi:
            return end
        a = max(lo - skipped, 0)
        b = min(hi - skipped, len(keys))
        before = len(leaves)
        leaves.extend(zip(keys[a:b], node.vals[a:b]))
        if (watch is not None and len(leaves) // ABORT_CHECK_INTERVAL
                != before // ABORT_CHECK_INTERVAL):
            _check_superseded(watch)
        return end
    status = node.status
    assert status & _FINISHED, "subtree is not frozen"
    end = skipped + (status >> 2)
    if end <= lo or skipped >= hi:
        return end
    if lo <= skipped and end <= hi:
        before = len(leaves)
        _collect_all(node, leaves)
        if (watch is not None and len(leaves) // ABORT_CHECK_INTERVAL
                != before // ABORT_CHECK_INTERVAL):
            _check_superseded(watch)
        return end
    children = node.children
    for i in range(len(children)):
        child = children[i]
        if child.__class__ is DcssDescriptor:
            child = dcss_read(children, i)
        skipped = _collect(child, lo, hi, skipped, leaves, watch)
        if skipped >= hi:
            break
    return end


def _collect_all(node, leaves, garbage=None):
    # Whole frozen subtree inside the window: no rank bookkeeping needed.
    # ``garbage``, when given, also receives every non-Single node below.
    children = node.children
    for i in range(len(children)):
        child = children[i]
        cls = child.__class__
        if cls is DcssDescriptor:
            child = dcss_read(children, i)
            cls = child.__class__
        while cls is Rebuild:
            if garbage is not None:
                garbage.append(child)
            child = child.target
            cls = child.__class__
        if cls is Single:
            leaves.append(child)
            continue
        if garbage is not None:
            garbage.append(child)
        if cls is Leaf:
            leaves.extend(zip(child.keys, child.vals))
        elif cls is Inner:
            _collect_all(child, leaves, garbage)


def _check_superseded(op):
    if dcss_read(op.parent.children, op.index) is not op:
        raise Superseded


def collect_leaves(frozen_root, from_key, key_count, watch=None):
    """Entries ranked ``[from_key, from_key + key_count)``, in key order."""
    leaves = []
    _collect(frozen_root, from_key, from_key + key_count, 0, leaves, watch)
    if len(leaves) != key_count:
        raise ValueError(f"frozen subtree holds {len(leaves)} keys in the "
                         f"requested window, expected {key_count}")
    return leaves


def find_key_at_index(frozen_root, rank):
    """Key of the given rank (0-based) in a frozen subtree."""
    node = frozen_root
    while True:
        cls = node.__class__
        if cls is Single:
            if rank != 0:
                raise IndexError("rank out of range")
            return node.key
        if cls is Leaf:
            if rank >= len(node.keys):
                raise IndexError("rank out of range")
            return node.keys[rank]
        if cls is Rebuild:
            node = node.target
            continue
        if cls is Empty:
            raise IndexError("rank out of range")
        children = node.children
        for i in range(len(children)):
            child = dcss_read(children, i)
            size = subtree_size(child)
            if rank < size:
                node = child
                break
            rank -= size
        else:
            raise IndexError("rank out of range")


# -- ideal construction ------------------------------------------------------------

def ideal_degree(n):
    return max(2, isqrt(n))


def build_ideal(leaves, lo=0, hi=None, counter=None, capacity=0):
    """Ideal subtree over the sorted entries ``leaves[lo:hi]``.

    With ``capacity`` 0 the entries are Singles; they are immutable, so they
    move into the new tree as they are and only inner nodes are allocated.
    Otherwise entries are ``(key, value)`` pairs and any subtree of at most
    ``capacity`` keys becomes one Leaf.
    """
    if hi is None:
        hi = len(leaves)
    if capacity:
        return _build_leaves(leaves, lo, hi, counter, capacity)
    n = hi - lo
    if n == 0:
        return Empty()
    if n == 1:
        return leaves[lo]
    if n < 4:
        # Degree 2 with a pair on the left (n == 3) or two Singles.
        right = leaves[hi - 1]
        if n == 2:
            return Inner(2, [right.key], [leaves[lo], right], counter)
        mid = leaves[lo + 1]
        return Inner(3, [right.key], [Inner(2, [mid.key], [leaves[lo], mid]),
                                      right], counter)
    degree = isqrt(n)
    size, extra = divmod(n, degree)
    children = []
    seps = []
    start = lo
    for i in range(degree):
        end = start + size + (1 if i < extra else 0)
        if i:
            seps.append(leaves[start].key)
        width = end - start
        if width == 1:
            children.append(leaves[start])
        elif width == 2:
            right = leaves[start + 1]
            children.append(Inner(2, [right.key], [leaves[start], right]))
        else:
            children.append(build_ideal(leaves, start, end))
        start = end
    return Inner(n, seps, children, counter)


def _build_leaves(pairs, lo, hi, counter, capacity):
    n = hi - lo
    if n == 0:
        return Empty()
    if n <= capacity:
        run = pairs[lo:hi]
        return Leaf(tuple(k for k, _ in run), tuple(v for _, v in run))
    degree = ideal_degree(n)
    size, extra = divmod(n, degree)
    children = []
    seps = []
    start = lo
    for i in range(degree):
        end = start + size + (1 if i < extra else 0)
        if i:
            seps.append(pairs[start][0])
        children.append(_build_leaves(pairs, start, end, None, capacity))
        start = end
    return Inner(n, seps, children, counter)


def create_ideal(frozen_root, from_key, key_count, counter=None, watch=None,
                 capacity=0):
    """Ideal subtree over the keys ranked ``[from_key, from_key + key_count)``
    of a frozen subtree."""
    leaves = collect_leaves(frozen_root, from_key, key_count, watch)
    return build_ideal(leaves, 0, key_count, counter, capacity)


def child_interval(key_count, index):
    """Rank window ``(from_key, count)`` of child ``index`` of an ideal root."""
    total = ideal_degree(key_count)
    size, remainder = divmod(key_count, total)
    from_key = size * index + min(index, remainder)
    return from_key, size + (1 if index < remainder else 0)


def create_ideal_collaborative(tree, op, key_count, counter=None,
                               leaves=None):
    """Agree on one replacement root for ``op`` and fill it cooperatively.

    Small subtrees are built whole and raced into ``op.new_target``.  Larger
    ones publish an empty root whose child slots are work items: helpers claim
    indices through the root's ``degree`` cursor, then sweep for slots that are
    still empty so a stalled claimer cannot hold up completion.

    ``leaves``, when given, is this helper's collected copy of all entries and
    replaces walks of the frozen subtree.
    """
    threshold = tree.config.collaboration_threshold
    capacity = tree.config.leaf_capacity
    small = key_count < threshold or key_count <= capacity
    if small:
        if leaves is None:
            candidate = create_ideal(op.target, 0, key_count, counter,
                                     watch=op, capacity=capacity)
        else:
            candidate = build_ideal(leaves, 0, key_count, counter, capacity)
    else:
        width = ideal_degree(key_count)
        candidate = Inner(key_count, [None] * (width - 1), [None] * width,
                          counter, degree=0)
    if not cas_new_target(op, candidate):
        candidate = op.new_target
    if small:
        return candidate
    root = candidate
    width = len(root.children)
    while True:
        index = root.degree
        if index >= width:
            break
        if cas_degree(root, index, index + 1):
            if hooks.enabled:
                hooks.fire("after_degree_claim", op, index)
            if not rebuild_and_set_child(tree, op, key_count, index, leaves):
                return root
    start = random.randrange(width) if tree.config.scatter_offset else 0
    slots = root.children
    for step in range(width):
        index = (start + step) % width
        if dcss_read(slots, index) is None:
            if not rebuild_and_set_child(tree, op, key_count, index, leaves):
                return root
    return root


def rebuild_and_set_child(tree, op, key_count, index, leaves=None):
    """Build child ``index`` of ``op.new_target`` and try to install it.

    Returns False only when the install failed on the new root's status,
    which means an enclosing rebuild has frozen it.
    """
    from_key, count = child_interval(key_count, index)
    capacity = tree.config.leaf_capacity
    if leaves is None:
        child = create_ideal(op.target, from_key, count, watch=op,
                             capacity=capacity)
    else:
        child = build_ideal(leaves, from_key, from_key + count, None, capacity)
    root = op.new_target
    if index < len(root.keys):
        # Separator = smallest key of the next child.
        if leaves is None:
            key = find_key_at_index(op.target, from_key + count)
        else:
            entry = leaves[from_key + count]
            key = entry[0] if capacity else entry.key
        # Every helper writes the same key; the read, write and status load
        # share the node's stripe so the hook sees one consistent step.
        with _locks[(id(root) >> 4) & _MASK]:
            status = root.status
            changed = root.keys[index] != key
            root.keys[index] = key
        if hooks.enabled:
            hooks.fire("key_write", root, index, key, changed, status)
    result = dcss(root.children, index, None, child, root, STATUS_INIT,
                  tree._reclaim)
    return result is not FAILED_AUX_ADDRESS
