"""Concurrent interpolation search tree.

Lookups are wait-free; inserts and deletes are lock-free.  The logical root
hangs below a degree-1 sentinel :class:`~cist.nodes.Inner` (the anchor) so that
whole-tree rebuilds go through the same parent/index/status protocol as any
other subtree.
"""

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Optional

from . import hooks
from ._atomic import AtomicCounter, fetch_add_count
from .dcss import FAILED_MAIN_ADDRESS, SUCCESS, DcssDescriptor, dcss, dcss_read
from .multicounter import MultiCounter
from .nodes import MAX_KEY, STATUS_INIT, Empty, Inner, Leaf, Rebuild, Single
from .reclaim import ReclaimDomain
from .rebuild import announce, build_ideal, help_rebuild, retire_subtree


@dataclass(frozen=True)
class TreeConfig:
    """Tuning knobs.  ``leaf_capacity`` > 0 stores keys in sorted Leaf arrays
    of up to that many pairs instead of one Single node per key."""
    rebuild_threshold: float = 0.25
    collaboration_threshold: int = 48
    multicounter_stripes: Optional[int] = None
    scatter_offset: bool = True
    collaborative: bool = True
    reclaim_advance_every: Optional[int] = None
    leaf_capacity: int = 0

    def __post_init__(self):
        if not 0 < self.rebuild_threshold < 1:
            raise ValueError("rebuild_threshold must lie in (0, 1)")
        if self.collaboration_threshold < 2:
            raise ValueError("collaboration_threshold must be >= 2")
        if self.multicounter_stripes is not None and self.multicounter_stripes < 1:
            raise ValueError("multicounter_stripes must be >= 1")
        if self.leaf_capacity < 0 or self.leaf_capacity == 1:
            raise ValueError("leaf_capacity must be 0 (off) or >= 2")


@dataclass
class TreeStats:
    announced: AtomicCounter = field(default_factory=AtomicCounter)
    rebuilds: AtomicCounter = field(default_factory=AtomicCounter)
    root_rebuilds: AtomicCounter = field(default_factory=AtomicCounter)

    def snapshot(self):
        return {"announced": self.announced.load(),
                "rebuilds": self.rebuilds.load(),
                "root_rebuilds": self.root_rebuilds.load()}


@dataclass(frozen=True)
class DepthStats:
    """Leaf depths are pointer hops from the logical root to the node holding
    each key, averaged over keys.

    Rebuild descriptors add no hops.  With no keys both depths are 0.
    """
    avg_leaf_depth: float
    max_leaf_depth: int
    node_count: int
    empty_count: int
    key_count: int


def interpolation_search(key, node):
    """Index of the child of ``node`` whose cover interval contains ``key``."""
    return _child_index(node.keys, key)


def _child_index(keys, key):
    last = len(keys) - 1
    if last < 0:
        return 0
    lo = keys[0]
    if key < lo:
        return 0
    hi = keys[last]
    if key >= hi:
        return last + 1
    # lo <= key < hi, so the answer lies in [1, last] and hi > lo.
    i = (key - lo) * last // (hi - lo)
    if i < 1:
        i = 1
    while keys[i] <= key:
        i += 1
    while keys[i - 1] > key:
        i -= 1
    return i


class Ist:
    """Ordered map from unsigned 64-bit keys to values.

    ``None`` is reserved to mean "absent" and cannot be stored as a value.
    """

    def __init__(self, config=None):
        self.config = config or TreeConfig()
        self.anchor = Inner(0, [], [Empty()])
        self.stats = TreeStats()
        self._reclaim = ReclaimDomain(self.config.reclaim_advance_every)

    @property
    def reclaim(self):
        return self._reclaim

    def _new_root_counter(self):
        return MultiCounter(self.config.multicounter_stripes)

    # -- queries -----------------------------------------------------------------

    def lookup(self, key, default=None):
        reclaim = self._reclaim
        guard = reclaim.pin()
        try:
            n = dcss_read(self.anchor.children, 0)
            while True:
                cls = n.__class__
                if cls is Inner:
                    slots = n.children
                    index = _child_index(n.keys, key)
                    n = slots[index]
                    if n.__class__ is DcssDescriptor:
                        n = dcss_read(slots, index)
                elif cls is Single:
                    return n.val if n.key == key else default
                elif cls is Leaf:
                    keys = n.keys
                    i = bisect_left(keys, key)
                    if i < len(keys) and keys[i] == key:
                        return n.vals[i]
                    return default
                elif cls is Empty:
                    return default
                else:
                    n = n.target
        finally:
            reclaim.unpin(guard)

    def __contains__(self, key):
        return self.lookup(key) is not None

    def __getitem__(self, key):
        val = self.lookup(key)
        if val is None:
            raise KeyError(key)
        return val

    # -- updates -----------------------------------------------------------------

    def insert(self, key, val):
        """Bind ``key`` to ``val``; return the previous value or None."""
        if not 0 <= key <= MAX_KEY:
            raise ValueError(f"key out of 64-bit unsigned range: {key!r}")
        if val is None:
            raise ValueError("None cannot be stored as a value")
        return self._update(key, val)

    def delete(self, key):
        """Remove ``key``; return its value or None if it was absent."""
        if not 0 <= key <= MAX_KEY:
            return None
        return self._update(key, None)

    def _update(self, key, val):
        reclaim = self._reclaim
        anchor = self.anchor
        guard = reclaim.pin()
        try:
            while True:
                node = anchor
                path = []
                while True:
                    slots = node.children
                    index = _child_index(node.keys, key)
                    child = slots[index]
                    if child.__class__ is DcssDescriptor:
                        child = dcss_read(slots, index)
                    cls = child.__class__
                    if cls is Inner:
                        path.append((child, index))
                        node = child
                        continue
                    if cls is Rebuild:
                        help_rebuild(self, child)
                        break
                    if cls is Single and child.key == key:
                        prev = child.val
                        repl = Empty() if val is None else Single(key, val)
                    elif cls is Leaf:
                        prev, repl = self._leaf_update(child, key, val, node)
                        if repl is None:
                            return None
                    elif val is None:
                        # Absent key: no write, no count increment.
                        return None
                    else:
                        prev = None
                        repl = self._create_from(child, key, val, node)
                    if hooks.enabled:
                        hooks.fire("before_update_dcss", self, node, index)
                    result = dcss(slots, index, child, repl, node, STATUS_INIT,
                                  reclaim)
                    if result is SUCCESS:
                        if repl.__class__ is not Inner or cls is Leaf:
                            reclaim.retire(child)
                        self._after_update(path)
                        return prev
                    if result is FAILED_MAIN_ADDRESS:
                        continue
                    break
        finally:
            reclaim.unpin(guard)

    def _create_from(self, child, key, val, parent):
        if child.__class__ is Empty:
            if self.config.leaf_capacity:
                return Leaf((key,), (val,))
            return Single(key, val)
        new = Single(key, val)
        # The displaced Single is immutable and moves into the new pair.
        counter = self._new_root_counter() if parent is self.anchor else None
        if key < child.key:
            return Inner(2, [child.key], [new, child], counter)
        return Inner(2, [key], [child, new], counter)

    def _leaf_update(self, leaf, key, val, parent):
        """``(previous value, replacement)`` for an update landing in ``leaf``;
        the replacement is None when there is nothing to write."""
        keys, vals = leaf.keys, leaf.vals
        i = bisect_left(keys, key)
        if i < len(keys) and keys[i] == key:
            prev = vals[i]
            if val is not None:
                return prev, Leaf(keys, vals[:i] + (val,) + vals[i + 1:])
            if len(keys) == 1:
                return prev, Empty()
            return prev, Leaf(keys[:i] + keys[i + 1:], vals[:i] + vals[i + 1:])
        if val is None:
            return None, None
        keys = keys[:i] + (key,) + keys[i:]
        vals = vals[:i] + (val,) + vals[i:]
        capacity = self.config.leaf_capacity
        if len(keys) <= capacity:
            return None, Leaf(keys, vals)
        # Full: split into an ideal subtree of smaller leaves.
        counter = self._new_root_counter() if parent is self.anchor else None
        return None, build_ideal(list(zip(keys, vals)), 0, len(keys), counter,
                                 capacity)

    def _after_update(self, path):
        for node, _ in path:
            counter = node.counter
            if counter is None:
                fetch_add_count(node)
            else:
                counter.increment()
        threshold = self.config.rebuild_threshold
        parent = self.anchor
        for node, index in path:
            counter = node.counter
            count = node.count if counter is None else counter.read()
            if count >= threshold * node.init_size:
                announce(self, node, parent, index)
                break
            parent = node

    # -- whole-tree views (quiescent) --------------------------------------------

    def root(self):
        return dcss_read(self.anchor.children, 0)

    def items(self):
        """In-order ``(key, value)`` pairs.  Requires quiescence."""
        out = []
        stack = [self.root()]
        while stack:
            n = stack.pop()
            cls = n.__class__
            if cls is Inner:
                slots = n.children
                for i in range(len(slots) - 1, -1, -1):
                    stack.append(dcss_read(slots, i))
            elif cls is Single:
                out.append((n.key, n.val))
            elif cls is Leaf:
                out.extend(zip(n.keys, n.vals))
            elif cls is Rebuild:
                stack.append(n.target)
        return out

    def keys(self):
        return [k for k, _ in self.items()]

    def __len__(self):
        return len(self.items())

    def depth_stats(self):
        """Exact depth and node statistics.  Requires quiescence."""
        total = 0
        keys = 0
        max_depth = 0
        nodes = 0
        empties = 0
        stack = [(self.root(), 0)]
        while stack:
            n, depth = stack.pop()
            cls = n.__class__
            if cls is Rebuild:
                stack.append((n.target, depth))
                continue
            nodes += 1
            if cls is Inner:
                slots = n.children
                for i in range(len(slots)):
                    stack.append((dcss_read(slots, i), depth + 1))
            elif cls is Single:
                keys += 1
                total += depth
                if depth > max_depth:
                    max_depth = depth
            elif cls is Leaf:
                keys += len(n.keys)
                total += depth * len(n.keys)
                if depth > max_depth:
                    max_depth = depth
            else:
                empties += 1
        return DepthStats(total / keys if keys else 0.0, max_depth, nodes,
                          empties, keys)

    def footprint_bytes(self):
        from .footprint import footprint_bytes
        return footprint_bytes(self)

    def audit(self):
        from .invariants import audit
        return audit(self)

    def close(self):
        """Retire the live tree and free everything.  Requires quiescence."""
        anchor = self.anchor
        root = dcss_read(anchor.children, 0)
        anchor.children[0] = Empty()
        retire_subtree(self._reclaim, root)
        self._reclaim.drain()
