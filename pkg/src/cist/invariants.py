"""Structural audit: search-tree order, key presence, acyclicity, status words.

Run at quiescence.  :func:`audit` returns a list of human-readable problems;
an empty list means the tree is valid.
"""

from .dcss import SUCCEEDED, DcssDescriptor
from .nodes import Empty, Inner, Leaf, Rebuild, Single, unpack_status


class InvariantViolation(AssertionError):
    pass


def _status_problem(word):
    count, finished, started = unpack_status(word)
    if finished and not started:
        return "finished without started"
    if count and not finished:
        return "count set before finished"
    return None


def audit(tree, root=None):
    """Check a (sub)tree, by default the whole tree below the anchor."""
    errors = []
    seen = set()
    seen_keys = set()
    if root is None:
        root = tree.anchor.children[0]
    capacity = tree.config.leaf_capacity if tree is not None else 0
    # (node, lo, hi); None bounds are infinite.
    stack = [(root, None, None)]
    while stack:
        node, lo, hi = stack.pop()
        if node.__class__ is DcssDescriptor:
            node = node.new if node.outcome == SUCCEEDED else node.expected
        if id(node) in seen:
            errors.append(f"node reached twice (cycle or sharing): {node!r}")
            continue
        seen.add(id(node))
        if getattr(node, "_rc", 0) != 0:
            errors.append(f"retired node still reachable: {node!r}")
        cls = node.__class__
        if cls is Rebuild:
            stack.append((node.target, lo, hi))
        elif cls is Single:
            k = node.key
            if (lo is not None and k < lo) or (hi is not None and k >= hi):
                errors.append(f"key {k} outside its cover [{lo}, {hi})")
            if k in seen_keys:
                errors.append(f"key {k} reachable more than once")
            seen_keys.add(k)
        elif cls is Leaf:
            keys = node.keys
            if not keys or len(keys) != len(node.vals):
                errors.append(f"malformed leaf: {node!r}")
                continue
            if any(keys[i] >= keys[i + 1] for i in range(len(keys) - 1)):
                errors.append(f"leaf keys not strictly increasing: {keys}")
            if capacity and len(keys) > capacity:
                errors.append(f"leaf holds {len(keys)} keys, capacity "
                              f"{capacity}")
            if (lo is not None and keys[0] < lo) or (hi is not None
                                                     and keys[-1] >= hi):
                errors.append(f"leaf keys {keys[0]}..{keys[-1]} outside "
                              f"cover [{lo}, {hi})")
            dup = seen_keys.intersection(keys)
            if dup:
                errors.append(f"keys {sorted(dup)[:5]} reachable more than "
                              f"once")
            seen_keys.update(keys)
        elif cls is Inner:
            keys = node.keys
            children = node.children
            if len(children) != len(keys) + 1 or len(children) < 2:
                errors.append(f"bad arity: {len(keys)} keys, "
                              f"{len(children)} children")
                continue
            if any(keys[i] >= keys[i + 1] for i in range(len(keys) - 1)):
                errors.append(f"separators not strictly increasing: {keys}")
            elif keys and ((lo is not None and keys[0] < lo)
                           or (hi is not None and keys[-1] >= hi)):
                errors.append(f"separators {keys[0]}..{keys[-1]} outside "
                              f"cover [{lo}, {hi})")
            problem = _status_problem(node.status)
            if problem:
                errors.append(f"illegal status word: {problem}")
            bounds = [lo] + list(keys) + [hi]
            for i, child in enumerate(children):
                if child is None:
                    errors.append("unfilled child slot")
                    continue
                stack.append((child, bounds[i], bounds[i + 1]))
        elif cls is not Empty:
            errors.append(f"foreign object in tree: {node!r}")
    return errors


def shape(node):
    """Nested-tuple rendering of a quiescent subtree, for comparisons."""
    if node.__class__ is DcssDescriptor:
        node = node.new if node.outcome == SUCCEEDED else node.expected
    cls = node.__class__
    if cls is Single:
        return ("single", node.key, node.val)
    if cls is Leaf:
        return ("leaf", tuple(node.keys), tuple(node.vals))
    if cls is Empty:
        return ("empty",)
    if cls is Rebuild:
        return ("rebuild", shape(node.target))
    return ("inner", node.init_size, tuple(node.keys),
            tuple(shape(c) for c in node.children))


def assert_valid(tree):
    errors = audit(tree)
    if errors:
        raise InvariantViolation("; ".join(errors[:10]))
