"""Allocator-independent memory accounting from fixed node layouts.

Sizes model a word-packed native layout (8-byte words, one header word per
heap object), not CPython object sizes, so results are comparable across
runtimes.
"""

from .dcss import dcss_read
from .nodes import Empty, Inner, Leaf, Rebuild, Single

WORD = 8
CACHE_LINE = 64
PAIR_BYTES = 2 * WORD  # one key plus one value

EMPTY_BYTES = WORD
SINGLE_BYTES = 3 * WORD
REBUILD_BYTES = 5 * WORD
# header and length, then the pairs
LEAF_FIXED_BYTES = 2 * WORD
# header, init_size, degree, status, count, next_mark
INNER_FIXED_BYTES = 6 * WORD


def inner_bytes(degree, counter_stripes=0):
    """Inner of ``degree`` children: fixed fields, separators, child slots and
    cache-line padded multicounter cells when present."""
    return (INNER_FIXED_BYTES + WORD * max(degree - 1, 0) + WORD * degree
            + CACHE_LINE * counter_stripes)


def node_bytes(node):
    cls = node.__class__
    if cls is Single:
        return SINGLE_BYTES
    if cls is Leaf:
        return LEAF_FIXED_BYTES + PAIR_BYTES * len(node.keys)
    if cls is Empty:
        return EMPTY_BYTES
    if cls is Rebuild:
        return REBUILD_BYTES
    stripes = node.counter.stripes if node.counter is not None else 0
    return inner_bytes(len(node.children), stripes)


def footprint_bytes(tree):
    """Bytes held by every node reachable from the anchor.  Quiescent only."""
    total = node_bytes(tree.anchor)
    stack = [dcss_read(tree.anchor.children, 0)]
    while stack:
        n = stack.pop()
        total += node_bytes(n)
        cls = n.__class__
        if cls is Inner:
            slots = n.children
            for i in range(len(slots)):
                stack.append(dcss_read(slots, i))
        elif cls is Rebuild:
            stack.append(n.target)
    return total


def overhead_ratio(tree, key_count=None):
    """Footprint relative to the raw key/value payload."""
    if key_count is None:
        key_count = len(tree)
    if key_count == 0:
        return float("inf")
    return footprint_bytes(tree) / (PAIR_BYTES * key_count)
