"""Word-sized atomic primitives.

CPython exposes no compare-and-swap, so each primitive below runs under a
striped lock chosen by the identity of the object that owns the word.  A
stripe is held for a handful of bytecodes and never while calling out, which
is the same guarantee a hardware ``lock cmpxchg`` gives: the algorithms built
on top stay lock-free at their own level.
"""

import threading

_STRIPES = 256
_MASK = _STRIPES - 1
_locks = [threading.Lock() for _ in range(_STRIPES)]


def lock_for(obj):
    return _locks[(id(obj) >> 4) & _MASK]


def cas_item(seq, index, expected, new):
    """CAS on ``seq[index]`` comparing by identity."""
    with _locks[(id(seq) >> 4) & _MASK]:
        if seq[index] is expected:
            seq[index] = new
            return True
        return False


def cas_status(node, expected, new):
    with _locks[(id(node) >> 4) & _MASK]:
        if node.status == expected:
            node.status = new
            return True
        return False


def cas_degree(node, expected, new):
    with _locks[(id(node) >> 4) & _MASK]:
        if node.degree == expected:
            node.degree = new
            return True
        return False


def cas_new_target(op, new):
    """Publish ``new`` into ``op.new_target`` if it is still unset."""
    with _locks[(id(op) >> 4) & _MASK]:
        if op.new_target is None:
            op.new_target = new
            return True
        return False


def cas_outcome(desc, expected, new):
    with _locks[(id(desc) >> 4) & _MASK]:
        if desc.outcome == expected:
            desc.outcome = new
            return True
        return False


def fetch_add_count(node, delta=1):
    with _locks[(id(node) >> 4) & _MASK]:
        old = node.count
        node.count = old + delta
        return old


def fetch_add_next_mark(node, delta=1):
    with _locks[(id(node) >> 4) & _MASK]:
        old = node.next_mark
        node.next_mark = old + delta
        return old


class AtomicCounter:
    """A fetch-and-add integer."""

    __slots__ = ("_value", "_lock")

    def __init__(self, value=0):
        self._value = value
        self._lock = threading.Lock()

    def fetch_add(self, delta=1):
        with self._lock:
            old = self._value
            self._value = old + delta
            return old

    def load(self):
        return self._value
