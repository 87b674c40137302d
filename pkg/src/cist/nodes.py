"""Node algebra: Empty, Single, Leaf, Inner, and the Rebuild announcement.

``Leaf`` only appears when leaf inlining is enabled, in which case it replaces
``Single`` entirely.

The status word of an inner node packs ``[count, finished, started]`` as
``count << 2 | finished << 1 | started``.  Its only legal history is
``INIT -> STARTED -> finished(count)``.
"""

MAX_KEY = 2**64 - 1

STATUS_INIT = 0
STATUS_STARTED = 0b01
_FINISHED = 0b10


def finished_status(count):
    return (count << 2) | _FINISHED | STATUS_STARTED


def unpack_status(word):
    """Return ``(count, finished, started)``."""
    return word >> 2, bool(word & _FINISHED), bool(word & STATUS_STARTED)


def is_finished(word):
    return word & _FINISHED != 0


class Empty:
    __slots__ = ("_rc",)

    def __init__(self):
        self._rc = 0

    def _poison(self):
        pass

    def __repr__(self):
        return "Empty()"


class Single:
    __slots__ = ("key", "val", "_rc")

    def __init__(self, key, val):
        self.key = key
        self.val = val
        self._rc = 0

    def _poison(self):
        del self.key
        del self.val

    def __repr__(self):
        return f"Single({self.key!r}, {self.val!r})"


class Leaf:
    """Immutable sorted run of one or more key/value pairs."""

    __slots__ = ("keys", "vals", "_rc")

    def __init__(self, keys, vals):
        self.keys = keys
        self.vals = vals
        self._rc = 0

    def _poison(self):
        self.keys = None
        self.vals = None

    def __repr__(self):
        return f"Leaf({list(zip(self.keys, self.vals))!r})"


class Inner:
    """Inner node with an immutable separator array and mutable child slots.

    ``counter`` is a :class:`~cist.multicounter.MultiCounter` when the node
    sits directly below the anchor, otherwise ``None`` and ``count`` is used.
    ``degree`` doubles as the claim cursor while a collaborative build fills
    the node; it equals ``len(children)`` once published.
    """

    __slots__ = ("init_size", "degree", "keys", "children", "status", "count",
                 "next_mark", "counter", "_rc")

    def __init__(self, init_size, keys, children, counter=None, degree=None):
        self.init_size = init_size
        self.keys = keys
        self.children = children
        self.degree = len(children) if degree is None else degree
        self.status = STATUS_INIT
        self.count = 0
        self.next_mark = 0
        self.counter = counter
        self._rc = 0

    def update_count(self):
        c = self.counter
        return self.count if c is None else c.read()

    def _poison(self):
        self.keys = None
        self.children = None
        self.counter = None

    def __repr__(self):
        return (f"Inner(init_size={self.init_size}, keys={self.keys!r}, "
                f"status={unpack_status(self.status)})")


class Rebuild:
    """Announcement of a subtree rebuild, parked in ``parent.children[index]``."""

    __slots__ = ("target", "new_target", "parent", "index", "_rc")

    def __init__(self, target, parent, index):
        self.target = target
        self.new_target = None
        self.parent = parent
        self.index = index
        self._rc = 0

    def _poison(self):
        self.target = self.new_target = self.parent = None

    def __repr__(self):
        return f"Rebuild(index={self.index}, done={self.new_target is not None})"
