"""Epoch-based deferred reclamation.

Python's garbage collector already makes use-after-free impossible, so
"freeing" here means poisoning: a freed node has its fields cleared, and any
later dereference by a thread that should not hold it fails loudly.  That turns
the domain into a use-after-free detector for the tree's retire discipline.

Every retirable object carries an ``_rc`` slot: 0 live, 1 retired, 2 freed.
"""

import collections
import os
import threading
import weakref


LIVE, RETIRED, FREED = 0, 1, 2


def _default_advance_every():
    return 1 if os.environ.get("IST_RECLAIM_EAGER") == "1" else 256


class _ThreadRecord:
    __slots__ = ("active", "epoch", "depth", "limbo", "since_advance",
                 "retired")

    def __init__(self):
        self.active = False
        self.epoch = 0
        self.depth = 0
        self.limbo = collections.deque()
        self.since_advance = 0
        self.retired = 0


class _Owner:
    __slots__ = ("rec", "__weakref__")

    def __init__(self, rec):
        self.rec = rec


class ReclaimDomain:
    """Per-thread limbo lists guarded by a global epoch.

    An object retired in epoch ``e`` is freed once the global epoch reaches
    ``e + 2``; the epoch only advances when every pinned thread has observed
    the current one.
    """

    def __init__(self, advance_every=None, on_free=None):
        if advance_every is None:
            advance_every = _default_advance_every()
        if advance_every < 1:
            raise ValueError("advance_every must be >= 1")
        self.advance_every = advance_every
        self.on_free = on_free
        self.epoch = 0
        self.freed = 0
        self.advances = 0
        self._records = []
        self._spare = []
        self._orphans = collections.deque()
        self._local = threading.local()
        self._lock = threading.Lock()

    # -- thread registration -------------------------------------------------

    def _register(self):
        with self._lock:
            rec = self._spare.pop() if self._spare else _ThreadRecord()
            if rec not in self._records:
                self._records.append(rec)
        owner = _Owner(rec)
        weakref.finalize(owner, self._release, rec)
        self._local.owner = owner
        self._local.rec = rec
        return rec

    def _release(self, rec):
        # Runs when the owning thread's locals are torn down.
        with self._lock:
            rec.active = False
            rec.depth = 0
            self._orphans.extend(rec.limbo)
            rec.limbo.clear()
            rec.since_advance = 0
            self._spare.append(rec)

    def _record(self):
        try:
            return self._local.rec
        except AttributeError:
            return self._register()

    # -- critical sections ---------------------------------------------------

    def pin(self):
        """Enter a critical section; returns the guard to pass to unpin."""
        try:
            rec = self._local.rec
        except AttributeError:
            rec = self._register()
        if rec.depth == 0:
            rec.active = True
            rec.epoch = self.epoch
        rec.depth += 1
        return rec

    def unpin(self, rec):
        assert rec.depth > 0, "unpin without matching pin"
        rec.depth -= 1
        if rec.depth == 0:
            rec.active = False

    def guard(self):
        return _Guard(self)

    # -- retirement ----------------------------------------------------------

    def retire(self, obj):
        assert obj._rc == LIVE, f"double retire of {type(obj).__name__}"
        obj._rc = RETIRED
        try:
            rec = self._local.rec
        except AttributeError:
            rec = self._register()
        rec.retired += 1
        rec.limbo.append((self.epoch, (obj,)))
        rec.since_advance += 1
        if rec.since_advance >= self.advance_every:
            rec.since_advance = 0
            self.try_advance()
            self._collect((rec,))

    def retire_all(self, objs):
        """Retire a batch of unlinked objects as one limbo entry."""
        try:
            rec = self._local.rec
        except AttributeError:
            rec = self._register()
        for obj in objs:
            assert obj._rc == LIVE, f"double retire of {type(obj).__name__}"
            obj._rc = RETIRED
        n = len(objs)
        if not n:
            return
        rec.limbo.append((self.epoch, objs))
        rec.retired += n
        rec.since_advance += n
        if rec.since_advance >= self.advance_every:
            rec.since_advance = 0
            self.try_advance()
            self._collect((rec,))

    def try_advance(self):
        """Advance the global epoch if no pinned thread lags behind it."""
        e = self.epoch
        for rec in list(self._records):
            if rec.active and rec.epoch != e:
                return False
        with self._lock:
            if self.epoch != e:
                return False
            self.epoch = e + 1
            self.advances += 1
        return True

    def _collect(self, records):
        with self._lock:
            safe = self.epoch - 2
            for rec in records:
                _drain_until(rec.limbo, safe, self._free)
            _drain_until(self._orphans, safe, self._free)

    def advance(self):
        """Try one epoch advance, then free everything that became safe."""
        moved = self.try_advance()
        self._collect(list(self._records))
        return moved

    def _free(self, batch):
        on_free = self.on_free
        for obj in batch:
            obj._rc = FREED
            obj._poison()
        if on_free is not None:
            for obj in batch:
                on_free(obj)
        self.freed += len(batch)

    def drain(self):
        """Free every retired object.  Caller guarantees quiescence."""
        with self._lock:
            for rec in self._records:
                assert not rec.active, "drain while a thread is pinned"
                _drain_until(rec.limbo, float("inf"), self._free)
            _drain_until(self._orphans, float("inf"), self._free)

    @property
    def retired(self):
        return sum(rec.retired for rec in list(self._records))

    @property
    def pending(self):
        """Retired but not yet freed."""
        return self.retired - self.freed

    def limbo_sizes(self):
        """Objects waiting in each thread's limbo, then in the orphan list."""
        return ([sum(len(b) for _, b in r.limbo) for r in self._records]
                + [sum(len(b) for _, b in self._orphans)])


def _drain_until(limbo, safe_epoch, free):
    while limbo and limbo[0][0] <= safe_epoch:
        free(limbo.popleft()[1])


class _Guard:
    __slots__ = ("_domain", "_rec")

    def __init__(self, domain):
        self._domain = domain
        self._rec = None

    def __enter__(self):
        self._rec = self._domain.pin()
        return self

    def __exit__(self, *exc):
        self._domain.unpin(self._rec)
        return False
