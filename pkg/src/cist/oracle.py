"""Sequential reference map and correctness harnesses.

:class:`OracleSet` is the ground truth.  :func:`differential_run` replays a
seeded random op stream against a tree and the oracle and shrinks any
divergence to its shortest failing prefix.  :func:`check_linearizable` is an
exhaustive Wing-Gong search over small recorded histories.
"""

import itertools
import json
import random
import sys
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import hooks
from .invariants import audit

OPS = ("insert", "delete", "lookup")
MAX_HISTORY_EVENTS = 24


class OracleSet:
    """Single-threaded map with the same return conventions as the tree."""

    def __init__(self, items=()):
        self._data = dict(items)

    def insert(self, key, val):
        prev = self._data.get(key)
        self._data[key] = val
        return prev

    def delete(self, key):
        return self._data.pop(key, None)

    def lookup(self, key):
        return self._data.get(key)

    def apply(self, op, key, val=None):
        if op == "insert":
            return self.insert(key, val)
        if op == "delete":
            return self.delete(key)
        if op == "lookup":
            return self.lookup(key)
        raise ValueError(f"unknown op {op!r}")

    def items(self):
        return sorted(self._data.items())

    def __len__(self):
        return len(self._data)


def apply_op(tree, op, key, val=None):
    if op == "insert":
        return tree.insert(key, val)
    if op == "delete":
        return tree.delete(key)
    return tree.lookup(key)


# -- differential testing ----------------------------------------------------------

def random_ops(seed, op_count, key_range):
    """Uniform mix of insert/delete/lookup over ``range(key_range)``.

    Inserted values are the op index plus one, so every write is distinct.
    """
    rng = random.Random(seed)
    ops = []
    for i in range(op_count):
        op = OPS[rng.randrange(3)]
        key = rng.randrange(key_range)
        ops.append((op, key, i + 1 if op == "insert" else None))
    return ops


@dataclass
class Divergence:
    index: int
    op: str
    key: int
    expected: object
    actual: object


@dataclass
class DifferentialReport:
    seed: int
    op_count: int
    passed: bool
    divergence: Optional[Divergence] = None
    # Shortest failing prefix of the op stream; empty on success.
    trace: list = field(default_factory=list)
    problems: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _replay(ops, factory):
    """Run ``ops`` on a fresh tree; return (divergence, problems)."""
    tree = factory()
    ref = OracleSet()
    for i, (op, key, val) in enumerate(ops):
        got = apply_op(tree, op, key, val)
        want = ref.apply(op, key, val)
        if got != want:
            return Divergence(i, op, key, want, got), []
    problems = []
    final = tree.items()
    if final != ref.items():
        problems.append(f"final contents differ: {len(final)} keys in tree, "
                        f"{len(ref)} in oracle")
    problems.extend(audit(tree))
    return None, problems


def differential_run(seed, op_count, key_range=1024, factory=None):
    """Replay a seeded op stream against a tree and the oracle.

    ``factory`` builds the tree under test (default: a fresh ``Ist``).  A
    failure is shrunk by bisection to the shortest failing prefix.
    """
    if factory is None:
        from .tree import Ist
        factory = Ist
    ops = random_ops(seed, op_count, key_range)
    divergence, problems = _replay(ops, factory)
    if divergence is None and not problems:
        return DifferentialReport(seed, op_count, True)

    def fails(n):
        d, p = _replay(ops[:n], factory)
        return d is not None or bool(p)

    # fails(op_count) holds; find the least n with fails(n).
    lo, hi = 0, op_count
    while lo < hi:
        mid = (lo + hi) // 2
        if fails(mid):
            hi = mid
        else:
            lo = mid + 1
    divergence, problems = _replay(ops[:lo], factory)
    return DifferentialReport(seed, op_count, False, divergence,
                              [list(o) for o in ops[:lo]], problems)


# -- histories -----------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    thread: int
    op: str
    key: int
    arg: object
    result: object
    invoke: int
    response: int


class History:
    """Completed operations with global invoke/response tickets."""

    def __init__(self, events=()):
        self.events = list(events)

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def validate(self):
        """Raise ValueError unless the history is well formed."""
        seen = set()
        by_thread = {}
        for e in self.events:
            if e.op not in OPS:
                raise ValueError(f"unknown op {e.op!r}")
            if e.op == "insert" and e.arg is None:
                raise ValueError("insert without a value")
            if not e.invoke < e.response:
                raise ValueError(f"response before invocation: {e}")
            for t in (e.invoke, e.response):
                if t in seen:
                    raise ValueError(f"ticket {t} used twice")
                seen.add(t)
            by_thread.setdefault(e.thread, []).append(e)
        for thread, evs in by_thread.items():
            evs.sort(key=lambda e: e.invoke)
            for a, b in zip(evs, evs[1:]):
                if b.invoke < a.response:
                    raise ValueError(f"thread {thread} has overlapping ops")

    def to_jsonl(self):
        return "".join(json.dumps(asdict(e)) + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text):
        events = []
        for line in text.splitlines():
            line = line.strip()
            if line:
                events.append(Event(**json.loads(line)))
        return cls(events)


def check_linearizable(history, initial=None):
    """True iff some real-time-respecting order of ``history`` is legal for a
    map starting at ``initial`` (a dict, default empty)."""
    if not isinstance(history, History):
        history = History(history)
    if len(history) > MAX_HISTORY_EVENTS:
        raise ValueError(f"history has {len(history)} events, limit is "
                         f"{MAX_HISTORY_EVENTS}")
    history.validate()
    events = sorted(history.events, key=lambda e: e.invoke)
    n = len(events)
    full = (1 << n) - 1
    # must_precede[i]: events that responded before event i was invoked.
    must_precede = [0] * n
    for i, e in enumerate(events):
        for j, f in enumerate(events):
            if f.response < e.invoke:
                must_precede[i] |= 1 << j
    failed = set()

    def search(done, state):
        if done == full:
            return True
        memo = (done, state)
        if memo in failed:
            return False
        current = dict(state)
        for i in range(n):
            bit = 1 << i
            if done & bit or must_precede[i] & ~done:
                continue
            e = events[i]
            prev = current.get(e.key)
            if prev != e.result:
                continue
            if e.op == "lookup":
                nxt = state
            else:
                after = dict(current)
                if e.op == "insert":
                    after[e.key] = e.arg
                else:
                    after.pop(e.key, None)
                nxt = frozenset(after.items())
            if search(done | bit, nxt):
                return True
        failed.add(memo)
        return False

    return search(0, frozenset((initial or {}).items()))


class Recorder:
    """Thread-safe wrapper that logs each call with global tickets."""

    def __init__(self, tree):
        self.tree = tree
        self._ticket = itertools.count()
        self._events = []

    def call(self, thread, op, key, val=None):
        invoke = next(self._ticket)
        result = apply_op(self.tree, op, key, val)
        response = next(self._ticket)
        self._events.append(Event(thread, op, key, val, result, invoke,
                                  response))
        return result

    def history(self):
        return History(self._events)


_STALL_POINTS = ("dcss_installed", "before_update_dcss", "after_announce",
                 "after_mark", "after_next_mark", "after_degree_claim")


def _stall_injector(rng, probability, max_sleep):
    lock = threading.Lock()

    def stall(*_):
        with lock:
            hit = rng.random() < probability
            delay = rng.random() * max_sleep
        if hit:
            time.sleep(delay)
    return stall


def record_trial(seed, threads=4, ops_per_thread=6, key_range=8,
                 stall_probability=0.2, max_sleep=2e-4, config=None):
    """Run one small concurrent trial and return its history.

    Ops are pre-drawn from ``seed``; the schedule comes from the OS plus
    random sleeps injected at the tree's debug hook points.
    """
    from .tree import Ist
    rng = random.Random(seed)
    plans = [[(OPS[rng.randrange(3)], rng.randrange(key_range))
              for _ in range(ops_per_thread)] for _ in range(threads)]
    tree = Ist(config)
    rec = Recorder(tree)
    barrier = threading.Barrier(threads)
    errors = []

    def worker(t):
        try:
            barrier.wait()
            for n, (op, key) in enumerate(plans[t]):
                val = (t + 1) * 100 + n if op == "insert" else None
                rec.call(t, op, key, val)
        except BaseException as exc:
            errors.append(exc)

    stall = _stall_injector(random.Random(seed ^ 0x5EED), stall_probability,
                            max_sleep)
    handlers = {p: stall for p in _STALL_POINTS} if stall_probability else {}
    with hooks.installed(**handlers):
        workers = [threading.Thread(target=worker, args=(t,))
                   for t in range(threads)]
        for w in workers:
            w.start()
        for w in workers:
            w.join()
    if errors:
        raise errors[0]
    problems = audit(tree)
    if problems:
        raise AssertionError(f"audit failed after trial {seed}: {problems}")
    tree.close()
    return rec.history()


def linearizability_sweep(trials, seed=0, switch_interval=1e-5, **kw):
    """Record and check ``trials`` histories; return the failing seeds."""
    old = sys.getswitchinterval()
    sys.setswitchinterval(switch_interval)
    try:
        bad = []
        for t in range(trials):
            s = seed * 1_000_003 + t
            if not check_linearizable(record_trial(s, **kw)):
                bad.append(s)
        return bad
    finally:
        sys.setswitchinterval(old)
