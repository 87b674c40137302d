"""Prefill-then-measure benchmark driver."""

import collections
import contextlib
import gc
import hashlib
import os
import threading
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .footprint import PAIR_BYTES
from .tree import Ist, TreeConfig
from .workload import make_generator

BATCH = 1024


@contextlib.contextmanager
def gc_paused():
    """Suspend CPython's cycle collector, as ``timeit`` does.

    The tree is acyclic once retired nodes are poisoned, so reference
    counting alone reclaims it; the cycle collector only adds pauses that
    grow with the number of live nodes.
    """
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


@dataclass
class TrialReport:
    trial: int
    threads: int
    size: int
    update_ratio: float
    dist: str
    collaborative: bool
    wall_seconds: float
    total_ops: int
    throughput_ops_per_us: float
    lookups: int
    inserts: int
    deletes: int
    inserts_applied: int
    deletes_applied: int
    key_count: int
    avg_leaf_depth: float
    max_leaf_depth: int
    node_count: int
    empty_count: int
    footprint_bytes: int
    overhead_ratio: float
    root_rebuilds: int
    prefill_root_rebuilds: int
    rebuilds: int
    prefill_seconds: float
    final_key_hash: str
    audit_ok: bool
    conservation_ok: bool
    leaked: int
    problems: list = field(default_factory=list)

    @property
    def ok(self):
        return self.audit_ok and self.conservation_ok and self.leaked == 0

    def to_dict(self):
        d = asdict(self)
        d["ok"] = self.ok
        return d


class _WorkerResult:
    __slots__ = ("lookups", "inserts", "deletes", "inserts_applied",
                 "deletes_applied", "net", "error")

    def __init__(self):
        self.lookups = self.inserts = self.deletes = 0
        self.inserts_applied = self.deletes_applied = 0
        # key -> successful inserts of a new key minus successful deletes
        self.net = collections.Counter()
        self.error = None


def _pin_current_thread(index):
    # Best effort: Linux lets a thread set its own affinity by native id.
    try:
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(threading.get_native_id(),
                             {cpus[index % len(cpus)]})
    except (AttributeError, OSError):
        pass


def _prefill(tree, spec, rngs):
    """Each worker inserts drawn keys until it has added its quota."""
    quotas = [spec.size // spec.threads] * spec.threads
    for i in range(spec.size % spec.threads):
        quotas[i] += 1
    errors = []

    def fill(t):
        try:
            gen = make_generator(spec, rngs[t])
            need = quotas[t]
            while need:
                for key in gen.draw(min(BATCH, 2 * need)):
                    if tree.insert(key, key + 1) is None:
                        need -= 1
                        if not need:
                            break
        except BaseException as exc:
            errors.append(exc)

    _run_threads(fill, spec.threads, spec.pin)
    if errors:
        raise errors[0]


def _run_threads(target, count, pin=False):
    def wrapped(t):
        if pin:
            _pin_current_thread(t)
        target(t)

    if count == 1:
        wrapped(0)
        return
    workers = [threading.Thread(target=wrapped, args=(t,), name=f"w{t}")
               for t in range(count)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()


def _worker(tree, spec, rng, result, barrier, deadline_box, op_limit):
    gen = make_generator(spec, rng)
    half = spec.update_ratio / 2
    insert, delete, lookup = tree.insert, tree.delete, tree.lookup
    net = result.net
    done = 0
    barrier.wait()
    deadline = deadline_box[0]
    try:
        while True:
            if op_limit is None:
                if time.perf_counter() >= deadline:
                    break
                n = 64
            else:
                n = min(BATCH, op_limit - done)
                if n <= 0:
                    break
            keys = gen.draw(n)
            kinds = rng.random(n).tolist()
            for key, u in zip(keys, kinds):
                if u < half:
                    result.inserts += 1
                    if insert(key, key + 1) is None:
                        result.inserts_applied += 1
                        net[key] += 1
                elif u < spec.update_ratio:
                    result.deletes += 1
                    if delete(key) is not None:
                        result.deletes_applied += 1
                        net[key] -= 1
                else:
                    result.lookups += 1
                    lookup(key)
            done += n
    except BaseException as exc:
        result.error = exc


def _phase(tree, spec, rngs, seconds, op_limit):
    results = [_WorkerResult() for _ in range(spec.threads)]
    box = [0.0]

    def start():
        box[0] = time.perf_counter() + seconds

    barrier = threading.Barrier(spec.threads, action=start)

    def run(t):
        _worker(tree, spec, rngs[t], results[t], barrier, box, op_limit)

    t0 = time.perf_counter()
    _run_threads(run, spec.threads, spec.pin)
    wall = time.perf_counter() - t0
    for r in results:
        if r.error is not None:
            raise r.error
    return results, wall


def key_hash(keys):
    h = hashlib.sha256()
    for k in keys:
        h.update(k.to_bytes(8, "little"))
    return h.hexdigest()[:16]


def run_trial(spec, trial=0, config=None):
    """Prefill, optional warmup, measured phase, then audit the final tree."""
    spec.validate()
    if config is None:
        config = TreeConfig(collaborative=spec.collaborative,
                            leaf_capacity=spec.leaf_capacity)
    seq = np.random.SeedSequence([spec.seed, trial])
    prefill_seq, run_seq = seq.spawn(2)
    prefill_rngs = [np.random.default_rng(s)
                    for s in prefill_seq.spawn(spec.threads)]
    run_rngs = [np.random.default_rng(s) for s in run_seq.spawn(spec.threads)]
    tree = Ist(config)
    with gc_paused():
        t0 = time.perf_counter()
        _prefill(tree, spec, prefill_rngs)
        prefill_seconds = time.perf_counter() - t0
        initial = set(tree.keys())
        prefill_root = tree.stats.root_rebuilds.load()
        phases = []
        if spec.warmup > 0 and spec.ops is None:
            phases.append(_phase(tree, spec, run_rngs, spec.warmup, None)[0])
        results, wall = _phase(tree, spec, run_rngs, spec.duration, spec.ops)
        phases.append(results)
        report = _report(tree, spec, trial, initial, phases, results, wall,
                         prefill_root, prefill_seconds)
        tree.close()
        report.leaked = tree.reclaim.pending
    return report


def _report(tree, spec, trial, initial, phases, results, wall, prefill_root,
            prefill_seconds):
    problems = tree.audit()
    audit_ok = not problems
    net = collections.Counter()
    for phase in phases:
        for r in phase:
            net.update(r.net)
    final = tree.keys()
    expected = set(initial)
    conservation = True
    for key, delta in net.items():
        if delta == 1 and key not in expected:
            expected.add(key)
        elif delta == -1 and key in expected:
            expected.discard(key)
        elif delta != 0:
            conservation = False
            problems.append(f"key {key}: net change {delta} impossible")
    if set(final) != expected:
        conservation = False
        problems.append("final key set differs from prefill + inserts - deletes")
    depth = tree.depth_stats()
    footprint = tree.footprint_bytes()
    lookups = sum(r.lookups for r in results)
    inserts = sum(r.inserts for r in results)
    deletes = sum(r.deletes for r in results)
    total = lookups + inserts + deletes
    stats = tree.stats.snapshot()
    return TrialReport(
        trial=trial, threads=spec.threads, size=spec.size,
        update_ratio=spec.update_ratio, dist=spec.dist,
        collaborative=tree.config.collaborative, wall_seconds=wall,
        total_ops=total,
        throughput_ops_per_us=total / (wall * 1e6) if wall > 0 else 0.0,
        lookups=lookups, inserts=inserts, deletes=deletes,
        inserts_applied=sum(r.inserts_applied for r in results),
        deletes_applied=sum(r.deletes_applied for r in results),
        key_count=depth.key_count, avg_leaf_depth=depth.avg_leaf_depth,
        max_leaf_depth=depth.max_leaf_depth, node_count=depth.node_count,
        empty_count=depth.empty_count, footprint_bytes=footprint,
        overhead_ratio=(footprint / (PAIR_BYTES * depth.key_count)
                        if depth.key_count else 0.0),
        root_rebuilds=stats["root_rebuilds"] - prefill_root,
        prefill_root_rebuilds=prefill_root, rebuilds=stats["rebuilds"],
        prefill_seconds=prefill_seconds, final_key_hash=key_hash(final),
        audit_ok=audit_ok, conservation_ok=conservation, leaked=0,
        problems=problems[:20])


def run_benchmark(spec, config=None):
    """All trials of ``spec``; raises ValueError on an invalid spec."""
    spec.validate()
    return [run_trial(spec, t, config) for t in range(spec.trials)]
