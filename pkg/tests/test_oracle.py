import pytest

import cist.rebuild
from cist import Ist
from cist.oracle import (MAX_HISTORY_EVENTS, Event, History, OracleSet,
                         Recorder, _replay, check_linearizable, differential_run,
                         linearizability_sweep, random_ops, record_trial)


def E(thread, op, key, arg, result, invoke, response):
    return Event(thread, op, key, arg, result, invoke, response)


LINEARIZABLE = {
    "sequential insert then lookup": [
        E(0, "insert", 5, "v5", None, 0, 1), E(0, "lookup", 5, None, "v5", 2, 3)],
    "overlapping lookup sees insert": [
        E(0, "insert", 5, "v5", None, 0, 3), E(1, "lookup", 5, None, "v5", 1, 2)],
    "overlapping lookup misses insert": [
        E(0, "insert", 5, "v5", None, 0, 3), E(1, "lookup", 5, None, None, 1, 2)],
    "delete on empty": [E(0, "delete", 1, None, None, 0, 1)],
    "nested upsert sees outer insert": [
        E(0, "insert", 1, "a", None, 0, 3), E(1, "insert", 1, "b", "a", 1, 2)],
    "lookup before concurrent delete": [
        E(0, "insert", 2, "x", None, 0, 1), E(0, "delete", 2, None, "x", 2, 5),
        E(1, "lookup", 2, None, "x", 3, 4)],
    "lookup after concurrent delete": [
        E(0, "insert", 2, "x", None, 0, 1), E(0, "delete", 2, None, "x", 2, 5),
        E(1, "lookup", 2, None, None, 3, 4)],
    "upsert chain": [
        E(0, "insert", 1, "a", None, 0, 1), E(1, "insert", 1, "b", "a", 2, 3),
        E(2, "lookup", 1, None, "b", 4, 5)],
    "insert delete lookup all overlapping": [
        E(0, "insert", 3, "p", None, 0, 5), E(1, "delete", 3, None, "p", 1, 4),
        E(2, "lookup", 3, None, None, 2, 3)],
    "independent keys interleaved": [
        E(0, "insert", 1, "a", None, 0, 2), E(1, "insert", 2, "b", None, 1, 3),
        E(0, "lookup", 2, None, "b", 4, 5), E(1, "delete", 1, None, "a", 6, 7)],
}

NOT_LINEARIZABLE = {
    "lookup answers before insert invoked": [
        E(1, "lookup", 5, None, "v5", 0, 1), E(0, "insert", 5, "v5", None, 2, 3)],
    "lookup misses completed insert": [
        E(0, "insert", 5, "a", None, 0, 1), E(1, "lookup", 5, None, None, 2, 3)],
    "two inserts both see absent": [
        E(0, "insert", 1, "a", None, 0, 3), E(1, "insert", 1, "b", None, 1, 2)],
    "delete returns never-inserted value": [E(0, "delete", 1, None, "a", 0, 1)],
    "double delete": [
        E(0, "insert", 1, "a", None, 0, 1), E(0, "delete", 1, None, "a", 2, 3),
        E(1, "delete", 1, None, "a", 4, 5)],
    "upsert misses previous value": [
        E(0, "insert", 1, "a", None, 0, 1), E(1, "insert", 1, "b", None, 2, 3)],
    "lookup returns unwritten value": [
        E(0, "insert", 1, "a", None, 0, 3), E(1, "lookup", 1, None, "b", 1, 2)],
    "lookup sees deleted value": [
        E(0, "insert", 1, "a", None, 0, 1), E(0, "delete", 1, None, "a", 2, 3),
        E(1, "lookup", 1, None, "a", 4, 5)],
    "completed insert lost": [
        E(0, "insert", 1, "a", None, 0, 1), E(0, "insert", 2, "b", None, 2, 3),
        E(1, "lookup", 2, None, "b", 4, 5), E(1, "lookup", 1, None, None, 6, 7)],
    "value appears then vanishes": [
        E(0, "insert", 1, "a", None, 0, 7), E(1, "lookup", 1, None, "a", 1, 2),
        E(1, "lookup", 1, None, None, 3, 4)],
}


@pytest.mark.parametrize("name", sorted(LINEARIZABLE))
def test_linearizable_corpus(name):
    assert check_linearizable(LINEARIZABLE[name]) is True


@pytest.mark.parametrize("name", sorted(NOT_LINEARIZABLE))
def test_non_linearizable_corpus(name):
    assert check_linearizable(NOT_LINEARIZABLE[name]) is False


def test_initial_state():
    h = [E(0, "lookup", 4, None, "z", 0, 1)]
    assert check_linearizable(h, initial={4: "z"})
    assert not check_linearizable(h)


def test_empty_history():
    assert check_linearizable([])


@pytest.mark.parametrize("events,match", [
    ([E(0, "upsert", 1, 1, None, 0, 1)], "unknown op"),
    ([E(0, "insert", 1, None, None, 0, 1)], "without a value"),
    ([E(0, "lookup", 1, None, None, 1, 1)], "response before"),
    ([E(0, "lookup", 1, None, None, 0, 1), E(1, "lookup", 1, None, None, 1, 2)],
     "used twice"),
    ([E(0, "lookup", 1, None, None, 0, 3), E(0, "lookup", 2, None, None, 1, 2)],
     "overlapping"),
])
def test_malformed_histories_rejected(events, match):
    with pytest.raises(ValueError, match=match):
        check_linearizable(events)


def test_oversized_history_rejected():
    events = [E(0, "lookup", 0, None, None, 2 * i, 2 * i + 1)
              for i in range(MAX_HISTORY_EVENTS + 1)]
    with pytest.raises(ValueError, match="limit"):
        check_linearizable(events)


def test_jsonl_round_trip():
    h = record_trial(3)
    again = History.from_jsonl(h.to_jsonl())
    assert again.events == h.events
    assert len(again) == 24


def test_recorder_tickets_are_ordered():
    rec = Recorder(Ist())
    rec.call(0, "insert", 1, "a")
    assert rec.call(0, "lookup", 1) == "a"
    h = rec.history()
    h.validate()
    assert [(e.invoke, e.response) for e in h] == [(0, 1), (2, 3)]


def test_recorded_trials_are_linearizable():
    assert linearizability_sweep(150, seed=11) == []


def test_recorded_trials_without_stalls():
    assert linearizability_sweep(50, seed=12, stall_probability=0) == []


# -- differential ----------------------------------------------------------------

def test_oracle_set_conventions():
    ref = OracleSet()
    assert ref.insert(1, "a") is None
    assert ref.insert(1, "b") == "a"
    assert ref.lookup(1) == "b"
    assert ref.delete(1) == "b"
    assert ref.delete(1) is None
    with pytest.raises(ValueError):
        ref.apply("pop", 1)


def test_random_ops_are_deterministic():
    assert random_ops(4, 500, 64) == random_ops(4, 500, 64)
    assert random_ops(4, 500, 64) != random_ops(5, 500, 64)


def test_differential_seed_zero():
    report = differential_run(0, 100_000, 1024)
    assert report.passed, report.to_dict()
    assert report.trace == [] and report.divergence is None


def test_zero_ops_passes():
    assert differential_run(0, 0).passed


def test_injected_fault_is_caught_and_shrunk(monkeypatch):
    real = cist.rebuild.build_ideal

    def lossy(leaves, lo=0, hi=None, counter=None, capacity=0):
        if hi is None:
            hi = len(leaves)
        # Drop the last key of any rebuild over at least 20 keys.
        if hi - lo >= 20:
            hi -= 1
        return real(leaves, lo, hi, counter, capacity)

    monkeypatch.setattr(cist.rebuild, "build_ideal", lossy)
    report = differential_run(1, 20_000, 256)
    assert not report.passed
    assert report.trace
    assert report.divergence is not None or report.problems
    # The trace is minimal: one op shorter passes.
    shorter = [tuple(o) for o in report.trace[:-1]]
    divergence, problems = _replay(shorter, Ist)
    assert divergence is None and not problems
