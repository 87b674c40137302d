import random
import threading

import pytest
from hypothesis import given, settings, strategies as st

from cist import Ist, TreeConfig, assert_valid, audit
from cist.footprint import footprint_bytes
from cist.invariants import shape
from cist.nodes import Empty, Inner, Leaf, Single
from cist.oracle import OracleSet, differential_run, linearizability_sweep
from cist.rebuild import build_ideal, create_ideal, mark_and_count
from conftest import ideal_shape_problems

CAP = 8


def _tree(capacity=CAP, **kw):
    return Ist(TreeConfig(leaf_capacity=capacity, **kw))


def _ideal(n, capacity, stripes=1):
    t = Ist(TreeConfig(leaf_capacity=capacity, multicounter_stripes=stripes))
    pairs = [(k, k) for k in range(n)]
    counter = t._new_root_counter()
    t.anchor.children[0] = build_ideal(pairs, 0, n, counter, capacity)
    return t


def test_first_insert_makes_leaf():
    t = _tree()
    assert t.insert(5, "a") is None
    root = t.root()
    assert isinstance(root, Leaf) and root.keys == (5,)


def test_leaf_grows_then_splits():
    t = _tree()
    for k in range(CAP):
        t.insert(k, k)
    assert isinstance(t.root(), Leaf) and len(t.root().keys) == CAP
    t.insert(CAP, CAP)
    root = t.root()
    assert isinstance(root, Inner) and root.counter is not None
    assert all(isinstance(c, Leaf) for c in root.children)
    assert t.keys() == list(range(CAP + 1))
    assert_valid(t)


def test_upsert_delete_in_leaf():
    t = _tree()
    for k in (3, 1, 2):
        t.insert(k, str(k))
    assert t.insert(2, "two") == "2"
    assert t.lookup(2) == "two"
    assert t.delete(1) == "1"
    assert t.delete(1) is None
    assert t.root().keys == (2, 3)
    t.delete(2)
    t.delete(3)
    assert isinstance(t.root(), Empty)


def test_absent_delete_leaves_leaf_untouched():
    t = _tree()
    t.insert(1, 1)
    leaf = t.root()
    assert t.delete(2) is None
    assert t.root() is leaf


def test_no_singles_in_leaf_mode():
    t = _tree()
    rng = random.Random(0)
    for _ in range(5000):
        k = rng.randrange(3000)
        t.insert(k, k) if rng.random() < 0.6 else t.delete(k)
    stack = [t.root()]
    while stack:
        n = stack.pop()
        assert not isinstance(n, Single)
        if isinstance(n, Inner):
            stack.extend(n.children)
    assert_valid(t)


@pytest.mark.parametrize("capacity", [2, 3, 8, 32])
@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["insert", "delete", "lookup"]),
                          st.integers(0, 127)), max_size=400),
       st.booleans())
def test_matches_oracle(capacity, ops, collaborative):
    t = _tree(capacity, collaborative=collaborative, collaboration_threshold=4)
    ref = OracleSet()
    for i, (op, key) in enumerate(ops):
        val = i + 1 if op == "insert" else None
        got = t.insert(key, val) if op == "insert" else getattr(t, op)(key)
        assert got == ref.apply(op, key, val)
    assert t.items() == ref.items()
    assert_valid(t)


def test_differential_long_run():
    report = differential_run(2, 50_000, 2048, factory=lambda: _tree(16))
    assert report.passed, report.to_dict()


def test_ideal_leaf_layout(derived):
    for n in (9, 100, 5000):
        for c in (8, 32):
            t = _ideal(n, c)
            problems, count = ideal_shape_problems(t.root())
            assert not problems and count == n
            assert footprint_bytes(t) == derived["footprint_ideal_leaves"][f"{n}/{c}"]
            if f"{n}/{c}" in derived["ideal_leaf_depths"]:
                want_max, want_avg = derived["ideal_leaf_depths"][f"{n}/{c}"]
                s = t.depth_stats()
                assert s.max_leaf_depth == want_max
                assert s.avg_leaf_depth == pytest.approx(want_avg)


def test_rebuild_over_leaves_preserves_keys():
    t = _tree(5)
    keys = random.Random(1).sample(range(10**6), 3000)
    for k in keys:
        t.insert(k, -k)
    root = t.root()
    n = mark_and_count(root)
    assert n == 3000
    rebuilt = create_ideal(root, 0, n, capacity=5)
    out = Ist(TreeConfig(leaf_capacity=5))
    out.anchor.children[0] = rebuilt
    assert out.items() == sorted((k, -k) for k in keys)
    # Windows that start and end inside a leaf.
    part = create_ideal(root, 7, 100, capacity=5)
    out.anchor.children[0] = part
    assert out.keys() == sorted(keys)[7:107]


def test_audit_flags_bad_leaves():
    t = _tree(4)
    t.anchor.children[0] = Inner(2, [10], [Leaf((1, 12), (1, 1)), Leaf((10,), (1,))])
    assert any("outside" in p for p in audit(t))
    t.anchor.children[0] = Leaf((3, 2), (0, 0))
    assert any("strictly increasing" in p for p in audit(t))
    t.anchor.children[0] = Leaf(tuple(range(5)), (0,) * 5)
    assert any("capacity" in p for p in audit(t))
    t.anchor.children[0] = Inner(2, [5], [Leaf((1, 6), (0, 0)), Leaf((6,), (0,))])
    problems = audit(t)
    assert any("more than once" in p for p in problems)


def test_collaborative_and_plain_agree():
    rng = random.Random(3)
    ops = [(rng.random() < 0.55, rng.randrange(20_000)) for _ in range(30_000)]
    shapes = []
    for collaborative in (True, False):
        t = _tree(8, collaborative=collaborative)
        for ins, k in ops:
            t.insert(k, k) if ins else t.delete(k)
        shapes.append(shape(t.root()))
    assert shapes[0] == shapes[1]


def test_concurrent_writers():
    t = _tree(8)
    threads, per = 4, 2000

    def work(i):
        for k in range(i, threads * per, threads):
            t.insert(k, k)
        for k in range(i, threads * per, 2 * threads):
            t.delete(k)

    ws = [threading.Thread(target=work, args=(i,)) for i in range(threads)]
    for w in ws:
        w.start()
    for w in ws:
        w.join()
    want = sorted(set(range(threads * per))
                  - {k for i in range(threads)
                     for k in range(i, threads * per, 2 * threads)})
    assert t.keys() == want
    assert_valid(t)
    t.close()
    assert t.reclaim.pending == 0


def test_recorded_trials_are_linearizable():
    cfg = TreeConfig(leaf_capacity=2, collaboration_threshold=2)
    assert linearizability_sweep(100, seed=21, config=cfg) == []


def test_config_rejects_capacity_one():
    with pytest.raises(ValueError):
        TreeConfig(leaf_capacity=1)
    with pytest.raises(ValueError):
        TreeConfig(leaf_capacity=-2)
