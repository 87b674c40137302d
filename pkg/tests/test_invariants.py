import pytest

from cist import InvariantViolation, Ist, assert_valid, audit
from cist.dcss import DcssDescriptor, SUCCEEDED
from cist.invariants import shape
from cist.nodes import STATUS_STARTED, _FINISHED, Empty, Inner, Rebuild, Single
from conftest import ideal_tree


def _tree(root):
    t = Ist()
    t.anchor.children[0] = root
    return t


def test_valid_trees_pass():
    assert audit(Ist()) == []
    assert audit(ideal_tree(range(500))) == []
    assert_valid(ideal_tree(range(3)))


def test_key_outside_cover():
    t = _tree(Inner(2, [10], [Single(12, 0), Single(15, 0)]))
    assert any("outside its cover" in p for p in audit(t))
    with pytest.raises(InvariantViolation):
        assert_valid(t)


def test_unsorted_separators():
    t = _tree(Inner(3, [20, 10], [Empty(), Empty(), Empty()]))
    assert any("strictly increasing" in p for p in audit(t))


def test_separators_outside_parent_cover():
    child = Inner(2, [50], [Empty(), Empty()])
    t = _tree(Inner(3, [10], [child, Empty()]))
    assert any("separators" in p for p in audit(t))


def test_bad_arity():
    t = _tree(Inner(2, [10, 20], [Empty(), Empty()]))
    assert any("arity" in p for p in audit(t))


def test_shared_node_detected():
    leaf = Single(5, 5)
    t = _tree(Inner(2, [5], [Empty(), Inner(2, [6], [leaf, leaf])]))
    assert any("reached twice" in p for p in audit(t))


def test_duplicate_key_detected():
    t = _tree(Inner(2, [5], [Empty(), Inner(2, [6], [Single(5, 1), Single(5, 2)])]))
    problems = audit(t)
    assert any("more than once" in p for p in problems)


def test_illegal_status_word():
    node = Inner(2, [5], [Empty(), Empty()])
    node.status = _FINISHED
    assert any("finished without started" in p for p in audit(_tree(node)))
    node.status = (3 << 2) | STATUS_STARTED
    assert any("count set" in p for p in audit(_tree(node)))


def test_retired_node_reachable():
    leaf = Single(1, 1)
    leaf._rc = 1
    assert any("retired" in p for p in audit(_tree(leaf)))


def test_unfilled_slot_and_foreign_object():
    t = _tree(Inner(2, [5], [None, "junk"]))
    problems = audit(t)
    assert any("unfilled" in p for p in problems)
    assert any("foreign" in p for p in problems)


def test_descriptors_and_rebuilds_are_looked_through():
    leaf = Single(3, 3)
    root = Inner(2, [5], [Empty(), Single(7, 7)])
    desc = DcssDescriptor(root.children, 0, root.children[0], leaf, root, 0)
    desc.outcome = SUCCEEDED
    root.children[0] = desc
    t = _tree(Rebuild(root, None, 0))
    assert audit(t) == []
    assert shape(t.anchor.children[0]) == (
        "rebuild", ("inner", 2, (5,), (("single", 3, 3), ("single", 7, 7))))
