import json
import pathlib
import sys

import pytest

from cist import hooks
from cist.nodes import Single
from cist.rebuild import build_ideal
from cist.tree import Ist

sys.path.insert(0, str(pathlib.Path(__file__).parent))

DERIVED = json.loads(
    (pathlib.Path(__file__).parent / "data" / "derived.json").read_text())


@pytest.fixture(autouse=True)
def _no_leftover_hooks():
    yield
    hooks.clear()


@pytest.fixture
def derived():
    return DERIVED


def ideal_tree(keys, config=None, value=lambda k: k * 10):
    """A tree whose logical root is the ideal subtree over sorted ``keys``."""
    tree = Ist(config)
    leaves = [Single(k, value(k)) for k in sorted(keys)]
    counter = tree._new_root_counter() if len(leaves) > 1 else None
    tree.anchor.children[0] = build_ideal(leaves, counter=counter)
    return tree


def inner_nodes(node):
    """Every Inner below ``node`` (quiescent walk), including ``node``."""
    from cist.nodes import Inner, Rebuild
    out = []
    stack = [node]
    while stack:
        n = stack.pop()
        if n.__class__ is Rebuild:
            stack.append(n.target)
        elif n.__class__ is Inner:
            out.append(n)
            stack.extend(c for c in n.children if c is not None)
    return out


def ideal_shape_problems(node):
    """Violations of the ideal layout in a quiescent subtree.

    Every Inner over n >= 2 keys must have degree max(2, isqrt(n)) and child
    key counts that differ by at most one.  Returns ``(problems, key_count)``.
    """
    import math
    from cist.nodes import Empty, Leaf, Single
    problems = []

    def walk(n):
        if n.__class__ is Single:
            return 1
        if n.__class__ is Leaf:
            return len(n.keys)
        if n.__class__ is Empty:
            return 0
        sizes = [walk(c) for c in n.children]
        total = sum(sizes)
        want = max(2, math.isqrt(total))
        if len(n.children) != want:
            problems.append(f"{total} keys with degree {len(n.children)}")
        if max(sizes) - min(sizes) > 1:
            problems.append(f"{total} keys split unevenly {sizes}")
        return total

    count = walk(node)
    return problems, count


# criterion id -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}
CRITERIA = [f"C{i}" for i in range(1, 13)]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in CRITERIA:
        if cid in ACCEPTANCE:
            ok, detail = ACCEPTANCE[cid]
            terminalreporter.write_line(
                f"{cid:<4}{'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"{cid:<4}----  not run")
