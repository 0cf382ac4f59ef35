import pytest

from qconnect.errors import CycleDetected, DanglingEndpoint, DuplicateId, InvalidPath, NotATree
from qconnect.quiver import (
    Path,
    bfs_tree_order,
    chain_order,
    enumerate_paths,
    is_rooted_at,
    is_tree,
    make_path,
    new_quiver,
    opposite,
    reverse_arrow,
    root_orientation,
)


def a4():
    return new_quiver([1, 2, 3, 4], [("a", 1, 2), ("b", 2, 3), ("c", 3, 4)])


def test_validation():
    q = new_quiver([1, 2], [("a", 1, 2)])
    assert q.vertices == ("1", "2") and q.source("a") == "1"
    with pytest.raises(DanglingEndpoint):
        new_quiver([1], [("a", 1, 2)])
    with pytest.raises(DuplicateId):
        new_quiver([1, 1], [])
    with pytest.raises(DuplicateId):
        new_quiver([1, 2], [("a", 1, 2), ("a", 2, 1)])


def test_paths():
    q = a4()
    p = make_path(q, ["a", "b"])
    assert p.source(q) == "1" and p.target(q) == "3" and p.name == "b.a"
    with pytest.raises(InvalidPath):
        make_path(q, ["b", "a"])
    e = Path.trivial("2")
    assert e.source(q) == e.target(q) == "2" and len(e) == 0
    names = [p.name for p in enumerate_paths(q)]
    assert len(names) == 6 and "c.b.a" in names
    assert [p.name for p in enumerate_paths(q, 1)] == ["a", "b", "c"]


def test_paths_closed_under_suffix():
    q = new_quiver("uvwxy", [("a", "u", "v"), ("b", "v", "w"), ("c", "v", "x"), ("d", "x", "y")])
    paths = {p.arrows for p in enumerate_paths(q)}
    for p in paths:
        for i in range(1, len(p)):
            assert p[i:] in paths and p[:i] in paths


def test_cycle_detection():
    q = new_quiver([1, 2], [("a", 1, 2), ("b", 2, 1)])
    with pytest.raises(CycleDetected):
        enumerate_paths(q)
    assert len(enumerate_paths(q, 3)) == 6


def test_root_orientation():
    q = new_quiver("abcde", [("x", "b", "a"), ("y", "b", "c"), ("z", "d", "c"), ("w", "e", "d")])
    for r in q.vertices:
        flips, rooted = root_orientation(q, r)
        assert is_rooted_at(rooted, r)
        assert [v for v in rooted.vertices if rooted.in_degree(v) == 0] == [r]
        assert all(rooted.in_degree(v) == 1 for v in rooted.vertices if v != r)
    with pytest.raises(NotATree):
        root_orientation(new_quiver([1, 2, 3], [("a", 1, 2)]), "1")


def test_reversal_involution():
    q = a4()
    assert reverse_arrow(reverse_arrow(q, "b"), "b") == q
    assert opposite(opposite(q)) == q
    assert chain_order(q) == ["1", "2", "3", "4"]
    assert chain_order(reverse_arrow(q, "b")) is None


def test_bfs_order():
    q = a4()
    order = bfs_tree_order(q, "3")
    assert order[0] == ("3", None, None)
    assert [v for v, _, _ in order] == ["3", "2", "4", "1"]
    assert is_tree(q) and not is_tree(new_quiver([1, 2], []))
