import numpy as np
import pytest

from qconnect.bundle import QuiverBundle, check_all_path_ranks, dual_bundle, path_morphism, rank_profile
from qconnect.errors import CycleDetected, InvalidPath, ShapeMismatch
from qconnect.grid import GridManifold, MatrixFormField, pointwise_matmul
from qconnect.instances import smooth_gauge
from qconnect.quiver import Path, make_path, new_quiver


@pytest.fixture
def line():
    return GridManifold.interval(n=129)


def counterexample(g):
    q = new_quiver([1, 2], [("a", 1, 2)])
    A = MatrixFormField.sample(g, lambda x: x[:, None, None] * np.eye(2))
    return QuiverBundle(q, g, {"1": 2, "2": 2}, {"a": A})


def a3(g, A1, A2):
    q = new_quiver([1, 2, 3], [("a1", 1, 2), ("a2", 2, 3)])
    return QuiverBundle(q, g, {"1": 2, "2": 2, "3": 2}, {"a1": MatrixFormField.constant(g, A1), "a2": MatrixFormField.constant(g, A2)})


def test_shape_checks(line):
    q = new_quiver([1, 2], [("a", 1, 2)])
    with pytest.raises(ShapeMismatch):
        QuiverBundle(q, line, {"1": 2, "2": 3}, {"a": MatrixFormField.identity(line, 2)})
    with pytest.raises(ShapeMismatch):
        QuiverBundle(q, line, {"1": 2, "2": 2}, {})


def test_path_morphism(line):
    b = counterexample(line)
    assert np.array_equal(path_morphism(b, Path.trivial("1")).values(), np.broadcast_to(np.eye(2), (129, 2, 2)))
    assert np.array_equal(path_morphism(b, make_path(b.quiver, ["a"])).coeffs, b.morphism["a"].coeffs)
    c = a3(line, np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
    assert np.all(path_morphism(c, make_path(c.quiver, ["a1", "a2"])).coeffs == 0)
    with pytest.raises(InvalidPath):
        path_morphism(c, Path(("a2", "a1")))


def test_path_composition_is_exact(line, rng):
    q = new_quiver([1, 2, 3, 4], [("a", 1, 2), ("b", 2, 3), ("c", 3, 4)])
    morph = {k: MatrixFormField(line, 0, smooth_gauge(line, 2, rng)[:, None]) for k in "abc"}
    b = QuiverBundle(q, line, {v: 2 for v in q.vertices}, morph)
    full = path_morphism(b, make_path(q, "abc"))
    split = pointwise_matmul(path_morphism(b, make_path(q, "c")), path_morphism(b, make_path(q, "ab")))
    assert np.array_equal(full.coeffs, split.coeffs)
    other = pointwise_matmul(path_morphism(b, make_path(q, "bc")), path_morphism(b, make_path(q, "a")))
    assert np.max(np.abs(full.coeffs - other.coeffs)) <= 1e-12 * np.max(np.abs(full.coeffs))


def test_rank_profile(line):
    prof = rank_profile(counterexample(line).morphism["a"])
    assert not prof.is_constant
    assert prof.witness == [(0.0,)]
    assert prof.ranks[64] == 0 and set(np.delete(prof.ranks, 64)) == {2}
    assert rank_profile(MatrixFormField.identity(line, 3)).value == 3
    shear = MatrixFormField.sample(line, lambda x: np.stack([np.ones_like(x), x, 0 * x, np.ones_like(x)], -1).reshape(-1, 2, 2))
    assert rank_profile(shear).value == 2
    with pytest.raises(ValueError):
        rank_profile(shear, rel_tol=0)


def test_rank_profile_invariances(line, rng):
    A = np.zeros((129, 3, 3))
    A[:, 0, 0] = 1.0
    A[:, 1, 2] = 2.0 + line.coords()[0]
    f = MatrixFormField(line, 0, A[:, None])
    g1, g2 = smooth_gauge(line, 3, rng), smooth_gauge(line, 3, rng)
    conj = MatrixFormField(line, 0, (g1 @ A @ g2)[:, None])
    assert rank_profile(f).value == rank_profile(f.T).value == rank_profile(conj).value == 2


def test_path_ranks(line):
    assert not check_all_path_ranks(counterexample(line)).all_constant
    rep = check_all_path_ranks(a3(line, np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    assert rep.all_constant
    assert [rep.profiles[p.name].value for p in rep.paths] == [1, 0, 1]
    q = new_quiver([1, 2], [("a", 1, 2), ("b", 2, 1)])
    eye = MatrixFormField.identity(line, 1)
    with pytest.raises(CycleDetected):
        check_all_path_ranks(QuiverBundle(q, line, {"1": 1, "2": 1}, {"a": eye, "b": eye}))


def test_exact_cancellation_counts_as_zero(line, rng):
    # g C2 C1 g^-1 with C2 C1 = 0 leaves roundoff only
    g = smooth_gauge(line, 2, rng)
    gi = np.linalg.inv(g)
    C1, C2 = np.array([[1.0, 0], [0, 0]]), np.array([[0, 0], [0, 1.0]])
    q = new_quiver([1, 2, 3], [("a1", 1, 2), ("a2", 2, 3)])
    b = QuiverBundle(
        q, line, {v: 2 for v in "123"},
        {"a1": MatrixFormField(line, 0, (g @ C1)[:, None]), "a2": MatrixFormField(line, 0, (C2 @ gi)[:, None])},
    )
    assert check_all_path_ranks(b).all_constant


def test_dual(line):
    S = np.array([[1.0, 2.0], [2.0, -1.0]])
    b = a3(line, S, np.diag([1.0, 0.0]))
    d = dual_bundle(b)
    assert np.array_equal(d.morphism["a1"].coeffs, b.morphism["a1"].coeffs)
    assert d.quiver.source("a1") == "2"
    dd = dual_bundle(d)
    assert dd.quiver == b.quiver
    assert all(np.array_equal(dd.morphism[a].coeffs, b.morphism[a].coeffs) for a in b.quiver.arrow_ids)
    ce = counterexample(line)
    assert np.array_equal(rank_profile(dual_bundle(ce).morphism["a"]).ranks, rank_profile(ce.morphism["a"]).ranks)
