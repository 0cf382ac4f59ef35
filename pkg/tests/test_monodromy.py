import numpy as np
import pytest
from scipy.linalg import expm

from qconnect.bundle import QuiverBundle
from qconnect.connection import RelativeConnection, is_compatible, zero_connection
from qconnect.errors import IntertwiningViolation, NoRealLogarithm, NotFlat, OutOfDomain, ShapeMismatch
from qconnect.grid import GridManifold, MatrixFormField, sup_norm
from qconnect.monodromy import (
    GroupQuiverRep,
    LoopPolyline,
    MonodromyRep,
    QuiverOfGroupReps,
    bundle_from_rep,
    check_intertwining,
    functor_F,
    functor_G,
    generator_loop,
    monodromy_rep,
    parallel_transport,
    rep_from_monodromy,
    same_group_quiver_rep,
    same_quiver_of_group_reps,
)
from qconnect.obstruction import QuiverRepPoint
from qconnect.quiver import new_quiver

J = np.array([[0.0, -1.0], [1.0, 0.0]])


@pytest.fixture
def circle():
    return GridManifold.circle(n=256)


def point_bundle(g, n=2):
    return QuiverBundle(new_quiver(["1"], []), g, {"1": n}, {})


def const_conn(g, mats):
    return RelativeConnection({"1": MatrixFormField.constant(g, mats, degree=1)})


def test_transport_closed_forms(circle):
    loop = generator_loop(circle, 0)
    assert np.array_equal(parallel_transport(zero_connection(point_bundle(circle)), "1", loop), np.eye(2))
    S = parallel_transport(const_conn(circle, [0.4 * np.eye(2)]), "1", loop)
    assert np.max(np.abs(S - np.exp(-2 * np.pi * 0.4) * np.eye(2))) < 1e-8
    S = parallel_transport(const_conn(circle, [J]), "1", loop)
    assert np.max(np.abs(S - np.eye(2))) < 1e-8
    half = const_conn(circle, [0.25 * J])
    assert np.max(np.abs(parallel_transport(half, "1", loop) - expm(-0.5 * np.pi * J))) < 1e-8


def test_loop_validation(circle):
    with pytest.raises(ShapeMismatch):
        LoopPolyline(circle, [[0.0], [0.01]], (1,))
    box = GridManifold.box(9, 2)
    with pytest.raises(OutOfDomain):
        LoopPolyline(box, [[0.9, 0.0], [1.1, 0.0], [0.9, 0.0]], (0, 0))
    with pytest.raises(ShapeMismatch):
        LoopPolyline(box, [[0.0, 0.0], [0.5, 0.0], [0.0, 0.0]], (0, 0))


def test_composition(circle):
    c = const_conn(circle, [np.array([[0.1, 0.3], [-0.2, 0.05]])])
    loop = generator_loop(circle, 0)
    S = parallel_transport(c, "1", loop)
    S2 = parallel_transport(c, "1", loop.then(loop))
    assert np.max(np.abs(S2 - S @ S)) < 1e-10


def test_torus_commuting_monodromies():
    g = GridManifold.torus(n=64)
    c = const_conn(g, [np.diag([0.3, -0.2]), np.diag([0.1, 0.4])])
    m = monodromy_rep(point_bundle(g), c)
    A, B = m.matrix("g0", "1"), m.matrix("g1", "1")
    assert np.max(np.abs(A @ B - B @ A)) <= 1e-6
    assert np.allclose(A, np.diag(np.exp(-2 * np.pi * np.array([0.3, -0.2]))), atol=1e-8)


def test_homotopy_invariance():
    g = GridManifold.torus(n=64)
    x, _ = g.coords()
    dx = np.sin(x)[..., None, None] * np.diag([1.0, 0.5])
    dy = np.broadcast_to(np.diag([0.2, -0.3]), g.shape + (2, 2))
    c = RelativeConnection({"1": MatrixFormField(g, 1, np.stack([dx, dy], axis=2))})
    straight = generator_loop(g, 0, basepoint=[0.0, 1.0])
    h = g.axes[0].h
    pts = [[0.0, 1.0], [0.0, 1.0 + h], [h, 1.0 + h], [2 * h, 1.0 + h], [2 * h, 1.0]]
    pts += [[2 * h + j * h, 1.0] for j in range(1, 63)]
    bent = LoopPolyline(g, pts, (1, 0))
    S1 = parallel_transport(c, "1", straight)
    S2 = parallel_transport(c, "1", bent)
    assert np.max(np.abs(S1 - S2)) < 1e-5


def test_small_square_sees_curvature():
    g = GridManifold.box(65, 2)
    w = MatrixFormField.sample(g, lambda x, y: [0 * x[..., None, None], x[..., None, None]], degree=1)
    c = RelativeConnection({"1": w})
    h = g.axes[0].h
    for cells in (2, 4):
        l = cells * h
        side = np.arange(cells + 1) * h
        pts = [[s, 0.0] for s in side] + [[l, s] for s in side[1:]] + [[l - s, l] for s in side[1:]] + [[0.0, l - s] for s in side[1:]]
        loop = LoopPolyline(g, pts, (0, 0))
        S = parallel_transport(c, "1", loop)[0, 0]
        assert abs((1 - S) - l**2) <= l**3


def test_not_flat_refused():
    g = GridManifold.torus(n=32)
    w = MatrixFormField.sample(g, lambda x, y: [0 * x[..., None, None], np.sin(x)[..., None, None]], degree=1)
    with pytest.raises(NotFlat):
        monodromy_rep(QuiverBundle(new_quiver(["1"], []), g, {"1": 1}, {}), RelativeConnection({"1": w}))


def test_bundle_from_rep_oracles(circle):
    q = new_quiver(["1"], [])
    rep = QuiverRepPoint(q, {"1": 2}, {})
    _, c = bundle_from_rep(q, GroupQuiverRep(rep, ("g0",), {("g0", "1"): np.eye(2)}), circle)
    assert sup_norm(c.omega["1"]) == 0.0
    _, c = bundle_from_rep(q, GroupQuiverRep(rep, ("g0",), {("g0", "1"): np.diag([2.0, 0.5])}), circle)
    expect = -np.diag([np.log(2), -np.log(2)]) / (2 * np.pi)
    assert np.max(np.abs(c.omega["1"].coeffs - expect)) < 1e-14
    with pytest.raises(NoRealLogarithm):
        bad = GroupQuiverRep(QuiverRepPoint(q, {"1": 1}, {}), ("g0",), {("g0", "1"): [[-1.0]]})
        bundle_from_rep(q, bad, circle)


def test_flat_bundle_round_trip(circle):
    q = new_quiver([1, 2], [("a", 1, 2)])
    A = np.array([[1.0, 0.0]])
    R1 = np.array([[1.5, 0.0], [0.3, 0.8]])
    rep = QuiverRepPoint(q, {"1": 2, "2": 1}, {"a": A})
    grep = GroupQuiverRep(rep, ("g0",), {("g0", "1"): R1, ("g0", "2"): [[1.5]]})
    b, c = bundle_from_rep(q, grep, circle)
    assert is_compatible(b, c).passed
    mono = monodromy_rep(b, c)
    assert check_intertwining(b, mono).passed
    back = rep_from_monodromy(b, mono)
    assert np.max(np.abs(back.action[("g0", "1")] - R1)) < 1e-6
    b2, c2 = bundle_from_rep(q, back, circle)
    again = monodromy_rep(b2, c2)
    assert all(np.max(np.abs(again.matrices[k] - mono.matrices[k])) < 1e-6 for k in mono.matrices)


def test_intertwining_negative_control(circle):
    q = new_quiver([1, 2], [("a", 1, 2)])
    b = QuiverBundle(q, circle, {"1": 2, "2": 2}, {"a": MatrixFormField.identity(circle, 2)})
    R = np.array([[2.0, 1.0], [0.0, 1.0]])
    good = MonodromyRep(("g0",), {("g0", "1"): R, ("g0", "2"): R}, (0.0,))
    assert check_intertwining(b, good).passed
    bad = MonodromyRep(("g0",), {("g0", "1"): R, ("g0", "2"): R + 1e-3}, (0.0,))
    rep = check_intertwining(b, bad)
    assert not rep.passed and rep.residuals["g0/a"] > 1e-3


def a2_group_rep():
    q = new_quiver([1, 2], [("a", 1, 2)])
    vreps = {"1": {"dim": 2, "action": {"g": np.diag([2.0, 3.0])}}, "2": {"dim": 1, "action": {"g": np.array([[2.0]])}}}
    return QuiverOfGroupReps(q, ("g",), vreps, {"a": np.array([[1.0, 0.0]])})


def test_functors_round_trip():
    x = a2_group_rep()
    y = functor_F(x)
    assert same_quiver_of_group_reps(functor_G(y), x)
    assert same_group_quiver_rep(functor_F(functor_G(y)), y)
    trivial = QuiverOfGroupReps(x.quiver, (), {v: {"dim": r["dim"], "action": {}} for v, r in x.vertex_reps.items()}, x.maps)
    assert functor_F(trivial).rep.dims == {"1": 2, "2": 1}


def test_malformed_group_rep():
    x = a2_group_rep()
    x.vertex_reps["2"]["action"]["g"] = np.array([[3.0]])
    with pytest.raises(IntertwiningViolation):
        functor_F(x)
    with pytest.raises(IntertwiningViolation):
        GroupQuiverRep(QuiverRepPoint(x.quiver, {"1": 1, "2": 1}, {"a": [[1.0]]}), ("g",), {("g", "1"): [[0.0]], ("g", "2"): [[0.0]]})
