import numpy as np
import pytest

from qconnect.bundle import QuiverBundle
from qconnect.connection import (
    RelativeConnection,
    bianchi_residual,
    compatibility_residual,
    curvature,
    curvature_intertwine_residual,
    default_tolerance,
    dual_connection,
    dual_pair,
    gauge_transform,
    is_compatible,
    is_flat,
    zero_connection,
)
from qconnect.errors import DegreeOverflow, ShapeMismatch
from qconnect.grid import GridManifold, MatrixFormField, pointwise_matmul, sup_norm
from qconnect.instances import random_chain, smooth_gauge
from qconnect.quiver import new_quiver
from qconnect.synthesis import random_seeds, synthesize_An


def single_arrow(g, A, n=2):
    q = new_quiver([1, 2], [("a", 1, 2)])
    return QuiverBundle(q, g, {"1": n, "2": n}, {"a": A})


def test_identity_zero_residual():
    g = GridManifold.box(9, 2)
    b = single_arrow(g, MatrixFormField.identity(g, 2))
    w = MatrixFormField.constant(g, [np.eye(2), np.ones((2, 2))], degree=1)
    c = RelativeConnection({"1": w, "2": w})
    assert sup_norm(compatibility_residual(b, c, "a")) == 0.0
    assert is_compatible(b, zero_connection(b)).passed


def test_counterexample_residual():
    g = GridManifold.interval(n=129)
    b = single_arrow(g, MatrixFormField.sample(g, lambda x: x[:, None, None] * np.eye(2)))
    r = compatibility_residual(b, zero_connection(b), "a")
    assert sup_norm(r - MatrixFormField.constant(g, [np.eye(2)], degree=1)) < 1e-13
    assert not is_compatible(b, zero_connection(b)).passed


def test_conjugated_constant_connection(rng):
    g = GridManifold.box(9, 2)
    A = rng.normal(size=(2, 2)) + 3 * np.eye(2)
    wt = [rng.normal(size=(2, 2)) for _ in range(2)]
    ws = [np.linalg.solve(A, m @ A) for m in wt]
    b = single_arrow(g, MatrixFormField.constant(g, A))
    c = RelativeConnection({"1": MatrixFormField.constant(g, ws, 1), "2": MatrixFormField.constant(g, wt, 1)})
    assert sup_norm(compatibility_residual(b, c, "a")) < 1e-12


def test_twist_enters_source_side():
    g = GridManifold.interval(n=65)
    b = single_arrow(g, MatrixFormField.identity(g, 2))
    th = MatrixFormField.constant(g, [[[0.5]]], degree=1)
    c = RelativeConnection({"1": MatrixFormField.zeros(g, 1, 2), "2": MatrixFormField.constant(g, [0.5 * np.eye(2)], 1)}, {"a": th})
    assert sup_norm(compatibility_residual(b, c, "a")) == 0.0


def test_shape_mismatch():
    g = GridManifold.interval(n=17)
    b = single_arrow(g, MatrixFormField.identity(g, 2))
    with pytest.raises(ShapeMismatch):
        is_compatible(b, RelativeConnection({"1": MatrixFormField.zeros(g, 1, 3), "2": MatrixFormField.zeros(g, 1, 2)}))


def test_curvature_oracles():
    g = GridManifold.box(17, 2)
    x, y = g.coords()
    w = MatrixFormField.sample(g, lambda x, y: [0 * x[..., None, None], x[..., None, None]], degree=1)
    c = RelativeConnection({"1": w})
    assert sup_norm(curvature(c, "1") - MatrixFormField.constant(g, [[[1.0]]], 2)) < 1e-12
    assert not is_flat(c, 1e-6).passed
    assert sup_norm(curvature(RelativeConnection({"1": MatrixFormField.zeros(g, 1, 2)}), "1")) == 0.0
    with pytest.raises(DegreeOverflow):
        curvature(RelativeConnection({"1": MatrixFormField.zeros(GridManifold.interval(n=9), 1, 1)}), "1")


def test_pure_gauge_is_flat(rng):
    errs = []
    for n in (24, 48):
        g = GridManifold.torus(n=n)
        local = np.random.default_rng(5)
        G = MatrixFormField(g, 0, smooth_gauge(g, 2, local, amplitude=0.3)[..., None, :, :])
        c = gauge_transform(RelativeConnection({"1": MatrixFormField.zeros(g, 1, 2)}), {"1": G})
        errs.append(sup_norm(curvature(c, "1")))
        assert errs[-1] <= 10 * g.h**2
    assert errs[0] / errs[1] > 3.5


def test_commuting_constant_forms_are_flat():
    g = GridManifold.torus(n=16)
    w = MatrixFormField.constant(g, [np.diag([1.0, 2.0]), np.diag([-1.0, 0.5])], degree=1)
    assert is_flat(RelativeConnection({"1": w}), 1e-12).passed


def test_flat_1d_is_flagged():
    g = GridManifold.interval(n=9)
    rep = is_flat(RelativeConnection({"1": MatrixFormField.constant(g, [[[1.0]]], 1)}), 1e-8)
    assert rep.passed and rep.note


def test_zero_connection_constant_morphism_curvature_and_bianchi():
    g = GridManifold.box(7, 3)
    b = single_arrow(g, MatrixFormField.constant(g, [[1.0, 2.0], [0.0, 1.0]]))
    c = zero_connection(b)
    assert sup_norm(curvature_intertwine_residual(b, c, "a")) == 0.0
    assert sup_norm(bianchi_residual(b, c, "a")) == 0.0
    with pytest.raises(DegreeOverflow):
        bianchi_residual(single_arrow(GridManifold.box(7, 2), MatrixFormField.identity(GridManifold.box(7, 2), 2)), None, "a")


def test_incompatible_pair_has_curvature_defect():
    g = GridManifold.box(17, 2)
    b = single_arrow(g, MatrixFormField.sample(g, lambda x, y: x[..., None, None] * np.eye(2)))
    w = MatrixFormField.sample(g, lambda x, y: [0 * x[..., None, None] + np.eye(2), x[..., None, None] * np.eye(2)], degree=1)
    c = RelativeConnection({"1": MatrixFormField.zeros(g, 1, 2), "2": w})
    assert sup_norm(curvature_intertwine_residual(b, c, "a")) > 0.1


@pytest.fixture
def synthesized():
    g = GridManifold.interval(n=129)
    rng = np.random.default_rng(11)
    b = random_chain(rng, g)
    return b, synthesize_An(b, seeds=random_seeds(1)), synthesize_An(b, seeds=random_seeds(2))


def test_affine_structure(synthesized):
    b, c1, c2 = synthesized
    for a in b.quiver.arrow_ids:
        s, t = b.quiver.source(a), b.quiver.target(a)
        A = b.morphism[a]
        alpha_t = c2.omega[t] - c1.omega[t]
        alpha_s = c2.omega[s] - c1.omega[s]
        defect = sup_norm(pointwise_matmul(alpha_t, A) - pointwise_matmul(A, alpha_s))
        bound = sup_norm(compatibility_residual(b, c1, a)) + sup_norm(compatibility_residual(b, c2, a))
        assert defect <= bound * (1 + 1e-9) + 1e-14


def test_gauge_naturality(synthesized):
    b, c, _ = synthesized
    rng = np.random.default_rng(3)
    gs = {v: MatrixFormField(b.grid, 0, smooth_gauge(b.grid, b.rank[v], rng)[..., None, :, :]) for v in b.quiver.vertices}
    morph = {}
    for arr in b.quiver.arrows:
        ginv = np.linalg.inv(gs[arr.source].values())
        morph[arr.id] = MatrixFormField(b.grid, 0, (gs[arr.target].values() @ b.A(arr.id) @ ginv)[..., None, :, :])
    b2 = b.replace(morphism=morph)
    c2 = gauge_transform(c, gs)
    assert is_compatible(b2, c2, tol=10 * default_tolerance(b2, c2)).passed


def test_dual_connection(synthesized):
    b, c, _ = synthesized
    db, dc = dual_pair(b, c)
    tol = default_tolerance(b, c)
    assert is_compatible(db, dc, tol).passed == is_compatible(b, c, tol).passed
    for a in b.quiver.arrow_ids:
        assert sup_norm(compatibility_residual(db, dc, a)) == pytest.approx(sup_norm(compatibility_residual(b, c, a)), abs=1e-14)
    ddc = dual_connection(db, dc)
    assert all(np.array_equal(ddc.omega[v].coeffs, c.omega[v].coeffs) for v in c.omega)
    zero = dual_connection(b, zero_connection(b))
    assert all(sup_norm(w) == 0 for w in zero.omega.values())


def test_dual_preserves_flatness(rng):
    g = GridManifold.torus(n=16)
    from conftest import trig_field

    w = trig_field(g, 1, 2, 2, rng)
    b = QuiverBundle(new_quiver([1], []), g, {"1": 2}, {})
    c = RelativeConnection({"1": w})
    d = dual_connection(b, c)
    assert sup_norm(curvature(d, "1")) == pytest.approx(sup_norm(curvature(c, "1")), rel=1e-12)
