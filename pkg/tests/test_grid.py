import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qconnect.errors import DegreeOverflow, OutOfDomain, ShapeMismatch
from qconnect.grid import (
    GridManifold,
    MatrixFormField,
    exterior_derivative,
    interpolate,
    pointwise_matmul,
    sup_norm,
    wedge,
)

from conftest import trig_field


def test_axis_validation():
    with pytest.raises(ValueError):
        GridManifold([{"n": 3, "periodic": False, "min": 0, "max": 1}])
    with pytest.raises(ValueError):
        GridManifold([{"n": 8, "periodic": False, "min": 0, "max": 1}] * 4)


def test_node_at_zero():
    g = GridManifold.interval(n=129)
    assert g.coords()[0][64] == 0.0
    assert g.h == pytest.approx(2 / 128)


def test_degree_bounds():
    g = GridManifold.box(7, 2)
    with pytest.raises(DegreeOverflow):
        MatrixFormField.zeros(g, 3, 1)
    with pytest.raises(DegreeOverflow):
        exterior_derivative(MatrixFormField.zeros(g, 2, 1))
    one = MatrixFormField.zeros(g, 1, 1)
    two = MatrixFormField.zeros(g, 2, 1)
    with pytest.raises(DegreeOverflow):
        wedge(one, two)


def test_d_of_constant_is_zero():
    g = GridManifold.box(9, 3)
    f = MatrixFormField.constant(g, [[1.0, 2.0], [3.0, 4.0]])
    assert sup_norm(exterior_derivative(f)) == 0.0


def test_d_of_quadratic_is_exact():
    g = GridManifold.box(11, 2)
    f = MatrixFormField.sample(g, lambda x, y: (x * y)[..., None, None])
    df = exterior_derivative(f)
    x, y = g.coords()
    assert np.max(np.abs(df.component((0,))[..., 0, 0] - y)) < 1e-12
    assert np.max(np.abs(df.component((1,))[..., 0, 0] - x)) < 1e-12


def test_dx_wedge_dy():
    g = GridManifold.box(5, 2)
    dx = MatrixFormField.constant(g, [[[1.0]], [[0.0]]], degree=1)
    dy = MatrixFormField.constant(g, [[[0.0]], [[1.0]]], degree=1)
    w = wedge(dx, dy)
    assert np.all(w.coeffs == 1.0)
    assert np.all(wedge(dy, dx).coeffs == -1.0)


def test_scalar_one_form_squares_to_zero(rng):
    g = GridManifold.torus(n=16, dim=3)
    w = trig_field(g, 1, 1, 1, rng)
    assert sup_norm(wedge(w, w)) == 0.0


def test_matrix_wedge_against_direct_sum(rng):
    g = GridManifold.box(5, 3)
    f = trig_field(g, 1, 2, 3, rng)
    h = trig_field(g, 1, 3, 2, rng)
    fw = wedge(f, h)
    i = (1, 2, 3)
    # (f ^ h)_{jk} = f_j h_k - f_k h_j
    for K, (j, k) in enumerate([(0, 1), (0, 2), (1, 2)]):
        direct = f.coeffs[i][j] @ h.coeffs[i][k] - f.coeffs[i][k] @ h.coeffs[i][j]
        assert np.allclose(fw.coeffs[i][K], direct, atol=1e-14)


def test_pointwise_matmul(rng):
    g = GridManifold.box(5, 2)
    w = trig_field(g, 1, 2, 2, rng)
    assert np.array_equal(pointwise_matmul(MatrixFormField.identity(g, 2), w).coeffs, w.coeffs)
    assert sup_norm(pointwise_matmul(MatrixFormField.zeros(g, 0, 2), w)) == 0.0
    a, b = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
    prod = pointwise_matmul(MatrixFormField.constant(g, a), MatrixFormField.constant(g, b))
    hand = [[a[r, 0] * b[0, c] + a[r, 1] * b[1, c] for c in range(2)] for r in range(2)]
    assert np.allclose(prod.values()[0, 0], hand, atol=1e-15)
    with pytest.raises(ShapeMismatch):
        pointwise_matmul(MatrixFormField.zeros(g, 0, 2, 3), MatrixFormField.zeros(g, 0, 2))


def test_sup_norm():
    g = GridManifold.interval(n=129)
    assert sup_norm(MatrixFormField.zeros(g, 0, 2)) == 0.0
    assert sup_norm(MatrixFormField.constant(g, [[3.0]])) == 3.0
    assert sup_norm(MatrixFormField.sample(g, lambda x: x[:, None, None])) == 1.0


def test_interpolation():
    g = GridManifold.interval(n=33)
    f = MatrixFormField.sample(g, lambda x: x[:, None, None])
    x = g.coords()[0]
    assert interpolate(f, [x[5]])[0][0, 0] == x[5]
    mid = 0.5 * (x[5] + x[6])
    assert interpolate(f, [mid])[0][0, 0] == pytest.approx(mid, abs=1e-15)
    with pytest.raises(OutOfDomain):
        interpolate(f, [1.5])
    s = MatrixFormField.sample(g, lambda x: np.sin(3 * x)[:, None, None])
    err = abs(interpolate(s, [0.123])[0][0, 0] - math.sin(0.369))
    assert err <= 9 / 8 * g.h**2


def test_periodic_interpolation_wraps():
    g = GridManifold.circle(n=64)
    f = MatrixFormField.sample(g, lambda t: np.cos(t)[:, None, None])
    a = interpolate(f, [0.3])[0][0, 0]
    b = interpolate(f, [0.3 + 2 * math.pi])[0][0, 0]
    assert a == pytest.approx(b, abs=1e-14)


@pytest.mark.parametrize("dim", [2, 3])
def test_leibniz_second_order(dim, rng):
    errs = []
    for n in (24, 48):
        g = GridManifold.torus(n=n, dim=dim)
        local = np.random.default_rng(7)
        f = trig_field(g, 0, 2, 2, local)
        h = trig_field(g, 1, 2, 2, local)
        lhs = exterior_derivative(wedge(f, h))
        rhs = wedge(exterior_derivative(f), h) + wedge(f, exterior_derivative(h))
        errs.append(sup_norm(lhs - rhs))
    assert math.log2(errs[0] / errs[1]) > 1.9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_wedge_associative(seed, dim):
    rng = np.random.default_rng(seed)
    g = GridManifold.box(5, dim)
    degs = rng.integers(0, 2, size=3)
    while degs.sum() > dim:
        degs[np.argmax(degs)] -= 1
    a, b, c = (trig_field(g, int(p), 2, 2, rng) for p in degs)
    left = wedge(wedge(a, b), c)
    right = wedge(a, wedge(b, c))
    assert sup_norm(left - right) <= 1e-12 * (1 + sup_norm(left))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3))
def test_d_squared_vanishes(seed, dim):
    rng = np.random.default_rng(seed)
    g = GridManifold.box(9, dim)
    f = trig_field(g, 0, 2, 1, rng)
    dd = exterior_derivative(exterior_derivative(f))
    assert sup_norm(dd) <= 1e-11 * (1 + sup_norm(f))
