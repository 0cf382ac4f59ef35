"""Relative connections: compatibility, curvature, flatness, duality, Bianchi.

A connection on the trivial bundle at vertex ``i`` is stored as its matrix
1-form ``omega[i]`` in the standard frame, i.e. ``nabla = d + omega``. The
twisting line bundle of arrow ``a`` carries ``d + theta[a]``, so the source side
of arrow ``a`` sees ``omega[s(a)] + theta[a] * I``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import QuiverBundle, dual_bundle
from .errors import DegreeOverflow, ShapeMismatch
from .grid import (
    MatrixFormField,
    exterior_derivative,
    pointwise_matmul,
    scalar_times_identity,
    sup_norm,
    wedge,
)


@dataclass(frozen=True)
class RelativeConnection:
    omega: dict
    theta: dict = field(default_factory=dict)
    # synthesis metadata (per-vertex summand frames); not part of the math
    decomposition: dict | None = field(default=None, compare=False, repr=False)

    def theta_form(self, a: str, grid) -> MatrixFormField:
        th = self.theta.get(a)
        return MatrixFormField.zeros(grid, 1, 1) if th is None else th


def zero_connection(b: QuiverBundle) -> RelativeConnection:
    return RelativeConnection(
        {v: MatrixFormField.zeros(b.grid, 1, b.rank[v]) for v in b.quiver.vertices},
        dict(b.twist_form or {}),
    )


def check_shapes(b: QuiverBundle, c: RelativeConnection) -> None:
    if set(c.omega) != set(b.quiver.vertices):
        raise ShapeMismatch("connection must give one form per vertex")
    for v, w in c.omega.items():
        if w.grid != b.grid or w.degree != 1 or (w.rows, w.cols) != (b.rank[v], b.rank[v]):
            raise ShapeMismatch(f"connection form at {v!r} must be a {b.rank[v]}x{b.rank[v]} 1-form on the bundle grid")
    for a, th in c.theta.items():
        if a not in b.quiver.arrow_ids:
            raise ShapeMismatch(f"twist form for unknown arrow {a!r}")
        if th.grid != b.grid or th.degree != 1 or (th.rows, th.cols) != (1, 1):
            raise ShapeMismatch(f"twist form of {a!r} must be a scalar 1-form")


def source_side_form(b: QuiverBundle, c: RelativeConnection, a: str) -> MatrixFormField:
    """omega^{s(a) x a} = omega_{s(a)} + theta_a * I."""
    s = b.quiver.source(a)
    return c.omega[s] + scalar_times_identity(c.theta_form(a, b.grid), b.rank[s])


def compatibility_residual(b: QuiverBundle, c: RelativeConnection, a: str) -> MatrixFormField:
    """dA + omega_t A - A (omega_s + theta I); zero iff A is parallel."""
    check_shapes(b, c)
    A = b.morphism[a]
    t = b.quiver.target(a)
    return exterior_derivative(A) + pointwise_matmul(c.omega[t], A) - pointwise_matmul(A, source_side_form(b, c, a))


def scale(b: QuiverBundle, c: RelativeConnection | None = None) -> float:
    norms = [sup_norm(f) for f in b.morphism.values()]
    if c is not None:
        norms += [sup_norm(w) for w in c.omega.values()]
        norms += [sup_norm(t) for t in c.theta.values()]
    return 1.0 + max(norms, default=0.0)


def default_tolerance(b: QuiverBundle, c: RelativeConnection | None = None) -> float:
    """10 h^2 (1 + largest sup-norm of the morphisms and forms)."""
    return 10.0 * b.grid.h**2 * scale(b, c)


@dataclass
class CheckReport:
    norms: dict
    tol: float
    passed: bool
    note: str | None = None

    def to_dict(self) -> dict:
        out = {"pass": self.passed, "tol": self.tol, "norms": dict(sorted(self.norms.items()))}
        if self.note:
            out["note"] = self.note
        return out


def is_compatible(b: QuiverBundle, c: RelativeConnection, tol: float | None = None) -> CheckReport:
    tol = default_tolerance(b, c) if tol is None else tol
    if tol <= 0:
        raise ValueError("tol must be positive")
    norms = {a: sup_norm(compatibility_residual(b, c, a)) for a in b.quiver.arrow_ids}
    return CheckReport(norms, tol, all(n <= tol for n in norms.values()))


def curvature_of(omega: MatrixFormField) -> MatrixFormField:
    if omega.grid.dim < 2:
        raise DegreeOverflow("curvature is a 2-form; the grid must be at least 2-dimensional")
    return exterior_derivative(omega) + wedge(omega, omega)


def curvature(c: RelativeConnection, i: str) -> MatrixFormField:
    """Omega_i = d omega_i + omega_i ^ omega_i."""
    return curvature_of(c.omega[i])


def curvature_intertwine_residual(b: QuiverBundle, c: RelativeConnection, a: str) -> MatrixFormField:
    """Omega_{t(a)} A - A Omega^{s(a) x a}."""
    A = b.morphism[a]
    om_t = curvature(c, b.quiver.target(a))
    om_s = curvature_of(source_side_form(b, c, a))
    return pointwise_matmul(om_t, A) - pointwise_matmul(A, om_s)


def bianchi_residual(b: QuiverBundle, c: RelativeConnection, a: str) -> MatrixFormField:
    """Left minus right side of the quiver Bianchi identity on a 3D grid."""
    if b.grid.dim != 3:
        raise DegreeOverflow("the Bianchi identity is a 3-form identity; it requires a 3D grid")
    A = b.morphism[a]
    dA = exterior_derivative(A)
    w_t = c.omega[b.quiver.target(a)]
    w_s = source_side_form(b, c, a)
    O_t = curvature_of(w_t)
    O_s = curvature_of(w_s)
    lhs = pointwise_matmul(wedge(O_t, w_t) - wedge(w_t, O_t), A) + wedge(O_t, dA)
    rhs = wedge(dA, O_s) + pointwise_matmul(A, wedge(O_s, w_s) - wedge(w_s, O_s))
    return lhs - rhs


def is_flat(c: RelativeConnection, tol: float, grid=None) -> CheckReport:
    """Flatness of every vertex connection (1D grids: flat by convention)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    some = next(iter(c.omega.values()))
    grid = some.grid if grid is None else grid
    if grid.dim < 2:
        return CheckReport(
            {v: 0.0 for v in c.omega},
            tol,
            True,
            note="1D base: every 2-form vanishes, so every connection is flat (vacuous check)",
        )
    norms = {v: sup_norm(curvature(c, v)) for v in c.omega}
    return CheckReport(norms, tol, all(n <= tol for n in norms.values()))


def dual_connection(b: QuiverBundle, c: RelativeConnection) -> RelativeConnection:
    """omega*_i = -omega_i^T on the dual bundle; twists unchanged."""
    check_shapes(b, c)
    return RelativeConnection({v: -w.T for v, w in c.omega.items()}, dict(c.theta))


def dual_pair(b: QuiverBundle, c: RelativeConnection):
    return dual_bundle(b), dual_connection(b, c)


def add_alpha(c: RelativeConnection, alpha: dict) -> RelativeConnection:
    """The connection ``omega + alpha`` with the same twists."""
    return RelativeConnection({v: w + alpha[v] for v, w in c.omega.items()}, dict(c.theta))


def gauge_transform(c: RelativeConnection, g: dict) -> RelativeConnection:
    """omega_i -> g omega_i g^-1 - (dg) g^-1 for pointwise-invertible 0-forms g_i."""
    out = {}
    for v, w in c.omega.items():
        G = g[v]
        Ginv = G.like(np.linalg.inv(G.values())[..., None, :, :])
        out[v] = pointwise_matmul(pointwise_matmul(G, w), Ginv) - pointwise_matmul(exterior_derivative(G), Ginv)
    return RelativeConnection(out, dict(c.theta))
