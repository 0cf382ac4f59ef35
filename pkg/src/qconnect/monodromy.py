"""Parallel transport, monodromy of flat quiver bundles, and the representation correspondence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import QuiverBundle
from .connection import RelativeConnection, default_tolerance, is_compatible, is_flat
from .errors import IntertwiningViolation, NotFlat, OutOfDomain, ShapeMismatch
from .grid import GridManifold, MatrixFormField, interpolate, interpolate_many
from .linalg import real_logm
from .obstruction import QuiverRepPoint
from .quiver import Quiver


@dataclass(frozen=True)
class LoopPolyline:
    """Closed polyline in grid coordinates.

    Points are unwrapped: crossing a periodic seam keeps increasing the
    coordinate, and ``winding[k]`` counts how many periods axis ``k`` advances
    between the first and the last point.
    """

    grid: GridManifold
    points: np.ndarray
    winding: tuple

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        g = self.grid
        if pts.shape[1] != g.dim or len(pts) < 2:
            raise ShapeMismatch(f"a loop needs at least two {g.dim}-dimensional points")
        if len(self.winding) != g.dim:
            raise ShapeMismatch("winding needs one entry per axis")
        gap = pts[-1] - pts[0]
        for k, ax in enumerate(g.axes):
            expect = self.winding[k] * ax.length if ax.periodic else 0.0
            if not ax.periodic and self.winding[k] != 0:
                raise ShapeMismatch(f"axis {k} is bounded; winding must be 0")
            if abs(gap[k] - expect) > 1e-9 * max(1.0, ax.length):
                raise ShapeMismatch("loop does not close")
            if not ax.periodic and (pts[:, k].min() < ax.min - 1e-12 or pts[:, k].max() > ax.max + 1e-12):
                raise OutOfDomain(f"loop leaves the extent of axis {k}")
        steps = np.abs(np.diff(pts, axis=0))
        if np.any(steps > np.array(g.spacing) * (1 + 1e-9)):
            raise ShapeMismatch("consecutive loop points must lie within one grid cell")

    def then(self, other: "LoopPolyline") -> "LoopPolyline":
        """This loop followed by ``other`` (both must start at the same point modulo periods)."""
        shift = self.points[-1] - other.points[0]
        pts = np.concatenate([self.points, other.points[1:] + shift])
        return LoopPolyline(self.grid, pts, tuple(a + b for a, b in zip(self.winding, other.winding)))

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "winding": list(self.winding)}


def generator_loop(grid: GridManifold, axis: int, basepoint=None) -> LoopPolyline:
    """Straight loop once around periodic ``axis`` through ``basepoint``, one point per cell."""
    ax = grid.axes[axis]
    if not ax.periodic:
        raise ShapeMismatch(f"axis {axis} is not periodic")
    x0 = grid.node((0,) * grid.dim) if basepoint is None else np.asarray(basepoint, dtype=float)
    j = np.arange(ax.n + 1)
    pts = np.repeat(x0[None, :], ax.n + 1, axis=0)
    pts[:, axis] += j * ax.h
    winding = tuple(1 if k == axis else 0 for k in range(grid.dim))
    return LoopPolyline(grid, pts, winding)


def standard_generators(grid: GridManifold, basepoint=None) -> dict:
    """One axis loop per periodic axis (circle: one generator, torus: two)."""
    return {f"g{k}": generator_loop(grid, k, basepoint) for k, ax in enumerate(grid.axes) if ax.periodic}


def _ordered_product(P: np.ndarray) -> np.ndarray:
    """P[m-1] ... P[1] P[0] by pairwise reduction."""
    n = P.shape[-1]
    while len(P) > 1:
        if len(P) % 2:
            P = np.concatenate([P, np.eye(n)[None]])
        P = P[1::2] @ P[0::2]
    return P[0]


def transport_form(omega: MatrixFormField, loop: LoopPolyline, steps_per_cell: int = 64) -> np.ndarray:
    """S(1) for dS/dt = -omega(gamma'(t)) S along ``loop`` (classical RK4)."""
    if steps_per_cell < 1:
        raise ValueError("steps_per_cell must be positive")
    n = omega.rows
    pts = loop.points
    seg = np.diff(pts, axis=0)
    m = steps_per_cell
    nseg = len(seg)
    # half-step samples along each segment
    t = np.arange(2 * m + 1) / (2 * m)
    samples = pts[:-1, None, :] + t[None, :, None] * seg[:, None, :]
    W = interpolate_many(omega, samples.reshape(-1, pts.shape[1])).reshape(nseg, 2 * m + 1, omega.ncomp, n, n)
    M = -np.einsum("sc,stcij->stij", seg, W)
    h = 1.0 / m
    M0, Mh, M1 = M[:, 0:-1:2], M[:, 1::2], M[:, 2::2]
    eye = np.eye(n)
    K1 = M0
    K2 = Mh @ (eye + 0.5 * h * K1)
    K3 = Mh @ (eye + 0.5 * h * K2)
    K4 = M1 @ (eye + h * K3)
    P = eye + (h / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)
    return _ordered_product(P.reshape(-1, n, n))


def parallel_transport(c: RelativeConnection, i: str, loop: LoopPolyline, steps_per_cell: int = 64) -> np.ndarray:
    return transport_form(c.omega[i], loop, steps_per_cell)


# monodromy representations --------------------------------------------------


@dataclass
class MonodromyRep:
    generators: tuple
    matrices: dict
    basepoint: tuple = ()

    def matrix(self, g: str, v: str) -> np.ndarray:
        return self.matrices[(g, v)]

    def cond(self) -> dict:
        return {f"{g}/{v}": float(np.linalg.cond(M)) for (g, v), M in sorted(self.matrices.items())}

    def to_dict(self) -> dict:
        out = {}
        for (g, v), M in sorted(self.matrices.items()):
            out.setdefault(g, {})[v] = np.asarray(M).tolist()
        return {"generators": list(self.generators), "basepoint": list(self.basepoint), "matrices": out, "cond": self.cond()}


def monodromy_rep(
    b: QuiverBundle,
    c: RelativeConnection,
    basepoint=None,
    generators: dict | None = None,
    steps_per_cell: int = 64,
    flat_tol: float | None = None,
) -> MonodromyRep:
    grid = b.grid
    flat = is_flat(c, default_tolerance(b, c) if flat_tol is None else flat_tol, grid)
    if not flat.passed:
        worst = max(flat.norms, key=flat.norms.get)
        raise NotFlat(f"curvature at {worst!r} is {flat.norms[worst]:.3g} > {flat.tol:.3g}")
    x0 = grid.node((0,) * grid.dim) if basepoint is None else np.asarray(basepoint, dtype=float)
    gens = standard_generators(grid, x0) if generators is None else generators
    mats = {}
    for g, loop in gens.items():
        for v in b.quiver.vertices:
            mats[(g, v)] = parallel_transport(c, v, loop, steps_per_cell)
    return MonodromyRep(tuple(gens), mats, tuple(float(x) for x in x0))


@dataclass
class IntertwiningReport:
    residuals: dict
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {"pass": self.passed, "tol": self.tol, "residuals": dict(sorted(self.residuals.items()))}


def check_intertwining(b: QuiverBundle, rep: MonodromyRep, basepoint=None, tol: float = 1e-6) -> IntertwiningReport:
    """|A_a(x0) rho_s(g) - rho_t(g) A_a(x0)| per generator and arrow."""
    x0 = rep.basepoint if basepoint is None else basepoint
    res = {}
    for arr in b.quiver.arrows:
        A = interpolate(b.morphism[arr.id], x0)[0]
        for g in rep.generators:
            R = A @ rep.matrix(g, arr.source) - rep.matrix(g, arr.target) @ A
            res[f"{g}/{arr.id}"] = float(np.linalg.norm(R, 2)) if R.size else 0.0
    return IntertwiningReport(res, tol, all(r <= tol for r in res.values()))


# group actions on quiver representations ------------------------------------


def _intertwine_residual(A: np.ndarray, Rs: np.ndarray, Rt: np.ndarray) -> float:
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(A @ Rs - Rt @ A)))


@dataclass(frozen=True)
class GroupQuiverRep:
    """A quiver representation with automorphisms ``action[(g, v)]`` per group generator."""

    rep: QuiverRepPoint
    generators: tuple
    action: dict
    tol: float = 1e-8

    def __post_init__(self):
        q = self.rep.quiver
        for g in self.generators:
            for v in q.vertices:
                M = np.asarray(self.action.get((g, v), np.zeros((0, 0))), dtype=float)
                d = self.rep.dims[v]
                if M.shape != (d, d):
                    raise ShapeMismatch(f"action of {g!r} at {v!r} must be {d}x{d}")
                if d and np.linalg.matrix_rank(M) < d:
                    raise IntertwiningViolation(f"action of {g!r} at {v!r} is not invertible")
            for arr in q.arrows:
                A = np.asarray(self.rep.maps[arr.id], dtype=float).reshape(self.rep.dims[arr.target], self.rep.dims[arr.source])
                r = _intertwine_residual(A, np.asarray(self.action[(g, arr.source)]), np.asarray(self.action[(g, arr.target)]))
                scale = 1.0 + np.abs(A).max(initial=0.0)
                if r > self.tol * scale:
                    raise IntertwiningViolation(f"generator {g!r} does not commute with arrow {arr.id!r} (residual {r:.3g})")


@dataclass(frozen=True)
class QuiverOfGroupReps:
    """Per vertex a representation of the group, per arrow an equivariant map."""

    quiver: Quiver
    generators: tuple
    vertex_reps: dict
    maps: dict
    tol: float = 1e-8


def _same(x, y) -> bool:
    return np.array_equal(np.asarray(x), np.asarray(y))


def functor_F(x: QuiverOfGroupReps) -> GroupQuiverRep:
    """Rep(Q, Rep(G)) -> Rep(G, Rep(Q)): the underlying quiver rep plus the vertex actions."""
    q = x.quiver
    dims = {v: int(np.asarray(x.vertex_reps[v]["dim"])) for v in q.vertices}
    rep = QuiverRepPoint(q, dims, {a: np.array(m, dtype=float, copy=True) for a, m in x.maps.items()})
    action = {(g, v): np.array(x.vertex_reps[v]["action"][g], dtype=float, copy=True) for g in x.generators for v in q.vertices}
    return GroupQuiverRep(rep, tuple(x.generators), action, x.tol)


def functor_G(y: GroupQuiverRep) -> QuiverOfGroupReps:
    """Inverse of :func:`functor_F`."""
    q = y.rep.quiver
    vreps = {
        v: {"dim": y.rep.dims[v], "action": {g: np.array(y.action[(g, v)], dtype=float, copy=True) for g in y.generators}}
        for v in q.vertices
    }
    x = QuiverOfGroupReps(q, tuple(y.generators), vreps, {a: np.array(m, dtype=float, copy=True) for a, m in y.rep.maps.items()}, y.tol)
    _validate_equivariant(x)
    return x


def _validate_equivariant(x: QuiverOfGroupReps) -> None:
    for arr in x.quiver.arrows:
        A = np.asarray(x.maps[arr.id], dtype=float)
        for g in x.generators:
            Rs = np.asarray(x.vertex_reps[arr.source]["action"][g], dtype=float)
            Rt = np.asarray(x.vertex_reps[arr.target]["action"][g], dtype=float)
            if A.size and A.shape != (Rt.shape[0], Rs.shape[0]):
                raise ShapeMismatch(f"map of {arr.id!r} has the wrong shape")
            r = _intertwine_residual(A, Rs, Rt)
            if r > x.tol * (1.0 + np.abs(A).max(initial=0.0)):
                raise IntertwiningViolation(f"map of {arr.id!r} is not equivariant for {g!r} (residual {r:.3g})")


def same_quiver_of_group_reps(x: QuiverOfGroupReps, y: QuiverOfGroupReps) -> bool:
    if x.quiver != y.quiver or tuple(x.generators) != tuple(y.generators):
        return False
    for v in x.quiver.vertices:
        if int(x.vertex_reps[v]["dim"]) != int(y.vertex_reps[v]["dim"]):
            return False
        if any(not _same(x.vertex_reps[v]["action"][g], y.vertex_reps[v]["action"][g]) for g in x.generators):
            return False
    return all(_same(x.maps[a], y.maps[a]) for a in x.quiver.arrow_ids)


def same_group_quiver_rep(x: GroupQuiverRep, y: GroupQuiverRep) -> bool:
    if x.rep.quiver != y.rep.quiver or x.rep.dims != y.rep.dims or tuple(x.generators) != tuple(y.generators):
        return False
    if any(not _same(x.rep.maps[a], y.rep.maps[a]) for a in x.rep.quiver.arrow_ids):
        return False
    return set(x.action) == set(y.action) and all(_same(x.action[k], y.action[k]) for k in x.action)


# representation -> flat bundle on the circle --------------------------------


def bundle_from_rep(q: Quiver, grep: GroupQuiverRep, grid: GridManifold):
    """Flat bundle on a circle grid whose monodromy is the single generator's action.

    The connection is the constant form -log(R_i)/L dt with L the circle length;
    morphisms are the representation's constant maps.
    """
    if grid.dim != 1 or not grid.axes[0].periodic:
        raise ShapeMismatch("bundle_from_rep needs a 1D periodic (circle) grid")
    if len(grep.generators) != 1:
        raise ShapeMismatch("the circle group has exactly one generator")
    if grep.rep.quiver != q:
        raise ShapeMismatch("representation lives on a different quiver")
    g = grep.generators[0]
    L = grid.axes[0].length
    dims = grep.rep.dims
    if any(d < 1 for d in dims.values()):
        raise ShapeMismatch("every vertex needs positive dimension to form a bundle")
    omega = {v: MatrixFormField.constant(grid, [-real_logm(grep.action[(g, v)]) / L], degree=1) for v in q.vertices}
    morph = {
        a.id: MatrixFormField.constant(grid, np.asarray(grep.rep.maps[a.id], dtype=float).reshape(dims[a.target], dims[a.source]))
        for a in q.arrows
    }
    b = QuiverBundle(q, grid, dict(dims), morph)
    c = RelativeConnection(omega)
    rep = is_compatible(b, c, tol=1e-8 * (1.0 + max((np.abs(f.coeffs).max() for f in morph.values()), default=0.0)))
    if not rep.passed:
        worst = max(rep.norms, key=rep.norms.get)
        raise IntertwiningViolation(
            f"the chosen real logarithms do not intertwine along {worst!r} (residual {rep.norms[worst]:.3g})"
        )
    return b, c


def rep_from_monodromy(b: QuiverBundle, mono: MonodromyRep, basepoint=None) -> GroupQuiverRep:
    """Quiver representation at the basepoint with the monodromy as group action."""
    x0 = mono.basepoint if basepoint is None else basepoint
    maps = {a: interpolate(b.morphism[a], x0)[0] for a in b.quiver.arrow_ids}
    rep = QuiverRepPoint(b.quiver, dict(b.rank), maps)
    return GroupQuiverRep(rep, mono.generators, dict(mono.matrices), tol=1e-6)
