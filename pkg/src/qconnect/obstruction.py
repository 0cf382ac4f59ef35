"""Obstruction to relative connections: beta classes, the L-map, jet splittings, fibrewise Ext^1.

Alpha and beta collections are plain dicts: ``alpha[vertex]`` is an r x r
1-form and ``beta[arrow]`` an r_t x r_s 1-form. Sign convention: ``beta`` is
minus the compatibility residual of the base connection, so solving
``L(alpha) = beta`` and adding ``alpha`` gives a compatible connection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy

from .bundle import DEFAULT_RANK_TOL, ROUNDOFF_FLOOR, QuiverBundle
from .connection import RelativeConnection, check_shapes, compatibility_residual, default_tolerance, source_side_form
from .errors import ShapeMismatch
from .grid import MatrixFormField, exterior_derivative, sup_norm
from .quiver import Quiver

AlphaCollection = dict
BetaCollection = dict


def beta_fields(b: QuiverBundle, base: RelativeConnection) -> BetaCollection:
    """beta_a = A (omega_s + theta I) - omega_t A - dA, i.e. minus the compatibility residual."""
    return {a: -compatibility_residual(b, base, a) for a in b.quiver.arrow_ids}


def _check_alpha(b: QuiverBundle, alpha: AlphaCollection) -> None:
    if set(alpha) != set(b.quiver.vertices):
        raise ShapeMismatch("alpha needs one form per vertex")
    for v, f in alpha.items():
        if f.grid != b.grid or f.degree != 1 or (f.rows, f.cols) != (b.rank[v], b.rank[v]):
            raise ShapeMismatch(f"alpha at {v!r} must be a {b.rank[v]}x{b.rank[v]} 1-form on the bundle grid")


def _check_beta(b: QuiverBundle, beta: BetaCollection) -> None:
    if set(beta) != set(b.quiver.arrow_ids):
        raise ShapeMismatch("beta needs one form per arrow")
    for arr in b.quiver.arrows:
        f = beta[arr.id]
        want = (b.rank[arr.target], b.rank[arr.source])
        if f.grid != b.grid or f.degree != 1 or (f.rows, f.cols) != want:
            raise ShapeMismatch(f"beta at {arr.id!r} must be a {want[0]}x{want[1]} 1-form on the bundle grid")


def l_map_apply(b: QuiverBundle, alpha: AlphaCollection) -> BetaCollection:
    """L(alpha)_a = alpha_t A_a - A_a alpha_s, per 1-form component."""
    _check_alpha(b, alpha)
    out = {}
    for arr in b.quiver.arrows:
        A = b.morphism[arr.id].coeffs
        out[arr.id] = MatrixFormField(b.grid, 1, alpha[arr.target].coeffs @ A - A @ alpha[arr.source].coeffs)
    return out


# pointwise linear system ----------------------------------------------------


def _layout(b: QuiverBundle):
    """Column offsets of vec(alpha_v) and row offsets of vec(beta_a), both row-major."""
    cols, c = {}, 0
    for v in b.quiver.vertices:
        cols[v] = c
        c += b.rank[v] ** 2
    rows, r = {}, 0
    for arr in b.quiver.arrows:
        rows[arr.id] = r
        r += b.rank[arr.target] * b.rank[arr.source]
    return cols, c, rows, r


def l_matrix(b: QuiverBundle) -> np.ndarray:
    """Pointwise matrix of L: array grid.shape + (equations, unknowns)."""
    cols, nc, rows, nr = _layout(b)
    M = np.zeros(b.grid.shape + (nr, nc))
    for arr in b.quiver.arrows:
        A = b.A(arr.id)
        rt, rs = b.rank[arr.target], b.rank[arr.source]
        r0 = rows[arr.id]
        ct, cs = cols[arr.target], cols[arr.source]
        # vec(X A) = (I kron A^T) vec X ; vec(A Y) = (A kron I) vec Y
        M[..., r0 : r0 + rt * rs, ct : ct + rt * rt] += np.einsum("ij,...lk->...ikjl", np.eye(rt), A).reshape(
            b.grid.shape + (rt * rs, rt * rt)
        )
        M[..., r0 : r0 + rt * rs, cs : cs + rs * rs] -= np.einsum("...ij,kl->...ikjl", A, np.eye(rs)).reshape(
            b.grid.shape + (rt * rs, rs * rs)
        )
    return M


@dataclass
class LCertificate:
    status: str
    alpha: AlphaCollection | None
    witness_points: list
    residuals: np.ndarray
    tolerance: np.ndarray
    ranks: np.ndarray
    beta_norms: dict
    abs_tol: float
    rel_tol: float
    notes: list = field(default_factory=list)

    @property
    def solvable(self) -> bool:
        return self.status == "solvable"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "solvable": self.solvable,
            "witness_points": [[float(x) for x in w] for w in self.witness_points],
            "beta_norms": dict(sorted(self.beta_norms.items())),
            "max_residual": float(np.max(self.residuals)) if self.residuals.size else 0.0,
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "l_rank": {
                "min": int(self.ranks.min()) if self.ranks.size else 0,
                "max": int(self.ranks.max()) if self.ranks.size else 0,
                "constant": bool(self.ranks.size == 0 or self.ranks.min() == self.ranks.max()),
            },
            "notes": list(self.notes),
        }


def solve_l_map(
    b: QuiverBundle,
    beta: BetaCollection,
    rel_tol: float = 1e-6,
    abs_tol: float | None = None,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> LCertificate:
    """Pointwise minimum-norm solve of L(alpha) = beta with a solvability certificate.

    A point fails when its least-squares residual exceeds
    ``max(rel_tol * |beta(point)|, abs_tol)``. ``abs_tol`` defaults to the
    discretisation floor 10 h^2 (1 + max sup-norm), since beta computed from
    finite differences is only accurate to O(h^2). Status is ``unsolvable`` if
    any point fails, ``inconclusive`` if none fails but the pointwise rank of L
    varies (the pointwise solution need not be smooth), else ``solvable``.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    _check_beta(b, beta)
    grid = b.grid
    if abs_tol is None:
        abs_tol = default_tolerance(b)
    cols, nc, rows, nr = _layout(b)
    ncomp = grid.ncomp(1)
    rhs = np.zeros(grid.shape + (nr, ncomp))
    for arr in b.quiver.arrows:
        f = beta[arr.id].coeffs
        r0 = rows[arr.id]
        k = f.shape[-2] * f.shape[-1]
        rhs[..., r0 : r0 + k, :] = np.moveaxis(f.reshape(grid.shape + (ncomp, k)), -1, -2)
    M = l_matrix(b)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    smax = s[..., :1] if s.shape[-1] else np.zeros(grid.shape + (1,))
    ref = float(np.max(smax)) if smax.size else 0.0
    thr = np.maximum(rank_tol * smax, ROUNDOFF_FLOOR * ref)
    keep = s > thr
    ranks = np.sum(keep, axis=-1)
    sinv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    coef = (np.swapaxes(U, -1, -2) @ rhs) * sinv[..., None]
    x = np.swapaxes(Vt, -1, -2) @ coef
    res_vec = M @ x - rhs
    residuals = np.max(np.abs(res_vec), axis=(-2, -1))
    beta_point = np.max(np.abs(rhs), axis=(-2, -1))
    tol = np.maximum(rel_tol * beta_point, abs_tol)
    bad = residuals > tol
    witness = [tuple(float(v) for v in grid.node(i)) for i in np.argwhere(bad)]
    beta_norms = {a: sup_norm(f) for a, f in beta.items()}
    notes = []
    if bad.any():
        status = "unsolvable"
        notes.append(f"L(alpha) = beta has no pointwise solution at {int(bad.sum())} node(s)")
    elif ranks.size and ranks.min() != ranks.max():
        status = "inconclusive"
        notes.append("pointwise rank of L varies; a smooth preimage is neither certified nor excluded")
    else:
        status = "solvable"
    alpha = None
    if status == "solvable":
        alpha = {}
        for v in b.quiver.vertices:
            r = b.rank[v]
            block = x[..., cols[v] : cols[v] + r * r, :]
            alpha[v] = MatrixFormField(grid, 1, np.moveaxis(block, -1, -2).reshape(grid.shape + (ncomp, r, r)))
    return LCertificate(status, alpha, witness, residuals, tol, ranks, beta_norms, float(abs_tol), rel_tol, notes)


# jet splitting --------------------------------------------------------------


@dataclass
class JetReport:
    splitting_defect: float
    jet_residuals: dict
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "tol": self.tol,
            "splitting_defect": self.splitting_defect,
            "jet_residuals": dict(sorted(self.jet_residuals.items())),
        }


def jet_splitting_check(b: QuiverBundle, c: RelativeConnection, tol: float | None = None) -> JetReport:
    """Check that gamma_i = (id, nabla_i) is a morphism of first-jet quiver bundles.

    Jets are written as pairs (value, 1-form part). The arrow acts on jets by
    (s, tau) -> (A s, A tau), so for every constant frame section e_j we compare
    (A e_j, A nabla'_s e_j) against gamma_t(A e_j) = (A e_j, nabla_t(A e_j)).
    """
    check_shapes(b, c)
    tol = default_tolerance(b, c) if tol is None else tol
    grid = b.grid
    defect = 0.0
    residuals = {}
    for arr in b.quiver.arrows:
        A = b.morphism[arr.id]
        rs = b.rank[arr.source]
        w_s = source_side_form(b, c, arr.id).coeffs
        w_t = c.omega[arr.target].coeffs
        worst = 0.0
        for j in range(rs):
            e = np.zeros((rs, 1))
            e[j] = 1.0
            # gamma_s(e) = (e, de + omega' e) with de = 0 for a constant section
            val_s, jet_s = e, w_s @ e
            defect = max(defect, float(np.max(np.abs(val_s - e))))
            image_val = A.coeffs @ val_s
            image_jet = A.coeffs @ jet_s
            Ae = MatrixFormField(grid, 0, image_val)
            target_jet = exterior_derivative(Ae).coeffs + w_t @ image_val
            worst = max(worst, float(np.max(np.abs(image_jet - target_jet))))
        residuals[arr.id] = worst
    return JetReport(defect, residuals, tol, defect == 0.0 and all(r <= tol for r in residuals.values()))


# fibrewise Ext^1 ------------------------------------------------------------


@dataclass(frozen=True)
class QuiverRepPoint:
    quiver: Quiver
    dims: dict
    maps: dict

    def __post_init__(self):
        q = self.quiver
        if set(self.dims) != set(q.vertices):
            raise ShapeMismatch("dimensions must be given for exactly the quiver's vertices")
        if set(self.maps) != set(q.arrow_ids):
            raise ShapeMismatch("matrices must be given for exactly the quiver's arrows")
        for arr in q.arrows:
            shape = np.shape(self.maps[arr.id])
            want = (self.dims[arr.target], self.dims[arr.source])
            if want[0] * want[1] == 0:
                continue
            if shape != want:
                raise ShapeMismatch(f"matrix of {arr.id!r} has shape {shape}, expected {want}")


def _is_exact(x) -> bool:
    arr = np.asarray(x, dtype=object).ravel()
    return all(isinstance(v, (int, np.integer, Fraction, sympy.Rational)) or (isinstance(v, float) and v.is_integer()) for v in arr)


def _hom_system(V: QuiverRepPoint, W: QuiverRepPoint, exact: bool):
    q = V.quiver
    cols, c = {}, 0
    for v in q.vertices:
        cols[v] = c
        c += W.dims[v] * V.dims[v]
    nrows = sum(W.dims[a.target] * V.dims[a.source] for a in q.arrows)
    if exact:
        M = sympy.zeros(nrows, c)
    else:
        M = np.zeros((nrows, c))
    r0 = 0
    for arr in q.arrows:
        s, t = arr.source, arr.target
        ds, dt_v, es, et = V.dims[s], V.dims[t], W.dims[s], W.dims[t]
        phi = np.asarray(V.maps[arr.id], dtype=object if exact else float).reshape(dt_v, ds)
        psi = np.asarray(W.maps[arr.id], dtype=object if exact else float).reshape(et, es)
        # row (p, q) of f_t phi - psi f_s, for p < et, q < ds
        for p in range(et):
            for qq in range(ds):
                row = r0 + p * ds + qq
                for m in range(dt_v):
                    val = phi[m, qq]
                    if val:
                        M[row, cols[t] + p * dt_v + m] += sympy.Rational(val) if exact else val
                for m in range(es):
                    val = psi[p, m]
                    if val:
                        M[row, cols[s] + m * ds + qq] -= sympy.Rational(val) if exact else val
        r0 += et * ds
    return M, nrows, c


def hom_ext_dims(V: QuiverRepPoint, W: QuiverRepPoint, rank_tol: float = 1e-8) -> tuple[int, int]:
    """(dim Hom(V, W), dim Ext^1(V, W)) for representations of the same quiver."""
    if V.quiver != W.quiver:
        raise ShapeMismatch("representations live on different quivers")
    entries = [x for m in list(V.maps.values()) + list(W.maps.values()) for x in np.asarray(m, dtype=object).ravel()]
    exact = _is_exact(entries)
    M, nrows, ncols = _hom_system(V, W, exact)
    if nrows == 0 or ncols == 0:
        rank = 0
    elif exact:
        rank = M.rank()
    else:
        sv = np.linalg.svd(M, compute_uv=False)
        rank = int(np.sum(sv > rank_tol * max(sv[0], 1.0))) if sv.size else 0
    return ncols - rank, nrows - rank


def ext1_dim_point(V: QuiverRepPoint, W: QuiverRepPoint, rank_tol: float = 1e-8) -> int:
    return hom_ext_dims(V, W, rank_tol)[1]


def hom_dim_point(V: QuiverRepPoint, W: QuiverRepPoint, rank_tol: float = 1e-8) -> int:
    return hom_ext_dims(V, W, rank_tol)[0]


def euler_form(q: Quiver, d: dict, e: dict) -> int:
    return sum(d[v] * e[v] for v in q.vertices) - sum(d[a.source] * e[a.target] for a in q.arrows)
