"""Quiver bundles over a grid: morphism fields, path morphisms, rank analysis."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPath, ShapeMismatch
from .grid import GridManifold, MatrixFormField
from .quiver import Path, Quiver, enumerate_paths, opposite, validate_path

DEFAULT_RANK_TOL = 1e-8
ROUNDOFF_FLOOR = 1e-12


@dataclass(frozen=True)
class QuiverBundle:
    """Trivial vector bundles of rank ``rank[i]`` joined by morphism fields.

    ``morphism[a]`` is a degree-0 field of shape rank(t(a)) x rank(s(a)).
    ``twist_form[a]``, when given, is the scalar 1-form of the connection on the
    trivial line bundle twisting arrow ``a``.
    """

    quiver: Quiver
    grid: GridManifold
    rank: dict
    morphism: dict
    twist_form: dict | None = None

    def __post_init__(self):
        q = self.quiver
        if set(self.rank) != set(q.vertices):
            raise ShapeMismatch("ranks must be given for exactly the quiver's vertices")
        for v, r in self.rank.items():
            if int(r) < 1:
                raise ShapeMismatch(f"vertex {v!r} has non-positive rank")
        if set(self.morphism) != set(q.arrow_ids):
            raise ShapeMismatch("morphisms must be given for exactly the quiver's arrows")
        for arr in q.arrows:
            f = self.morphism[arr.id]
            if f.grid != self.grid:
                raise ShapeMismatch(f"morphism {arr.id!r} lives on a different grid")
            if f.degree != 0:
                raise ShapeMismatch(f"morphism {arr.id!r} must be a 0-form")
            want = (self.rank[arr.target], self.rank[arr.source])
            if (f.rows, f.cols) != want:
                raise ShapeMismatch(
                    f"morphism {arr.id!r} has shape {f.rows}x{f.cols}, expected {want[0]}x{want[1]}"
                )
        for a, th in (self.twist_form or {}).items():
            if a not in q.arrow_ids:
                raise ShapeMismatch(f"twist form for unknown arrow {a!r}")
            if th.grid != self.grid or th.degree != 1 or (th.rows, th.cols) != (1, 1):
                raise ShapeMismatch(f"twist form of {a!r} must be a scalar 1-form on the bundle grid")

    def A(self, a: str) -> np.ndarray:
        """Morphism matrices of arrow ``a``: array grid.shape + (rows, cols)."""
        return self.morphism[a].values()

    def theta(self, a: str) -> MatrixFormField:
        if self.twist_form and a in self.twist_form:
            return self.twist_form[a]
        return MatrixFormField.zeros(self.grid, 1, 1)

    def replace(self, **kw) -> "QuiverBundle":
        data = dict(quiver=self.quiver, grid=self.grid, rank=self.rank, morphism=self.morphism, twist_form=self.twist_form)
        data.update(kw)
        return QuiverBundle(**data)


def path_morphism(b: QuiverBundle, p: Path) -> MatrixFormField:
    try:
        validate_path(b.quiver, p)
    except Exception as exc:
        raise InvalidPath(str(exc)) from exc
    if p.is_trivial:
        return MatrixFormField.identity(b.grid, b.rank[p.vertex])
    out = b.morphism[p.arrows[0]].coeffs
    for a in p.arrows[1:]:
        out = b.morphism[a].coeffs @ out
    return MatrixFormField(b.grid, 0, out)


@dataclass
class RankProfile:
    ranks: np.ndarray
    is_constant: bool
    value: int | None
    rel_tol: float
    borderline: bool = False
    witness: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "is_constant": self.is_constant,
            "value": self.value,
            "min_rank": int(self.ranks.min()),
            "max_rank": int(self.ranks.max()),
            "borderline": self.borderline,
            "witness": [list(map(float, w)) for w in self.witness],
        }


def pointwise_ranks(mats: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL, ref_scale: float | None = None):
    """Numerical ranks of a stack of matrices plus the borderline flag.

    The cut is ``rel_tol`` times the pointwise largest singular value, floored
    at roundoff level of ``ref_scale`` (default: the largest singular value
    over the whole stack) so exact cancellations count as zero.
    """
    sv = np.linalg.svd(mats, compute_uv=False)
    if sv.shape[-1] == 0:
        return np.zeros(mats.shape[:-2], dtype=int), False
    smax = sv[..., :1]
    ref = float(np.max(smax)) if ref_scale is None else ref_scale
    thr = np.maximum(rel_tol * smax, ROUNDOFF_FLOOR * ref)
    ranks = np.sum(sv > thr, axis=-1)
    # singular values within two decades of the cut are ambiguous
    near = (sv > 0.01 * thr) & (sv < 100 * thr) & (smax > 0)
    return ranks, bool(np.any(near))


def rank_profile(f: MatrixFormField, rel_tol: float = DEFAULT_RANK_TOL, ref_scale: float | None = None) -> RankProfile:
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    if f.degree != 0:
        raise ShapeMismatch("rank_profile needs a 0-form")
    ranks, borderline = pointwise_ranks(f.values(), rel_tol, ref_scale)
    values = Counter(ranks.ravel().tolist())
    constant = len(values) == 1
    if constant:
        value = int(ranks.flat[0])
        witness = []
    else:
        value = None
        top = max(values.values())
        typical = max(r for r, c in values.items() if c == top)
        idx = np.argwhere(ranks != typical)
        witness = [tuple(f.grid.node(i)) for i in idx]
    return RankProfile(ranks, constant, value, rel_tol, borderline, witness)


@dataclass
class PathRankReport:
    profiles: dict
    paths: list
    all_constant: bool

    def first_failure(self):
        for p in self.paths:
            if not self.profiles[p.name].is_constant:
                return p
        return None

    def to_dict(self) -> dict:
        return {
            "all_constant": self.all_constant,
            "paths": {p.name: self.profiles[p.name].to_dict() for p in self.paths},
        }


def _factor_scale(b: QuiverBundle, p: Path) -> float:
    """Product of the largest operator norms of the factors of a path."""
    out = 1.0
    for a in p.arrows:
        out *= float(np.max(np.linalg.norm(b.A(a), 2, axis=(-2, -1))))
    return out


def check_all_path_ranks(b: QuiverBundle, max_len="all", rel_tol: float = DEFAULT_RANK_TOL) -> PathRankReport:
    paths = enumerate_paths(b.quiver, max_len)
    profiles = {p.name: rank_profile(path_morphism(b, p), rel_tol, _factor_scale(b, p)) for p in paths}
    return PathRankReport(profiles, paths, all(pr.is_constant for pr in profiles.values()))


def dual_bundle(b: QuiverBundle) -> QuiverBundle:
    """Dual bundle over the opposite quiver: transposed morphisms, same twists."""
    return QuiverBundle(
        opposite(b.quiver),
        b.grid,
        dict(b.rank),
        {a: f.T for a, f in b.morphism.items()},
        None if b.twist_form is None else dict(b.twist_form),
    )
