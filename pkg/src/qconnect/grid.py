"""Matrix-valued differential forms on sampled box manifolds (dimension <= 3).

A :class:`MatrixFormField` of degree ``p`` stores one ``rows x cols`` matrix per
grid point for every increasing multi-index of length ``p``. Coefficient arrays
have shape ``grid.shape + (ncomp, rows, cols)``, which is also the on-disk blob
layout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from .errors import DegreeOverflow, OutOfDomain, ShapeMismatch


@dataclass(frozen=True)
class Axis:
    n: int
    periodic: bool = False
    min: float = 0.0
    max: float = 1.0

    def __post_init__(self):
        if int(self.n) < 4:
            raise ValueError("each axis needs at least 4 points")
        if not self.max > self.min:
            raise ValueError("axis max must exceed min")

    @property
    def length(self) -> float:
        return self.max - self.min

    @property
    def h(self) -> float:
        return self.length / (self.n if self.periodic else self.n - 1)

    def points(self) -> np.ndarray:
        if self.periodic:
            return self.min + self.h * np.arange(self.n)
        return np.linspace(self.min, self.max, self.n)

    def to_dict(self) -> dict:
        return {"n": self.n, "periodic": self.periodic, "min": self.min, "max": self.max}


class GridManifold:
    """Product of 1 to 3 uniformly sampled axes, each periodic or bounded."""

    def __init__(self, axes):
        axes = tuple(a if isinstance(a, Axis) else Axis(**a) for a in axes)
        if not 1 <= len(axes) <= 3:
            raise ValueError("grid dimension must be 1, 2 or 3")
        self.axes = axes
        for k, ax in enumerate(axes):
            if not ax.periodic and ax.min < 0 < ax.max:
                u = -ax.min / ax.h
                if abs(u - round(u)) > 1e-9:
                    warnings.warn(f"axis {k} contains 0 but 0 is not a grid node", stacklevel=2)

    @classmethod
    def interval(cls, lo=-1.0, hi=1.0, n=129, periodic=False) -> "GridManifold":
        return cls([Axis(n, periodic, lo, hi)])

    @classmethod
    def circle(cls, n=256, length=2 * math.pi) -> "GridManifold":
        return cls([Axis(n, True, 0.0, length)])

    @classmethod
    def box(cls, n, dim, lo=-1.0, hi=1.0, periodic=False) -> "GridManifold":
        return cls([Axis(n, periodic, lo, hi) for _ in range(dim)])

    @classmethod
    def torus(cls, n=64, dim=2, length=2 * math.pi) -> "GridManifold":
        return cls([Axis(n, True, 0.0, length) for _ in range(dim)])

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.n for a in self.axes)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(a.h for a in self.axes)

    @property
    def h(self) -> float:
        """Largest spacing; the tolerance scale for every O(h^p) contract."""
        return max(self.spacing)

    def multi_indices(self, p: int) -> list[tuple[int, ...]]:
        return list(combinations(range(self.dim), p))

    def ncomp(self, p: int) -> int:
        return math.comb(self.dim, p)

    @cached_property
    def _coords(self):
        return np.meshgrid(*[a.points() for a in self.axes], indexing="ij")

    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(self._coords)

    def node(self, index) -> np.ndarray:
        return np.array([a.points()[i] for a, i in zip(self.axes, index)])

    def nearest_node(self, point) -> tuple[int, ...]:
        idx = []
        for a, x in zip(self.axes, np.atleast_1d(point)):
            u = (x - a.min) / a.h
            i = int(round(u))
            idx.append(i % a.n if a.periodic else min(max(i, 0), a.n - 1))
        return tuple(idx)

    def to_dict(self) -> dict:
        return {"axes": [a.to_dict() for a in self.axes]}

    def __eq__(self, other):
        return isinstance(other, GridManifold) and self.axes == other.axes

    def __hash__(self):
        return hash(self.axes)

    def __repr__(self):
        return f"GridManifold({list(self.axes)!r})"


def _perm_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


class MatrixFormField:
    """Degree-p differential form with ``rows x cols`` matrix coefficients."""

    __slots__ = ("grid", "degree", "coeffs")

    def __init__(self, grid: GridManifold, degree: int, coeffs):
        if degree < 0 or degree > grid.dim:
            raise DegreeOverflow(f"degree {degree} not representable on a {grid.dim}-dimensional grid")
        coeffs = np.array(coeffs, dtype=np.float64)
        expected = grid.shape + (grid.ncomp(degree),)
        if coeffs.ndim != grid.dim + 3 or coeffs.shape[: grid.dim + 1] != expected:
            raise ShapeMismatch(f"coefficient array has shape {coeffs.shape}, expected {expected} + (rows, cols)")
        coeffs.setflags(write=False)
        self.grid = grid
        self.degree = degree
        self.coeffs = coeffs

    # construction -----------------------------------------------------------
    @classmethod
    def zeros(cls, grid, degree, rows, cols=None) -> "MatrixFormField":
        cols = rows if cols is None else cols
        return cls(grid, degree, np.zeros(grid.shape + (grid.ncomp(degree), rows, cols)))

    @classmethod
    def constant(cls, grid, matrix, degree=0) -> "MatrixFormField":
        """Constant field; for degree > 0 pass one matrix per component."""
        m = np.asarray(matrix, dtype=float)
        if degree == 0:
            m = np.atleast_2d(m)[None]
        if m.ndim != 3 or m.shape[0] != grid.ncomp(degree):
            raise ShapeMismatch("need one matrix per form component")
        return cls(grid, degree, np.broadcast_to(m, grid.shape + m.shape))

    @classmethod
    def identity(cls, grid, n) -> "MatrixFormField":
        return cls.constant(grid, np.eye(n))

    @classmethod
    def sample(cls, grid, fn, degree=0) -> "MatrixFormField":
        """Sample ``fn(*coords)`` at the grid nodes.

        For degree 0 ``fn`` returns an array of shape ``grid.shape + (rows, cols)``;
        for higher degree it returns a sequence with one such array per
        increasing multi-index.
        """
        out = fn(*grid.coords())
        if degree == 0:
            out = [out]
        comps = [np.broadcast_to(np.asarray(c, dtype=float), grid.shape + np.shape(c)[-2:]) for c in out]
        if len(comps) != grid.ncomp(degree):
            raise ShapeMismatch(f"expected {grid.ncomp(degree)} components, got {len(comps)}")
        return cls(grid, degree, np.stack(comps, axis=grid.dim))

    def like(self, coeffs, degree=None) -> "MatrixFormField":
        return MatrixFormField(self.grid, self.degree if degree is None else degree, coeffs)

    # shape ------------------------------------------------------------------
    @property
    def rows(self) -> int:
        return self.coeffs.shape[-2]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[self.grid.dim]

    @property
    def multi_indices(self):
        return self.grid.multi_indices(self.degree)

    def component(self, index) -> np.ndarray:
        """Coefficient array (grid.shape + (rows, cols)) for one multi-index."""
        k = self.multi_indices.index(tuple(index))
        return self.coeffs[..., k, :, :]

    def values(self) -> np.ndarray:
        """Degree-0 convenience: array of shape grid.shape + (rows, cols)."""
        return self.coeffs[..., 0, :, :]

    # arithmetic -------------------------------------------------------------
    def _check_same(self, other):
        if not isinstance(other, MatrixFormField):
            return NotImplemented
        if other.grid != self.grid or other.degree != self.degree or other.coeffs.shape != self.coeffs.shape:
            raise ShapeMismatch("fields differ in grid, degree or matrix shape")
        return None

    def __add__(self, other):
        bad = self._check_same(other)
        return bad if bad is not None else self.like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        bad = self._check_same(other)
        return bad if bad is not None else self.like(self.coeffs - other.coeffs)

    def __neg__(self):
        return self.like(-self.coeffs)

    def __mul__(self, scalar):
        return self.like(self.coeffs * float(scalar))

    __rmul__ = __mul__

    @property
    def T(self) -> "MatrixFormField":
        return self.like(np.swapaxes(self.coeffs, -1, -2))

    def __repr__(self):
        return f"MatrixFormField(degree={self.degree}, shape={self.rows}x{self.cols}, grid={self.grid.shape})"


def partial(grid: GridManifold, arr: np.ndarray, k: int) -> np.ndarray:
    """Second-order derivative along grid axis ``k`` (leading axes of ``arr``)."""
    ax = grid.axes[k]
    if ax.periodic:
        return (np.roll(arr, -1, axis=k) - np.roll(arr, 1, axis=k)) / (2.0 * ax.h)
    return np.gradient(arr, ax.h, axis=k, edge_order=2)


def exterior_derivative(f: MatrixFormField) -> MatrixFormField:
    grid = f.grid
    p = f.degree
    if p >= grid.dim:
        raise DegreeOverflow(f"d of a {p}-form on a {grid.dim}-dimensional grid")
    src = grid.multi_indices(p)
    dst = grid.multi_indices(p + 1)
    out = np.zeros(grid.shape + (len(dst), f.rows, f.cols))
    cache = {}
    for kk, K in enumerate(dst):
        for pos, k in enumerate(K):
            rest = K[:pos] + K[pos + 1 :]
            key = (k, rest)
            if key not in cache:
                cache[key] = partial(grid, f.coeffs[..., src.index(rest), :, :], k)
            out[..., kk, :, :] += (-1) ** pos * cache[key]
    return MatrixFormField(grid, p + 1, out)


def wedge(f: MatrixFormField, g: MatrixFormField) -> MatrixFormField:
    """Matrix wedge product: (f ^ g)_K = sum over K = I u J of sign(I, J) f_I g_J."""
    if f.grid != g.grid:
        raise ShapeMismatch("fields live on different grids")
    if f.cols != g.rows:
        raise ShapeMismatch(f"cannot multiply {f.rows}x{f.cols} by {g.rows}x{g.cols}")
    grid = f.grid
    p, q = f.degree, g.degree
    if p + q > grid.dim:
        raise DegreeOverflow(f"wedge of degrees {p} and {q} on a {grid.dim}-dimensional grid")
    fi = grid.multi_indices(p)
    gi = grid.multi_indices(q)
    dst = grid.multi_indices(p + q)
    out = np.zeros(grid.shape + (len(dst), f.rows, g.cols))
    for kk, K in enumerate(dst):
        for I in combinations(K, p):
            J = tuple(x for x in K if x not in I)
            sign = _perm_sign(I + J)
            out[..., kk, :, :] += sign * (f.coeffs[..., fi.index(I), :, :] @ g.coeffs[..., gi.index(J), :, :])
    return MatrixFormField(grid, p + q, out)


def pointwise_matmul(f: MatrixFormField, g: MatrixFormField) -> MatrixFormField:
    """Pointwise matrix product where one factor is a 0-form."""
    if f.degree != 0 and g.degree != 0:
        raise DegreeOverflow("pointwise_matmul needs a degree-0 factor; use wedge")
    if f.grid != g.grid:
        raise ShapeMismatch("fields live on different grids")
    if f.cols != g.rows:
        raise ShapeMismatch(f"cannot multiply {f.rows}x{f.cols} by {g.rows}x{g.cols}")
    return MatrixFormField(f.grid, f.degree + g.degree, f.coeffs @ g.coeffs)


def scalar_times_identity(theta: MatrixFormField, n: int) -> MatrixFormField:
    """theta * I_n for a scalar (1x1) form."""
    if theta.rows != 1 or theta.cols != 1:
        raise ShapeMismatch("twist forms must be scalar")
    return theta.like(theta.coeffs * np.eye(n))


def sup_norm(f: MatrixFormField) -> float:
    if f.coeffs.size == 0:
        return 0.0
    return float(np.max(np.abs(f.coeffs)))


def _locate(grid: GridManifold, points: np.ndarray):
    """Lower-corner indices and fractional offsets for multilinear weights."""
    lo = np.empty(points.shape, dtype=np.int64)
    frac = np.empty(points.shape)
    for k, ax in enumerate(grid.axes):
        u = (points[:, k] - ax.min) / ax.h
        r = np.round(u)
        u = np.where(np.abs(u - r) < 1e-9, r, u)
        if ax.periodic:
            u = np.mod(u, ax.n)
            i0 = np.floor(u).astype(np.int64)
            i0 = np.where(i0 >= ax.n, 0, i0)
            lo[:, k] = i0
            frac[:, k] = u - np.floor(u)
        else:
            eps = 1e-10 * (ax.n - 1)
            if np.any(u < -eps) or np.any(u > ax.n - 1 + eps):
                raise OutOfDomain(f"point outside axis {k} extent [{ax.min}, {ax.max}]")
            u = np.clip(u, 0.0, ax.n - 1)
            i0 = np.minimum(np.floor(u).astype(np.int64), ax.n - 2)
            lo[:, k] = i0
            frac[:, k] = u - i0
    return lo, frac


def interpolate_many(f: MatrixFormField, points) -> np.ndarray:
    """Multilinear interpolation at many points; returns (m, ncomp, rows, cols)."""
    grid = f.grid
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.dim:
        raise ShapeMismatch(f"points must have {grid.dim} coordinates")
    lo, frac = _locate(grid, points)
    out = np.zeros((points.shape[0],) + f.coeffs.shape[grid.dim :])
    for corner in range(2**grid.dim):
        idx = []
        w = np.ones(points.shape[0])
        for k, ax in enumerate(grid.axes):
            bit = (corner >> k) & 1
            ik = lo[:, k] + bit
            if ax.periodic:
                ik = ik % ax.n
            idx.append(ik)
            w = w * (frac[:, k] if bit else 1.0 - frac[:, k])
        out += w[:, None, None, None] * f.coeffs[tuple(idx)]
    return out


def interpolate(f: MatrixFormField, point) -> np.ndarray:
    """Per-component matrices of ``f`` at ``point``; shape (ncomp, rows, cols)."""
    return interpolate_many(f, np.atleast_1d(np.asarray(point, dtype=float))[None, :])[0]
