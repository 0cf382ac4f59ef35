"""Subbundle frames: pointwise subspace algebra and smooth frame continuation.

Subspaces of the fibres are carried as arrays of shape ``grid.shape + (n, k)``
whose columns are orthonormal at every point. Pointwise bases coming out of an
SVD are only defined up to a k x k rotation per point; :func:`continue_frame`
fixes that rotation so the frame varies smoothly over the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import DEFAULT_RANK_TOL, rank_profile
from .errors import FrameContinuationFailure, IntersectionDegeneracy, NonConstantRank, NotNested
from .grid import GridManifold, MatrixFormField
from .linalg import polar_factor, real_logm
from scipy.linalg import expm

SUBSPACE_TOL = 1e-6
MIN_OVERLAP = 0.5


@dataclass(frozen=True)
class FrameField:
    grid: GridManifold
    vectors: np.ndarray

    @property
    def n(self) -> int:
        return self.vectors.shape[-2]

    @property
    def k(self) -> int:
        return self.vectors.shape[-1]

    def projector(self) -> np.ndarray:
        B = self.vectors
        return B @ np.swapaxes(B, -1, -2)

    def orthonormality_defect(self) -> float:
        B = self.vectors
        if self.k == 0:
            return 0.0
        G = np.swapaxes(B, -1, -2) @ B
        return float(np.max(np.abs(G - np.eye(self.k))))

    def max_step(self) -> float:
        """Largest frame change between grid neighbours (smoothness diagnostic)."""
        out = 0.0
        if self.k == 0:
            return out
        for ax in range(self.grid.dim):
            diff = np.diff(self.vectors, axis=ax)
            out = max(out, float(np.max(np.linalg.norm(diff, axis=(-2, -1)))))
        return out

    def as_field(self) -> MatrixFormField:
        return MatrixFormField(self.grid, 0, self.vectors[..., None, :, :])


def full_frame(grid: GridManifold, n: int) -> FrameField:
    return FrameField(grid, np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy())


def empty_frame(grid: GridManifold, n: int) -> FrameField:
    return FrameField(grid, np.zeros(grid.shape + (n, 0)))


# pointwise subspace algebra -------------------------------------------------


def _constant_rank(ranks: np.ndarray, what: str, vertex=None) -> int:
    lo, hi = int(ranks.min()), int(ranks.max())
    if lo != hi:
        raise IntersectionDegeneracy(f"{what} has non-constant dimension ({lo}..{hi})", vertex)
    return lo


def span(M: np.ndarray, tol: float = SUBSPACE_TOL, what="span", vertex=None) -> np.ndarray:
    """Orthonormal basis of the column space of stacked matrices (absolute cut)."""
    n = M.shape[-2]
    if M.shape[-1] == 0:
        return np.zeros(M.shape[:-1] + (0,))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = _constant_rank(np.sum(s > tol, axis=-1), what, vertex)
    return U[..., :r] if r else np.zeros(M.shape[:-2] + (n, 0))


def subspace_sum(X: np.ndarray, Y: np.ndarray, vertex=None) -> np.ndarray:
    return span(np.concatenate([X, Y], axis=-1), what="sum of subspaces", vertex=vertex)


def subspace_intersection(X: np.ndarray, Y: np.ndarray, vertex=None) -> np.ndarray:
    n, kx, ky = X.shape[-2], X.shape[-1], Y.shape[-1]
    if kx == 0 or ky == 0:
        return np.zeros(X.shape[:-1] + (0,))
    M = np.concatenate([X, -Y], axis=-1)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    m = kx + ky
    s_full = np.zeros(s.shape[:-1] + (m,))
    s_full[..., : s.shape[-1]] = s
    null = _constant_rank(np.sum(s_full <= SUBSPACE_TOL, axis=-1), "intersection", vertex)
    if null == 0:
        return np.zeros(X.shape[:-1] + (0,))
    C = np.swapaxes(Vt[..., m - null :, :kx], -1, -2)
    return span(X @ C, tol=1e-3, what="intersection", vertex=vertex)


def push(A: np.ndarray, X: np.ndarray, rel_tol=DEFAULT_RANK_TOL, vertex=None) -> np.ndarray:
    """Image A(X) with the rank cut relative to |A| pointwise."""
    if X.shape[-1] == 0:
        return np.zeros(A.shape[:-1] + (0,))
    M = A @ X
    amax = np.linalg.norm(A, axis=(-2, -1))
    scaled = M / np.where(amax > 0, amax, 1.0)[..., None, None]
    return span(scaled, tol=max(rel_tol, 1e-10) * 10, what="image of a subspace", vertex=vertex)


def pull(A: np.ndarray, Y: np.ndarray, rel_tol=DEFAULT_RANK_TOL, vertex=None) -> np.ndarray:
    """Preimage A^-1(Y) = ker((I - P_Y) A)."""
    n_out, n_in = A.shape[-2], A.shape[-1]
    P = Y @ np.swapaxes(Y, -1, -2)
    M = (np.eye(n_out) - P) @ A
    amax = np.linalg.norm(A, axis=(-2, -1))
    scaled = M / np.where(amax > 0, amax, 1.0)[..., None, None]
    _, s, Vt = np.linalg.svd(scaled, full_matrices=True)
    r = _constant_rank(np.sum(s > max(rel_tol, 1e-10) * 10, axis=-1), "preimage of a subspace", vertex)
    if r == n_in:
        return np.zeros(A.shape[:-2] + (n_in, 0))
    return np.swapaxes(Vt[..., r:, :], -1, -2)


def contained(X: np.ndarray, Y: np.ndarray, tol=SUBSPACE_TOL) -> bool:
    """X <= Y at every point."""
    if X.shape[-1] == 0:
        return True
    if Y.shape[-1] < X.shape[-1]:
        return False
    R = X - Y @ (np.swapaxes(Y, -1, -2) @ X)
    return bool(np.max(np.linalg.norm(R, axis=-2)) <= tol * 10)


def same_subspace(X: np.ndarray, Y: np.ndarray) -> bool:
    return X.shape[-1] == Y.shape[-1] and contained(X, Y)


def orth_complement_within(sub: np.ndarray, within: np.ndarray, vertex=None) -> np.ndarray:
    """Orthonormal basis of within ∩ sub^⊥ (requires sub <= within)."""
    k = within.shape[-1] - sub.shape[-1]
    if k == 0:
        return np.zeros(within.shape[:-1] + (0,))
    P = sub @ np.swapaxes(sub, -1, -2)
    M = within - P @ within
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = _constant_rank(np.sum(s > 1e-3, axis=-1), "complement", vertex)
    if r != k:
        raise IntersectionDegeneracy("complement has the wrong dimension", vertex)
    return U[..., :k]


# frame continuation ---------------------------------------------------------


def _align(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """Rotate the basis ``cur`` to be as close as possible to ``prev``."""
    M = np.swapaxes(cur, -1, -2) @ prev
    Q, s = polar_factor(M)
    if np.min(s) < MIN_OVERLAP:
        raise FrameContinuationFailure(
            f"adjacent subspaces overlap too little (smallest singular value {np.min(s):.3g} < {MIN_OVERLAP})"
        )
    return cur @ Q


def _line_index(dim: int, axis: int, j: int):
    return (slice(None),) * axis + (j,) + (0,) * (dim - axis - 1)


def continue_frame(grid: GridManifold, basis: np.ndarray) -> FrameField:
    """Smooth frame spanning the same pointwise subspaces as ``basis``.

    Seeded at the first grid node and swept axis by axis; on periodic axes
    the closing rotation is spread evenly along each loop. A closing rotation
    with negative determinant means the subbundle has no global frame.
    """
    n, k = basis.shape[-2], basis.shape[-1]
    if k == 0:
        return FrameField(grid, np.zeros(grid.shape + (n, 0)))
    if k == n:
        return full_frame(grid, n)
    F = np.array(basis, dtype=float, copy=True)
    dim = grid.dim
    for axis in range(dim):
        size = grid.shape[axis]
        for j in range(1, size):
            prev = F[_line_index(dim, axis, j - 1)]
            F[_line_index(dim, axis, j)] = _align(prev, F[_line_index(dim, axis, j)])
        if grid.axes[axis].periodic:
            first = F[_line_index(dim, axis, 0)]
            last = F[_line_index(dim, axis, size - 1)]
            M = np.swapaxes(first, -1, -2) @ last
            H, s = polar_factor(M)
            if np.min(s) < MIN_OVERLAP:
                raise FrameContinuationFailure("frame does not close up around a periodic axis")
            H = H.reshape((-1, k, k))
            if np.any(np.linalg.det(H) < 0):
                raise FrameContinuationFailure(
                    "subbundle frame reverses orientation around a periodic axis; no global frame exists"
                )
            logs = np.stack([real_logm(h) for h in H])
            logs = 0.5 * (logs - np.swapaxes(logs, -1, -2))
            line_shape = F[_line_index(dim, axis, 0)].shape[:-2]
            logs = logs.reshape(line_shape + (k, k))
            if np.max(np.abs(logs)) > 1e-14:
                for j in range(1, size):
                    R = np.stack([expm(-(j / size) * L) for L in logs.reshape((-1, k, k))]).reshape(logs.shape)
                    idx = _line_index(dim, axis, j)
                    F[idx] = F[idx] @ R
    frame = FrameField(grid, F)
    _check_seams(grid, frame)
    return frame


def _check_seams(grid: GridManifold, frame: FrameField) -> None:
    F = frame.vectors
    for axis, ax in enumerate(grid.axes):
        if not ax.periodic:
            continue
        first = np.take(F, 0, axis=axis)
        last = np.take(F, ax.n - 1, axis=axis)
        M = np.swapaxes(first, -1, -2) @ last
        H, s = polar_factor(M)
        dev = np.linalg.norm(H - np.eye(frame.k), axis=(-2, -1))
        if np.min(s) < MIN_OVERLAP or np.max(dev) > MIN_OVERLAP:
            raise FrameContinuationFailure(f"frame is discontinuous across the periodic seam of axis {axis}")


# kernel / image / complement ------------------------------------------------


def _svd_split(f: MatrixFormField, rel_tol: float):
    prof = rank_profile(f, rel_tol)
    if not prof.is_constant:
        raise NonConstantRank("morphism field has non-constant rank", witness=prof.witness)
    U, _, Vt = np.linalg.svd(f.values(), full_matrices=True)
    return prof.value, U, np.swapaxes(Vt, -1, -2)


def kernel_frame(f: MatrixFormField, rel_tol: float = DEFAULT_RANK_TOL) -> FrameField:
    r, _, V = _svd_split(f, rel_tol)
    return continue_frame(f.grid, V[..., r:])


def image_frame(f: MatrixFormField, rel_tol: float = DEFAULT_RANK_TOL) -> FrameField:
    r, U, _ = _svd_split(f, rel_tol)
    return continue_frame(f.grid, U[..., :r])


def complement_in(sub: FrameField, within: FrameField | None = None, tol: float = 1e-8) -> FrameField:
    """Orthogonal complement of ``sub`` inside ``within`` (default: the whole fibre)."""
    within = full_frame(sub.grid, sub.n) if within is None else within
    if sub.k:
        R = sub.vectors - within.vectors @ (np.swapaxes(within.vectors, -1, -2) @ sub.vectors)
        if np.max(np.abs(R)) > tol:
            raise NotNested("sub frame is not contained in the enclosing frame")
    try:
        basis = orth_complement_within(sub.vectors, within.vectors)
    except IntersectionDegeneracy as exc:
        raise NotNested(str(exc)) from exc
    return continue_frame(sub.grid, basis)
