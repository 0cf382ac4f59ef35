"""Small dense linear algebra: real matrix logarithm, polar factors, QR frames."""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import NoRealLogarithm

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(12)
_NODES = 0.5 * (_NODES + 1.0)
_WEIGHTS = 0.5 * _WEIGHTS


def _schur_blocks(T: np.ndarray) -> list[tuple[int, int]]:
    n = T.shape[0]
    blocks = []
    i = 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def _sqrt_block(B: np.ndarray) -> np.ndarray:
    if B.shape == (1, 1):
        if B[0, 0] <= 0:
            raise NoRealLogarithm("non-positive real eigenvalue in square-root stage")
        return np.sqrt(B)
    theta = 0.5 * (B[0, 0] + B[1, 1])
    mu = np.sqrt(max(-(B[0, 0] - theta) ** 2 - B[0, 1] * B[1, 0], 0.0))
    alpha = np.sqrt(0.5 * (theta + np.hypot(theta, mu)))
    return alpha * np.eye(2) + (B - theta * np.eye(2)) / (2.0 * alpha)


def sqrtm_quasi_triangular(T: np.ndarray) -> np.ndarray:
    """Principal real square root of a real quasi-upper-triangular matrix."""
    blocks = _schur_blocks(T)
    U = np.zeros_like(T)
    for st, sz in blocks:
        U[st : st + sz, st : st + sz] = _sqrt_block(T[st : st + sz, st : st + sz])
    for j in range(len(blocks)):
        sj, zj = blocks[j]
        for i in range(j - 1, -1, -1):
            si, zi = blocks[i]
            rhs = T[si : si + zi, sj : sj + zj].copy()
            for k in range(i + 1, j):
                sk, zk = blocks[k]
                rhs -= U[si : si + zi, sk : sk + zk] @ U[sk : sk + zk, sj : sj + zj]
            Uii = U[si : si + zi, si : si + zi]
            Ujj = U[sj : sj + zj, sj : sj + zj]
            # Uii X + X Ujj = rhs, vectorised row-major
            K = np.kron(Uii, np.eye(zj)) + np.kron(np.eye(zi), Ujj.T)
            U[si : si + zi, sj : sj + zj] = np.linalg.solve(K, rhs.ravel()).reshape(zi, zj)
    return U


def _log_near_identity(T: np.ndarray) -> np.ndarray:
    X = T - np.eye(T.shape[0])
    out = np.zeros_like(T)
    for t, w in zip(_NODES, _WEIGHTS):
        out += w * np.linalg.solve((np.eye(T.shape[0]) + t * X).T, X.T).T
    return out


def _logm_positive_part(T: np.ndarray) -> np.ndarray:
    """Inverse scaling and squaring on a quasi-triangular block."""
    if T.size == 0:
        return T.copy()
    s = 0
    while np.linalg.norm(T - np.eye(T.shape[0]), 2) > 0.25:
        T = sqrtm_quasi_triangular(T)
        s += 1
        if s > 64:
            raise NoRealLogarithm("square-root iteration did not converge")
    return (2.0**s) * _log_near_identity(T)


def _logm_negative_part(T11: np.ndarray) -> np.ndarray:
    """Real log of a block whose eigenvalues are all negative reals.

    Needs every distinct eigenvalue to have an even, semisimple eigenspace;
    each eigenspace then receives a complex structure J and log = log|T| + pi J.
    """
    m = T11.shape[0]
    if m == 0:
        return T11.copy()
    M = -T11
    lam, W = np.linalg.eig(M)
    lam = lam.real
    W = W.real
    order = np.argsort(lam, kind="stable")
    lam, W = lam[order], W[:, order]
    if np.linalg.cond(W) > 1e10:
        raise NoRealLogarithm("negative eigenvalue with a nontrivial Jordan block")
    groups = []
    start = 0
    for i in range(1, m + 1):
        if i == m or abs(lam[i] - lam[start]) > 1e-8 * max(1.0, abs(lam[start])):
            groups.append((start, i))
            start = i
    D = np.zeros((m, m))
    for a, b in groups:
        if (b - a) % 2:
            raise NoRealLogarithm("negative real eigenvalue of odd multiplicity has no real logarithm")
        mean = float(np.mean(lam[a:b]))
        for k in range(a, b, 2):
            D[k, k] = D[k + 1, k + 1] = np.log(mean)
            D[k, k + 1] = -np.pi
            D[k + 1, k] = np.pi
    return W @ D @ np.linalg.inv(W)


def real_logm(R) -> np.ndarray:
    """A real logarithm of a real square matrix.

    Eigenvalues off the closed negative real axis use the principal branch;
    negative real eigenvalues must pair up (even multiplicity, semisimple).
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = R.shape[0]
    if n == 0:
        return R.copy()
    if np.linalg.matrix_rank(R) < n:
        raise NoRealLogarithm("singular matrix has no logarithm")
    scale = max(np.linalg.norm(R, 2), 1.0)
    tiny = 1e-12 * scale

    def negative_real(re, im):
        return (np.abs(im) <= tiny) & (re < 0)

    T, Z, sdim = sla.schur(R, output="real", sort=negative_real)
    T11 = T[:sdim, :sdim]
    T12 = T[:sdim, sdim:]
    T22 = T[sdim:, sdim:]
    L = np.zeros_like(T)
    if sdim and n - sdim:
        Y = sla.solve_sylvester(T11, -T22, -T12)
        S = np.eye(n)
        S[:sdim, sdim:] = Y
    else:
        S = np.eye(n)
    L[:sdim, :sdim] = _logm_negative_part(T11)
    L[sdim:, sdim:] = _logm_positive_part(T22)
    Sinv = np.eye(n)
    Sinv[:sdim, sdim:] = -S[:sdim, sdim:]
    return Z @ (S @ L @ Sinv) @ Z.T


def polar_factor(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal polar factor of stacked square matrices and their singular values."""
    U, s, Vt = np.linalg.svd(M)
    return U @ Vt, s


def orthonormalize(M: np.ndarray) -> np.ndarray:
    """Column-orthonormal Q with positive-diagonal R; smooth in M."""
    Q, R = np.linalg.qr(M)
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d = np.where(d == 0, 1.0, d)
    return Q * d[..., None, :]


def batched_inv(M: np.ndarray) -> np.ndarray:
    return np.linalg.inv(M)
