"""Reproducible random quiver bundles with known constant-rank structure.

Morphisms are partial coordinate maps (each basis vector goes to a scaled basis
vector or to zero) conjugated by smooth invertible gauge fields, so every path
morphism has constant rank and a compatible connection is known to exist.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .bundle import QuiverBundle
from .grid import GridManifold, MatrixFormField
from .quiver import Quiver, new_quiver


def coordinate_matrix(rng: np.random.Generator, rows: int, cols: int, rank: int | None = None) -> np.ndarray:
    """rows x cols partial permutation with random nonzero scales."""
    top = min(rows, cols)
    rank = int(rng.integers(0, top + 1)) if rank is None else rank
    C = np.zeros((rows, cols))
    r = rng.choice(rows, rank, replace=False)
    c = rng.choice(cols, rank, replace=False)
    C[r, c] = rng.uniform(0.5, 2.0, rank) * rng.choice([-1.0, 1.0], rank)
    return C


def smooth_gauge(grid: GridManifold, n: int, rng: np.random.Generator, amplitude: float = 0.15) -> np.ndarray:
    """exp of a smooth random matrix field; invertible everywhere."""
    coords = grid.coords()
    X = np.zeros(grid.shape + (n, n))
    for ax, x in zip(grid.axes, coords):
        u = 2 * np.pi * (x - ax.min) / ax.length if ax.periodic else np.pi * (x - ax.min) / ax.length
        for m in (1, 2):
            a, b = rng.normal(size=(2, n, n)) * amplitude / m
            X += np.cos(m * u)[..., None, None] * a + np.sin(m * u)[..., None, None] * b
    return expm(X)


def gauged_bundle(q: Quiver, grid: GridManifold, rank: dict, cores: dict, rng: np.random.Generator, amplitude=0.15):
    """Bundle with A_a(x) = g_t(x) C_a g_s(x)^-1 for constant cores C_a."""
    g = {v: smooth_gauge(grid, rank[v], rng, amplitude) for v in q.vertices}
    ginv = {v: np.linalg.inv(G) for v, G in g.items()}
    morph = {}
    for arr in q.arrows:
        A = g[arr.target] @ cores[arr.id] @ ginv[arr.source]
        morph[arr.id] = MatrixFormField(grid, 0, A[..., None, :, :])
    return QuiverBundle(q, grid, dict(rank), morph)


def random_chain(rng: np.random.Generator, grid: GridManifold, n_vertices: int = 4, max_rank: int = 4):
    vs = [f"v{i}" for i in range(1, n_vertices + 1)]
    q = new_quiver(vs, [(f"a{i}", vs[i - 1], vs[i]) for i in range(1, n_vertices)])
    rank = {v: int(rng.integers(1, max_rank + 1)) for v in vs}
    cores = {a.id: coordinate_matrix(rng, rank[a.target], rank[a.source]) for a in q.arrows}
    return gauged_bundle(q, grid, rank, cores, rng)


def random_tree_quiver(rng: np.random.Generator, n_vertices: int) -> Quiver:
    """Random labelled tree with random arrow orientations."""
    vs = [f"v{i}" for i in range(1, n_vertices + 1)]
    arrows = []
    for i in range(1, n_vertices):
        parent = vs[int(rng.integers(0, i))]
        child = vs[i]
        ends = (parent, child) if rng.random() < 0.5 else (child, parent)
        arrows.append((f"a{i}", *ends))
    return new_quiver(vs, arrows)


def random_tree(rng: np.random.Generator, grid: GridManifold, max_vertices: int = 7, max_rank: int = 3):
    q = random_tree_quiver(rng, int(rng.integers(2, max_vertices + 1)))
    rank = {v: int(rng.integers(1, max_rank + 1)) for v in q.vertices}
    cores = {a.id: coordinate_matrix(rng, rank[a.target], rank[a.source]) for a in q.arrows}
    return gauged_bundle(q, grid, rank, cores, rng)


def inject_scalar_arrow(b: QuiverBundle, at: str | None = None, rank: int = 2) -> QuiverBundle:
    """Attach a new leaf joined to the tree by the arrow x * I (rank drops where x = 0)."""
    q = b.quiver
    at = q.vertices[0] if at is None else at
    leaf = "w_leaf"
    n = b.rank[at]
    x = b.grid.coords()[0]
    C = np.eye(n, rank)
    arr = x[..., None, None] * C
    q2 = new_quiver(q.vertices + (leaf,), [(a.id, a.source, a.target) for a in q.arrows] + [("z_scalar", leaf, at)])
    morph = dict(b.morphism)
    morph["z_scalar"] = MatrixFormField(b.grid, 0, arr[..., None, :, :])
    return QuiverBundle(q2, b.grid, dict(b.rank) | {leaf: rank}, morph, b.twist_form)
