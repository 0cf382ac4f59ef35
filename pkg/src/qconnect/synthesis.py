"""Constructive synthesis of relative connections on tree-shaped quiver bundles.

Each vertex bundle is split into smooth summands that every arrow maps either
to zero or isomorphically onto another summand. Connections are chosen freely
(from seeds) on summands that nothing forces, and transported across arrows
on the rest, so every arrow morphism ends up parallel.

The splitting comes from the lattice of subbundles generated at every vertex by
images, preimages, sums and intersections along all arrows. When that lattice
is distributive its join-irreducible elements give a canonical decomposition;
when it is not, :class:`IntersectionDegeneracy` is raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bundle import DEFAULT_RANK_TOL, QuiverBundle, check_all_path_ranks, pointwise_ranks, rank_profile
from .connection import RelativeConnection, compatibility_residual, default_tolerance
from .errors import IntersectionDegeneracy, NonConstantRank, NotATree
from .frames import (
    FrameField,
    complement_in,
    contained,
    continue_frame,
    kernel_frame,
    orth_complement_within,
    pull,
    push,
    same_subspace,
    span,
    subspace_intersection,
    subspace_sum,
)
from .grid import GridManifold, MatrixFormField, exterior_derivative, pointwise_matmul, scalar_times_identity, sup_norm
from .linalg import orthonormalize
from .quiver import Path, bfs_tree_order, chain_order, is_rooted_at, is_tree, reverse_arrow, root_orientation

ZERO_MAP_TOL = 1e-6

Seeds = dict | Callable | None


# decompositions -------------------------------------------------------------


@dataclass
class VertexDecomposition:
    vertex: str
    summands: list
    kinds: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return sum(s.k for s in self.summands)

    def matrix(self) -> np.ndarray:
        return np.concatenate([s.vectors for s in self.summands], axis=-1)

    def offsets(self) -> list[int]:
        out = [0]
        for s in self.summands:
            out.append(out[-1] + s.k)
        return out

    def projectors(self) -> list[np.ndarray]:
        B = self.matrix()
        Binv = np.linalg.inv(B)
        off = self.offsets()
        return [B[..., :, off[i] : off[i + 1]] @ Binv[..., off[i] : off[i + 1], :] for i in range(len(self.summands))]

    def cond(self) -> float:
        return float(np.max(np.linalg.cond(self.matrix())))

    def exactness(self) -> tuple[float, float]:
        """(max |sum P - I|, max |P^2 - P|) over all points and summands."""
        Ps = self.projectors()
        n = self.rank
        total = float(np.max(np.abs(sum(Ps) - np.eye(n))))
        idem = max(float(np.max(np.abs(P @ P - P))) for P in Ps)
        return total, idem

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "dims": [s.k for s in self.summands],
            "kinds": list(self.kinds),
            "cond": self.cond(),
        }


# subspace lattice -----------------------------------------------------------


class _Lattice:
    def __init__(self, vertex: str, grid: GridManifold, n: int):
        self.vertex = vertex
        self.n = n
        self.cap = 2**n
        self.elements = [np.zeros(grid.shape + (n, 0)), np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy()]

    def find(self, X) -> int | None:
        for i, Y in enumerate(self.elements):
            if same_subspace(X, Y):
                return i
        return None

    def add(self, X) -> bool:
        if self.find(X) is not None:
            return False
        self.elements.append(X)
        if len(self.elements) > self.cap:
            raise IntersectionDegeneracy(
                f"subspace lattice at {self.vertex!r} exceeds {self.cap} elements; it is not distributive",
                self.vertex,
            )
        return True


def _close_lattices(b: QuiverBundle) -> dict:
    q = b.quiver
    lat = {v: _Lattice(v, b.grid, b.rank[v]) for v in q.vertices}
    pushed = {a: 0 for a in q.arrow_ids}
    pulled = {a: 0 for a in q.arrow_ids}
    paired = {v: 0 for v in q.vertices}
    changed = True
    while changed:
        changed = False
        for arr in q.arrows:
            A = b.A(arr.id)
            Ls, Lt = lat[arr.source], lat[arr.target]
            while pushed[arr.id] < len(Ls.elements):
                changed |= Lt.add(push(A, Ls.elements[pushed[arr.id]], vertex=arr.target))
                pushed[arr.id] += 1
            while pulled[arr.id] < len(Lt.elements):
                changed |= Ls.add(pull(A, Lt.elements[pulled[arr.id]], vertex=arr.source))
                pulled[arr.id] += 1
        for v in q.vertices:
            L = lat[v]
            while paired[v] < len(L.elements):
                j = paired[v]
                for i in range(j):
                    X, Y = L.elements[i], L.elements[j]
                    changed |= L.add(subspace_sum(X, Y, vertex=v))
                    changed |= L.add(subspace_intersection(X, Y, vertex=v))
                paired[v] += 1
    return lat


@dataclass
class _Irreducibles:
    lattice: _Lattice
    leq: np.ndarray
    irreducible: list
    summand: dict


def _irreducibles(L: _Lattice, grid: GridManifold) -> _Irreducibles:
    els = L.elements
    m = len(els)
    leq = np.array([[contained(els[i], els[j]) for j in range(m)] for i in range(m)])
    dims = [X.shape[-1] for X in els]
    irreducible, summand = [], {}
    for j in range(m):
        if dims[j] == 0:
            continue
        below = [els[i] for i in range(m) if i != j and leq[i, j]]
        lower = span(np.concatenate(below, axis=-1), vertex=L.vertex) if below else els[0]
        if lower.shape[-1] < dims[j]:
            irreducible.append(j)
            summand[j] = orth_complement_within(lower, els[j], vertex=L.vertex)
    # distributivity: every element is the direct sum of the summands below it
    for x in range(m):
        total = sum(summand[j].shape[-1] for j in irreducible if leq[j, x])
        if total != dims[x]:
            raise IntersectionDegeneracy(
                f"subbundles at {L.vertex!r} do not split into a direct sum "
                f"(element of rank {dims[x]} covered by {total})",
                L.vertex,
            )
    irreducible.sort(key=lambda j: (dims[j], j))
    frames = {j: continue_frame(grid, summand[j]).vectors for j in irreducible}
    return _Irreducibles(L, leq, irreducible, frames)


def _below(irr: _Irreducibles, X) -> tuple[list, list]:
    """Irreducible indices below / not below the lattice element X."""
    x = irr.lattice.find(X)
    if x is None:
        raise IntersectionDegeneracy("subspace missing from the lattice", irr.lattice.vertex)
    inside = [j for j in irr.irreducible if irr.leq[j, x]]
    outside = [j for j in irr.irreducible if not irr.leq[j, x]]
    return inside, outside


# seeds ----------------------------------------------------------------------


def smooth_random_form(grid: GridManifold, k: int, rng: np.random.Generator, amplitude: float = 0.3, modes: int = 2):
    """A smooth random k x k matrix 1-form built from low trigonometric modes."""
    coords = grid.coords()
    comps = []
    for _ in range(grid.dim):
        total = np.zeros(grid.shape + (k, k))
        for ax, x in zip(grid.axes, coords):
            u = 2 * np.pi * (x - ax.min) / ax.length if ax.periodic else np.pi * (x - ax.min) / ax.length
            for m in range(modes + 1):
                a, c = rng.normal(size=(2, k, k)) * amplitude / (1 + m)
                total += np.cos(m * u)[..., None, None] * a + np.sin(m * u)[..., None, None] * c
        comps.append(total)
    return MatrixFormField(grid, 1, np.stack(comps, axis=grid.dim))


def random_seeds(seed: int = 0, amplitude: float = 0.3) -> Callable:
    """Seed callable giving reproducible smooth random forms per free summand."""

    def make(vertex, j, k, grid):
        key = [seed, j, k] + [ord(ch) for ch in str(vertex)]
        return smooth_random_form(grid, k, np.random.default_rng(key), amplitude)

    return make


def _seed_form(seeds: Seeds, vertex: str, j: int, k: int, grid: GridManifold) -> MatrixFormField:
    form = None
    if callable(seeds):
        form = seeds(vertex, j, k, grid)
    elif seeds:
        form = seeds.get((vertex, j))
    if form is None:
        return MatrixFormField.zeros(grid, 1, k)
    if (form.rows, form.cols) != (k, k) or form.degree != 1 or form.grid != grid:
        raise ValueError(f"seed for free summand {j} at {vertex!r} must be a {k}x{k} 1-form on the bundle grid")
    return form


# engine ---------------------------------------------------------------------


@dataclass
class _Piece:
    frame: np.ndarray
    eta: MatrixFormField
    kind: str

    @property
    def k(self) -> int:
        return self.frame.shape[-1]


def _field0(grid, arr) -> MatrixFormField:
    return MatrixFormField(grid, 0, arr[..., None, :, :])


def _free_pieces(grid, vertex, frames, seeds, counter, kind) -> list:
    out = []
    for F in frames:
        j = counter[vertex]
        counter[vertex] += 1
        out.append(_Piece(F, _seed_form(seeds, vertex, j, F.shape[-1], grid), kind))
    return out


def _vertex_form(grid: GridManifold, pieces: list) -> MatrixFormField:
    """omega = B eta B^-1 - dB B^-1 for block-diagonal eta in the frame B."""
    B = np.concatenate([p.frame for p in pieces], axis=-1)
    n = B.shape[-1]
    eta = np.zeros(grid.shape + (grid.ncomp(1), n, n))
    o = 0
    for p in pieces:
        eta[..., o : o + p.k, o : o + p.k] = p.eta.coeffs
        o += p.k
    Bf = _field0(grid, B)
    Binv = _field0(grid, np.linalg.inv(B))
    inner = pointwise_matmul(Bf, MatrixFormField(grid, 1, eta)) - exterior_derivative(Bf)
    return pointwise_matmul(inner, Binv)


def _check_injective(M: np.ndarray, Anorm: np.ndarray, a: str, i: int) -> None:
    ranks, _ = pointwise_ranks(M / Anorm[..., None, None], DEFAULT_RANK_TOL)
    if np.any(ranks != M.shape[-1]):
        raise IntersectionDegeneracy(
            f"arrow {a!r} neither kills nor embeds summand {i} of its source", None
        )


def _run_engine(b: QuiverBundle, root: str, seeds: Seeds) -> RelativeConnection:
    grid = b.grid
    q = b.quiver
    lat = _close_lattices(b)
    irr = {v: _irreducibles(L, grid) for v, L in lat.items()}

    theta = dict(b.twist_form or {})
    counter = {v: 0 for v in q.vertices}
    pieces: dict = {}
    arrow_table: dict = {}

    rirr = irr[root]
    pieces[root] = _free_pieces(grid, root, [rirr.summand[j] for j in rirr.irreducible], seeds, counter, "free")

    for w, arr, parent in bfs_tree_order(q, root)[1:]:
        A = b.A(arr.id)
        th = scalar_times_identity(b.theta(arr.id), 1)
        if arr.source == parent:
            # forward: pieces of the parent are pushed to w
            Anorm = np.linalg.norm(A, axis=(-2, -1))
            Anorm = np.where(Anorm > 0, Anorm, 1.0)
            new, table = [], []
            for i, p in enumerate(pieces[parent]):
                M = A @ p.frame
                ratio = np.linalg.norm(M, axis=(-2, -1)) / Anorm
                if np.max(ratio) <= ZERO_MAP_TOL:
                    table.append({"source_summand": i, "kind": "zero"})
                    continue
                _check_injective(M, Anorm, arr.id, i)
                BT = orthonormalize(M)
                T = np.swapaxes(BT, -1, -2) @ M
                Tf = _field0(grid, T)
                src = p.eta + scalar_times_identity(th, p.k)
                eta = pointwise_matmul(pointwise_matmul(Tf, src) - exterior_derivative(Tf), _field0(grid, np.linalg.inv(T)))
                table.append({"source_summand": i, "kind": "iso", "target_summand": len(new)})
                new.append(_Piece(BT, eta, f"image:{arr.id}"))
            wirr = irr[w]
            _, outside = _below(wirr, push(A, lat[parent].elements[1], vertex=w))
            new += _free_pieces(grid, w, [wirr.summand[j] for j in outside], seeds, counter, "free")
            arrow_table[arr.id] = {"direction": "forward", "map": table}
        else:
            # backward: w is the source, pieces of the parent inside im A are lifted
            wirr = irr[w]
            kernel = pull(A, lat[parent].elements[0], vertex=w)
            inside, outside = _below(wirr, kernel)
            new = _free_pieces(grid, w, [wirr.summand[j] for j in inside], seeds, counter, "kernel:" + arr.id)
            BF = np.concatenate([wirr.summand[j] for j in outside], axis=-1) if outside else None
            image = push(A, lat[w].elements[1], vertex=parent)
            covered = 0
            table = []
            ABFp = np.linalg.pinv(A @ BF) if BF is not None else None
            for i, p in enumerate(pieces[parent]):
                if contained(p.frame, image):
                    covered += p.k
                    BL = orthonormalize(BF @ (ABFp @ p.frame))
                    T = np.swapaxes(p.frame, -1, -2) @ (A @ BL)
                    Tf = _field0(grid, T)
                    Tinv = _field0(grid, np.linalg.inv(T))
                    lifted = pointwise_matmul(Tinv, pointwise_matmul(p.eta, Tf) + exterior_derivative(Tf))
                    eta = lifted - scalar_times_identity(th, p.k)
                    table.append({"source_summand": len(new), "kind": "iso", "target_summand": i})
                    new.append(_Piece(BL, eta, f"lift:{arr.id}"))
                elif subspace_sum(p.frame, image, vertex=parent).shape[-1] != p.k + image.shape[-1]:
                    raise IntersectionDegeneracy(
                        f"summand {i} at {parent!r} straddles the image of arrow {arr.id!r}", parent
                    )
            if covered != image.shape[-1]:
                raise IntersectionDegeneracy(f"image of arrow {arr.id!r} is not a sum of summands", parent)
            for j in range(len(new)):
                if new[j].kind.startswith("kernel"):
                    table.append({"source_summand": j, "kind": "zero"})
            table.sort(key=lambda r: r["source_summand"])
            arrow_table[arr.id] = {"direction": "backward", "map": table}
        if sum(p.k for p in new) != b.rank[w]:
            raise IntersectionDegeneracy(f"summands at {w!r} do not span the fibre", w)
        pieces[w] = new

    omega = {v: _vertex_form(grid, ps) for v, ps in pieces.items()}
    decomp = {
        v: VertexDecomposition(v, [FrameField(grid, p.frame) for p in ps], [p.kind for p in ps])
        for v, ps in pieces.items()
    }
    for v, d in decomp.items():
        if not np.isfinite(d.cond()) or d.cond() > 1e8:
            raise IntersectionDegeneracy(f"summands at {v!r} are numerically dependent", v)
    meta = {"root": root, "vertices": decomp, "arrows": arrow_table}
    return RelativeConnection(omega, theta, decomposition=meta)


# public API -----------------------------------------------------------------


def _require_path_ranks(b: QuiverBundle, rel_tol: float) -> None:
    report = check_all_path_ranks(b, "all", rel_tol)
    bad = report.first_failure()
    if bad is not None:
        prof = report.profiles[bad.name]
        raise NonConstantRank(
            f"path {bad.name} has non-constant rank ({int(prof.ranks.min())}..{int(prof.ranks.max())})",
            path=bad.name,
            witness=prof.witness,
        )


def _require_arrow_ranks(b: QuiverBundle, rel_tol: float) -> None:
    for a in b.quiver.arrow_ids:
        prof = rank_profile(b.morphism[a], rel_tol)
        if not prof.is_constant:
            raise NonConstantRank(f"arrow {a} has non-constant rank", path=a, witness=prof.witness)


def an_filtration(b: QuiverBundle, v: str, rel_tol: float = DEFAULT_RANK_TOL) -> list:
    """Kernels of the path morphisms leaving ``v`` (increasing), then the final complement."""
    order = chain_order(b.quiver)
    if order is None:
        raise NotATree("an_filtration needs an equioriented A_n chain")
    _require_path_ranks(b, rel_tol)
    i = order.index(v)
    kernels = []
    arrows = []
    for j in range(i, len(order) - 1):
        arrows.append(b.quiver.out_arrows(order[j])[0].id)
        phi = _path_field(b, arrows)
        kernels.append(kernel_frame(phi, rel_tol))
    last = kernels[-1] if kernels else FrameField(b.grid, np.zeros(b.grid.shape + (b.rank[v], 0)))
    return kernels + [complement_in(last)]


def _path_field(b, arrows):
    from .bundle import path_morphism

    return path_morphism(b, Path(tuple(arrows)))


def filtration_summands(filtration: list) -> list:
    """Successive quotients of a kernel filtration as orthonormal frames (zeros dropped)."""
    out = []
    prev = None
    for K in filtration[:-1]:
        piece = K if prev is None else complement_in(prev, K)
        if piece.k:
            out.append(piece)
        prev = K
    if filtration[-1].k:
        out.append(filtration[-1])
    return out


def synthesize_An(b: QuiverBundle, seeds: Seeds = None, rel_tol: float = DEFAULT_RANK_TOL) -> RelativeConnection:
    order = chain_order(b.quiver)
    if order is None:
        raise NotATree("synthesize_An needs an equioriented A_n chain")
    _require_path_ranks(b, rel_tol)
    return _run_engine(b, order[0], seeds)


def synthesize_tree(b: QuiverBundle, root: str, seeds: Seeds = None, rel_tol: float = DEFAULT_RANK_TOL) -> RelativeConnection:
    if not is_tree(b.quiver):
        raise NotATree("quiver is not a tree")
    if not is_rooted_at(b.quiver, root):
        raise NotATree(f"arrows must all point away from {root!r}")
    _require_path_ranks(b, rel_tol)
    return _run_engine(b, root, seeds)


def _summand_split(c: RelativeConnection, vertex: str, sub: np.ndarray):
    """Summand frames of ``vertex`` inside / outside the subbundle ``sub``."""
    d = c.decomposition["vertices"][vertex]
    inside, outside = [], []
    for s in d.summands:
        (inside if contained(s.vectors, sub) else outside).append(s.vectors)
    return inside, outside


def reverse_arrow_bundle(b: QuiverBundle, c: RelativeConnection | None, a: str, rel_tol: float = DEFAULT_RANK_TOL):
    """Bundle over the quiver with ``a`` reversed, carrying the inverse of the induced isomorphism.

    With a synthesized connection the complements are sums of its summands, so
    the same vertex forms stay compatible. Otherwise orthogonal complements are
    used and the reversed morphism is the pseudo-inverse.
    """
    prof = rank_profile(b.morphism[a], rel_tol)
    if not prof.is_constant:
        raise NonConstantRank(f"arrow {a} has non-constant rank", path=a, witness=prof.witness)
    A = b.A(a)
    s, t = b.quiver.source(a), b.quiver.target(a)
    grid = b.grid
    k = prof.value
    use_meta = c is not None and c.decomposition is not None and "vertices" in c.decomposition
    if k == 0:
        R = np.zeros(A.shape[:-2] + (b.rank[s], b.rank[t]))
    elif use_meta:
        ker = pull(A, np.zeros(A.shape[:-1] + (0,)))
        im = push(A, np.broadcast_to(np.eye(b.rank[s]), A.shape[:-2] + (b.rank[s], b.rank[s])))
        _, Fs = _summand_split(c, s, ker)
        _, Ft = _summand_split(c, t, im)
        BFs = np.concatenate(Fs, axis=-1)
        Q = np.concatenate([A @ BFs] + Ft, axis=-1)
        if BFs.shape[-1] != k or Q.shape[-1] != b.rank[t]:
            raise IntersectionDegeneracy(f"summands do not split arrow {a!r}", t)
        R = BFs @ np.linalg.inv(Q)[..., :k, :]
    else:
        R = np.linalg.pinv(A, rcond=rel_tol)
    morph = dict(b.morphism)
    morph[a] = _field0(grid, R)
    twist = None
    if b.twist_form:
        twist = dict(b.twist_form)
        if a in twist:
            twist[a] = -twist[a]
    nb = QuiverBundle(reverse_arrow(b.quiver, a), grid, dict(b.rank), morph, twist)
    if c is None:
        return nb, None
    th = dict(c.theta)
    if a in th:
        th[a] = -th[a]
    return nb, RelativeConnection(dict(c.omega), th, decomposition=c.decomposition)


def synthesize_general_tree(b: QuiverBundle, seeds: Seeds = None, rel_tol: float = DEFAULT_RANK_TOL) -> RelativeConnection:
    """Relative connection on any tree-shaped quiver bundle.

    The verdict follows the rooted reorientation (least vertex as root); the
    construction itself runs on the original orientation so the result is
    compatible with the input bundle.
    """
    q = b.quiver
    if not is_tree(q):
        raise NotATree("quiver is not a tree")
    _require_arrow_ranks(b, rel_tol)
    root = q.vertices[0]
    flips, _ = root_orientation(q, root)
    rb = b
    for a in flips:
        rb, _ = reverse_arrow_bundle(rb, None, a, rel_tol)
    _require_path_ranks(rb, rel_tol)
    return _run_engine(b, root, seeds)


def synthesis_certificate(b: QuiverBundle, c: RelativeConnection, tol: float | None = None) -> dict:
    """JSON-ready record: summand dimensions, arrow mapping table, residuals."""
    tol = default_tolerance(b, c) if tol is None else tol
    residuals = {a: sup_norm(compatibility_residual(b, c, a)) for a in b.quiver.arrow_ids}
    meta = c.decomposition or {}
    out = {
        "tol": tol,
        "residuals": dict(sorted(residuals.items())),
        "pass": all(r <= tol for r in residuals.values()),
    }
    if meta:
        decomp = {}
        for v, d in sorted(meta["vertices"].items()):
            total, idem = d.exactness()
            decomp[v] = d.to_dict() | {"projector_sum_error": total, "idempotence_error": idem}
        out["root"] = meta["root"]
        out["decompositions"] = decomp
        out["arrows"] = dict(sorted(meta["arrows"].items()))
    return out
