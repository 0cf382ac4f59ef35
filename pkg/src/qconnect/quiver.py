"""Finite quivers: paths, tree structure, rooting and arrow reversal."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, NamedTuple

from .errors import CycleDetected, DanglingEndpoint, DuplicateId, InvalidPath, NotATree, UnknownArrow


class Arrow(NamedTuple):
    id: str
    source: str
    target: str


@dataclass(frozen=True)
class Quiver:
    """A finite quiver with string ids.

    Vertices and arrows are kept sorted by id, so iteration order is the
    lexicographic order used for every tie-break in the package.
    """

    vertices: tuple[str, ...]
    arrows: tuple[Arrow, ...]

    def arrow(self, a: str) -> Arrow:
        for arr in self.arrows:
            if arr.id == a:
                return arr
        raise UnknownArrow(f"unknown arrow {a!r}")

    @property
    def arrow_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.arrows)

    def source(self, a: str) -> str:
        return self.arrow(a).source

    def target(self, a: str) -> str:
        return self.arrow(a).target

    def out_arrows(self, v: str) -> list[Arrow]:
        return [a for a in self.arrows if a.source == v]

    def in_arrows(self, v: str) -> list[Arrow]:
        return [a for a in self.arrows if a.target == v]

    def in_degree(self, v: str) -> int:
        return len(self.in_arrows(v))

    def to_dict(self) -> dict:
        return {
            "vertices": list(self.vertices),
            "arrows": [{"id": a.id, "source": a.source, "target": a.target} for a in self.arrows],
        }


def new_quiver(vertices: Iterable, arrows: Iterable) -> Quiver:
    """Validate and build a quiver.

    ``arrows`` holds ``(id, source, target)`` triples. Ids of any hashable
    type are converted to strings.
    """
    verts = [str(v) for v in vertices]
    if len(set(verts)) != len(verts):
        raise DuplicateId("duplicate vertex id")
    vset = set(verts)
    arrs = []
    seen = set()
    for triple in arrows:
        aid, s, t = (str(x) for x in triple)
        if aid in seen:
            raise DuplicateId(f"duplicate arrow id {aid!r}")
        seen.add(aid)
        for end in (s, t):
            if end not in vset:
                raise DanglingEndpoint(f"arrow {aid!r} has endpoint {end!r} outside the vertex set")
        arrs.append(Arrow(aid, s, t))
    return Quiver(tuple(sorted(verts)), tuple(sorted(arrs)))


@dataclass(frozen=True)
class Path:
    """A directed path stored in application order (first arrow first).

    A trivial path has no arrows and carries its vertex.
    """

    arrows: tuple[str, ...] = ()
    vertex: str | None = None

    @classmethod
    def trivial(cls, v) -> "Path":
        return cls((), str(v))

    @property
    def is_trivial(self) -> bool:
        return not self.arrows

    def __len__(self):
        return len(self.arrows)

    @property
    def name(self) -> str:
        # written right-to-left like composition: "a2.a1" applies a1 first
        if self.is_trivial:
            return f"e_{self.vertex}"
        return ".".join(reversed(self.arrows))

    def source(self, q: Quiver) -> str:
        return self.vertex if self.is_trivial else q.source(self.arrows[0])

    def target(self, q: Quiver) -> str:
        return self.vertex if self.is_trivial else q.target(self.arrows[-1])

    def then(self, other: "Path") -> "Path":
        """The path that runs ``self`` and then ``other``."""
        if self.is_trivial:
            return other
        if other.is_trivial:
            return self
        return Path(self.arrows + other.arrows)


def make_path(q: Quiver, arrows: Iterable[str]) -> Path:
    """Build a path from arrow ids in application order, checking composability."""
    arrs = tuple(str(a) for a in arrows)
    if not arrs:
        raise InvalidPath("use Path.trivial for length-0 paths")
    try:
        for prev, nxt in zip(arrs, arrs[1:]):
            if q.target(prev) != q.source(nxt):
                raise InvalidPath(f"arrows {prev!r} and {nxt!r} do not compose")
    except UnknownArrow as exc:
        raise InvalidPath(str(exc)) from exc
    if len(arrs) == 1:
        q.arrow(arrs[0])
    return Path(arrs)


def validate_path(q: Quiver, p: Path) -> None:
    if p.is_trivial:
        if p.vertex not in q.vertices:
            raise InvalidPath(f"unknown vertex {p.vertex!r}")
        return
    make_path(q, p.arrows)


def has_directed_cycle(q: Quiver) -> bool:
    ts = TopologicalSorter({v: set() for v in q.vertices})
    for a in q.arrows:
        ts.add(a.target, a.source)
    try:
        ts.prepare()
    except CycleError:
        return True
    return False


def enumerate_paths(q: Quiver, max_len="all") -> list[Path]:
    """All directed paths of length 1..max_len, sorted by arrow-id sequence."""
    if max_len == "all":
        if has_directed_cycle(q):
            raise CycleDetected("quiver has a directed cycle; path enumeration is unbounded")
        bound = len(q.arrows)
    else:
        bound = int(max_len)
        if bound < 1:
            raise ValueError("max_len must be >= 1 or 'all'")
    paths = []
    frontier = [(a.id,) for a in q.arrows]
    length = 1
    while frontier and length <= bound:
        paths.extend(frontier)
        nxt = []
        for p in frontier:
            end = q.target(p[-1])
            for a in q.out_arrows(end):
                nxt.append(p + (a.id,))
        frontier = nxt
        length += 1
    return [Path(p) for p in sorted(paths)]


def _undirected_adjacency(q: Quiver) -> dict[str, list[tuple[str, Arrow]]]:
    adj = {v: [] for v in q.vertices}
    for a in q.arrows:
        adj[a.source].append((a.target, a))
        if a.target != a.source:
            adj[a.target].append((a.source, a))
    return adj


def is_tree(q: Quiver) -> bool:
    if not q.vertices or len(q.arrows) != len(q.vertices) - 1:
        return False
    adj = _undirected_adjacency(q)
    seen = {q.vertices[0]}
    stack = [q.vertices[0]]
    while stack:
        v = stack.pop()
        for w, _ in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(q.vertices)


def bfs_tree_order(q: Quiver, r: str) -> list[tuple[str, Arrow | None, str | None]]:
    """Breadth-first traversal of a tree from ``r``.

    Returns ``(vertex, linking arrow, parent)`` triples; neighbours are visited
    in arrow-id order.
    """
    adj = _undirected_adjacency(q)
    order = [(r, None, None)]
    seen = {r}
    queue = deque([r])
    while queue:
        v = queue.popleft()
        for w, a in sorted(adj[v], key=lambda wa: wa[1].id):
            if w not in seen:
                seen.add(w)
                order.append((w, a, v))
                queue.append(w)
    return order


def root_orientation(q: Quiver, r) -> tuple[list[str], Quiver]:
    """Arrows to flip so that every arrow points away from ``r``."""
    r = str(r)
    if r not in q.vertices:
        raise NotATree(f"root {r!r} is not a vertex")
    if not is_tree(q):
        raise NotATree("quiver is not a tree")
    flips = [a.id for w, a, parent in bfs_tree_order(q, r) if a is not None and a.source == w]
    rooted = q
    for a in flips:
        rooted = reverse_arrow(rooted, a)
    return flips, rooted


def reverse_arrow(q: Quiver, a: str) -> Quiver:
    arr = q.arrow(a)
    arrows = tuple(sorted(Arrow(x.id, x.target, x.source) if x.id == arr.id else x for x in q.arrows))
    return Quiver(q.vertices, arrows)


def opposite(q: Quiver) -> Quiver:
    return Quiver(q.vertices, tuple(Arrow(a.id, a.target, a.source) for a in q.arrows))


def is_rooted_at(q: Quiver, r: str) -> bool:
    return is_tree(q) and all(q.in_degree(v) == (0 if v == r else 1) for v in q.vertices)


def chain_order(q: Quiver) -> list[str] | None:
    """Vertices of an equioriented A_n chain in arrow order, else None."""
    if not is_tree(q):
        return None
    sources = [v for v in q.vertices if q.in_degree(v) == 0]
    if len(sources) != 1 or any(len(q.out_arrows(v)) > 1 or q.in_degree(v) > 1 for v in q.vertices):
        return None
    order = [sources[0]]
    while q.out_arrows(order[-1]):
        order.append(q.out_arrows(order[-1])[0].target)
    return order
