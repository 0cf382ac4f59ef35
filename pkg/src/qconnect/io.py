"""Project files: JSON metadata with float64 field blobs.

A field reference is one of

* ``{"file": "omega_v1.bin", "shape": [n0, ..., comp, rows, cols], "degree": 1}``
  pointing at a raw row-major little-endian float64 blob next to the JSON file,
* ``{"data": [...nested lists in the same shape...], "degree": p}``,
* ``{"constant": matrix}`` (0-form) or ``{"constant": [matrix per component], "degree": p}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bundle import QuiverBundle
from .connection import RelativeConnection
from .errors import QConnectError, ShapeMismatch
from .grid import GridManifold, MatrixFormField
from .obstruction import QuiverRepPoint
from .quiver import Quiver, new_quiver

FORMAT = "qconnect-project"
BLOB_THRESHOLD = 64

DEFAULT_TOLERANCES = {
    "rank_rel_tol": 1e-8,
    "obstruct_rel_tol": 1e-6,
    "intertwine_tol": 1e-6,
    "steps_per_cell": 64,
}


class ProjectError(QConnectError, ValueError):
    """Malformed project input (exit code 2)."""


@dataclass
class Project:
    quiver: Quiver
    grid: GridManifold
    bundle: QuiverBundle | None
    connection: RelativeConnection | None = None
    representation: dict | None = None
    tolerances: dict = field(default_factory=dict)
    path: Path | None = None

    def tol(self, key, default=None):
        return self.tolerances.get(key, DEFAULT_TOLERANCES.get(key, default))


# fields ---------------------------------------------------------------------


def read_field(ref: dict, grid: GridManifold, base: Path, what: str) -> MatrixFormField:
    if not isinstance(ref, dict):
        raise ProjectError(f"{what}: field reference must be an object")
    degree = int(ref.get("degree", 0))
    if "file" in ref:
        path = base / ref["file"]
        if not path.is_file():
            raise ProjectError(f"{what}: field file {ref['file']!r} not found")
        shape = tuple(int(s) for s in ref.get("shape", ()))
        raw = np.fromfile(path, dtype="<f8")
        if raw.size != int(np.prod(shape)):
            raise ProjectError(f"{what}: file holds {raw.size} values, shape {list(shape)} needs {int(np.prod(shape))}")
        coeffs = raw.reshape(shape)
    elif "data" in ref:
        coeffs = np.asarray(ref["data"], dtype=float)
    elif "constant" in ref:
        m = np.asarray(ref["constant"], dtype=float)
        if degree == 0:
            m = np.atleast_2d(m)[None]
        coeffs = np.broadcast_to(m, grid.shape + m.shape)
    else:
        raise ProjectError(f"{what}: field reference needs 'file', 'data' or 'constant'")
    try:
        return MatrixFormField(grid, degree, coeffs)
    except QConnectError as exc:
        raise ProjectError(f"{what}: {exc}") from exc


def field_ref(f: MatrixFormField, base: Path, name: str, inline: bool | None = None) -> dict:
    """Reference for ``f``; large fields go to ``name + '.bin'`` in ``base``."""
    inline = f.coeffs.size <= BLOB_THRESHOLD if inline is None else inline
    if inline:
        return {"data": f.coeffs.tolist(), "degree": f.degree}
    fname = f"{name}.bin"
    np.ascontiguousarray(f.coeffs, dtype="<f8").tofile(base / fname)
    return {"file": fname, "shape": list(f.coeffs.shape), "degree": f.degree}


# project --------------------------------------------------------------------


def _require(d: dict, key: str, what: str):
    if key not in d:
        raise ProjectError(f"{what}: missing key {key!r}")
    return d[key]


def parse_quiver(d: dict) -> Quiver:
    verts = _require(d, "vertices", "quiver")
    arrows = [(a["id"], a["source"], a["target"]) for a in _require(d, "arrows", "quiver")]
    return new_quiver(verts, arrows)


def parse_grid(d: dict) -> GridManifold:
    try:
        return GridManifold(_require(d, "axes", "grid"))
    except (TypeError, ValueError) as exc:
        raise ProjectError(f"grid: {exc}") from exc


def parse_bundle(d: dict, q: Quiver, grid: GridManifold, base: Path) -> QuiverBundle:
    ranks = {str(k): int(v) for k, v in _require(d, "ranks", "bundle").items()}
    morph_refs = _require(d, "morphisms", "bundle")
    if set(morph_refs) != set(q.arrow_ids):
        missing = sorted(set(q.arrow_ids) - set(morph_refs))
        extra = sorted(set(morph_refs) - set(q.arrow_ids))
        raise ProjectError(f"bundle: morphisms missing for {missing}, unknown arrows {extra}")
    morph = {a: read_field(ref, grid, base, f"morphism {a}") for a, ref in morph_refs.items()}
    twists = {a: read_field(ref, grid, base, f"twist {a}") for a, ref in d.get("twists", {}).items()}
    try:
        return QuiverBundle(q, grid, ranks, morph, twists or None)
    except ShapeMismatch as exc:
        raise ProjectError(f"bundle: {exc}") from exc


def parse_connection(d: dict, grid: GridManifold, base: Path) -> RelativeConnection:
    omega = {v: read_field(ref, grid, base, f"connection form {v}") for v, ref in _require(d, "omega", "connection").items()}
    theta = {a: read_field(ref, grid, base, f"twist form {a}") for a, ref in d.get("theta", {}).items()}
    return RelativeConnection(omega, theta)


def load_project(path) -> Project:
    path = Path(path)
    if path.is_dir():
        path = path / "project.json"
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ProjectError(f"project file {str(path)!r} not found") from exc
    except OSError as exc:
        raise ProjectError(f"cannot read project file {str(path)!r}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ProjectError(f"project file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProjectError("project must be a JSON object")
    base = path.parent
    q = parse_quiver(_require(doc, "quiver", "project"))
    grid = parse_grid(_require(doc, "grid", "project"))
    bundle = parse_bundle(doc["bundle"], q, grid, base) if "bundle" in doc else None
    conn = parse_connection(doc["connection"], grid, base) if "connection" in doc else None
    if conn is not None and bundle is not None:
        from .connection import check_shapes

        try:
            check_shapes(bundle, conn)
        except ShapeMismatch as exc:
            raise ProjectError(f"connection: {exc}") from exc
    return Project(q, grid, bundle, conn, doc.get("representation"), dict(doc.get("tolerances", {})), path)


def connection_doc(c: RelativeConnection, base: Path, prefix: str = "omega") -> dict:
    doc = {"omega": {v: field_ref(w, base, f"{prefix}_{v}") for v, w in sorted(c.omega.items())}}
    if c.theta:
        doc["theta"] = {a: field_ref(t, base, f"theta_{a}") for a, t in sorted(c.theta.items())}
    return doc


def project_doc(
    q: Quiver,
    grid: GridManifold,
    b: QuiverBundle | None,
    base: Path,
    c: RelativeConnection | None = None,
    representation: dict | None = None,
    tolerances: dict | None = None,
) -> dict:
    doc = {"format": FORMAT, "quiver": q.to_dict(), "grid": grid.to_dict()}
    if b is not None:
        doc["bundle"] = {
            "ranks": dict(sorted(b.rank.items())),
            "morphisms": {a: field_ref(f, base, f"A_{a}") for a, f in sorted(b.morphism.items())},
        }
        if b.twist_form:
            doc["bundle"]["twists"] = {a: field_ref(f, base, f"twist_{a}") for a, f in sorted(b.twist_form.items())}
    if c is not None:
        doc["connection"] = connection_doc(c, base)
    if representation is not None:
        doc["representation"] = representation
    if tolerances:
        doc["tolerances"] = dict(sorted(tolerances.items()))
    return doc


def save_project(path, q, grid, b=None, c=None, representation=None, tolerances=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = project_doc(q, grid, b, path.parent, c, representation, tolerances)
    write_json(path, doc)
    return path


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=_jsonable) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


# representations ------------------------------------------------------------


def parse_representation(d: dict, q: Quiver):
    """(QuiverRepPoint, generators, action) from a representation object."""
    from .monodromy import GroupQuiverRep

    dims = {str(k): int(v) for k, v in _require(d, "dims", "representation").items()}
    maps = {a: np.asarray(m, dtype=float) for a, m in d.get("maps", {}).items()}
    gens = tuple(_require(d, "generators", "representation"))
    action = {}
    for g in gens:
        per_v = _require(_require(d, "action", "representation"), g, "representation action")
        for v in q.vertices:
            action[(g, v)] = np.asarray(_require(per_v, v, f"action of {g}"), dtype=float)
    try:
        rep = QuiverRepPoint(q, dims, maps)
    except ShapeMismatch as exc:
        raise ProjectError(f"representation: {exc}") from exc
    return GroupQuiverRep(rep, gens, action, float(d.get("tol", 1e-8)))


def representation_doc(grep) -> dict:
    action = {}
    for (g, v), M in sorted(grep.action.items()):
        action.setdefault(g, {})[v] = np.asarray(M).tolist()
    return {
        "generators": list(grep.generators),
        "dims": dict(sorted(grep.rep.dims.items())),
        "maps": {a: np.asarray(m).tolist() for a, m in sorted(grep.rep.maps.items())},
        "action": action,
        "tol": grep.tol,
    }
