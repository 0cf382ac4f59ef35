"""Command-line entry point: ``qconnect {validate,check,synthesize,obstruct,monodromy,example}``.

Exit codes: 0 pass, 1 semantic failure, 2 input error, 3 inconclusive.
Every report is JSON on standard output with sorted keys.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .bundle import QuiverBundle, check_all_path_ranks
from .connection import bianchi_residual, default_tolerance, is_compatible, is_flat, scale, zero_connection
from .errors import (
    DanglingEndpoint,
    DegreeOverflow,
    DuplicateId,
    FrameContinuationFailure,
    IntersectionDegeneracy,
    IntertwiningViolation,
    InvalidPath,
    NonConstantRank,
    NoRealLogarithm,
    NotATree,
    NotFlat,
    OutOfDomain,
    QConnectError,
    ShapeMismatch,
    UnknownArrow,
)
from .grid import GridManifold, MatrixFormField, sup_norm
from .io import (
    ProjectError,
    dumps,
    load_project,
    parse_representation,
    read_field,
    representation_doc,
    save_project,
    write_json,
)
from .monodromy import bundle_from_rep, check_intertwining, monodromy_rep, rep_from_monodromy
from .obstruction import beta_fields, jet_splitting_check, solve_l_map
from .synthesis import random_seeds, synthesis_certificate, synthesize_general_tree

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INCONCLUSIVE = 0, 1, 2, 3

INPUT_ERRORS = (
    ProjectError,
    ShapeMismatch,
    DanglingEndpoint,
    DuplicateId,
    UnknownArrow,
    InvalidPath,
    DegreeOverflow,
    OutOfDomain,
    NotATree,
)
SEMANTIC_ERRORS = (
    NonConstantRank,
    IntersectionDegeneracy,
    FrameContinuationFailure,
    NotFlat,
    NoRealLogarithm,
    IntertwiningViolation,
)


class UsageError(Exception):
    pass


def _provenance(project, tolerances: dict) -> dict:
    grid = project.grid
    return {
        "tool": {"name": "qconnect", "version": __version__},
        "grid": {"spacing": list(grid.spacing), "h": grid.h, "shape": list(grid.shape)},
        "tolerances": dict(sorted(tolerances.items())),
    }


def _emit(doc: dict) -> None:
    sys.stdout.write(dumps(doc))


def _error_doc(exc: Exception, code: int) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, NonConstantRank):
        doc["path"] = exc.path
        doc["witness"] = [[float(x) for x in w] for w in exc.witness]
    if isinstance(exc, IntersectionDegeneracy) and getattr(exc, "vertex", None) is not None:
        doc["vertex"] = exc.vertex
    return doc


def _need_bundle(project):
    if project.bundle is None:
        raise UsageError("project has no bundle section")
    return project.bundle


def _need_connection(project):
    if project.connection is None:
        raise UsageError("this check needs a connection section in the project")
    return project.connection


# commands -------------------------------------------------------------------


def cmd_validate(args) -> int:
    project = load_project(args.project)
    b = project.bundle
    summary = {
        "valid": True,
        "vertices": list(project.quiver.vertices),
        "arrows": list(project.quiver.arrow_ids),
        "has_bundle": b is not None,
        "has_connection": project.connection is not None,
        "has_representation": project.representation is not None,
    }
    if project.representation is not None:
        parse_representation(project.representation, project.quiver)
    _emit(summary | _provenance(project, project.tolerances))
    return EXIT_OK


def _bianchi_tol(b, c) -> float:
    return 10.0 * b.grid.h * scale(b, c) ** 2


def cmd_check(args) -> int:
    project = load_project(args.project)
    b = _need_bundle(project)
    what = args.what
    tols = {}
    if what == "ranks":
        tols["rank_rel_tol"] = project.tol("rank_rel_tol")
        rep = check_all_path_ranks(b, "all", tols["rank_rel_tol"])
        result = rep.to_dict()
        passed = rep.all_constant
        bad = rep.first_failure()
        if bad is not None:
            result["first_failure"] = bad.name
    elif what == "bianchi":
        if b.grid.dim != 3:
            raise DegreeOverflow("the Bianchi check requires 3D grid")
        c = _need_connection(project)
        tols["bianchi_tol"] = project.tol("bianchi_tol") or _bianchi_tol(b, c)
        norms = {a: sup_norm(bianchi_residual(b, c, a)) for a in b.quiver.arrow_ids}
        passed = all(n <= tols["bianchi_tol"] for n in norms.values())
        result = {"pass": passed, "tol": tols["bianchi_tol"], "norms": dict(sorted(norms.items()))}
    else:
        c = _need_connection(project)
        if what == "compat":
            tols["compat_tol"] = project.tol("compat_tol") or default_tolerance(b, c)
            rep = is_compatible(b, c, tols["compat_tol"])
        elif what == "flat":
            tols["flat_tol"] = project.tol("flat_tol") or default_tolerance(b, c)
            rep = is_flat(c, tols["flat_tol"], b.grid)
        else:
            tols["jet_tol"] = project.tol("jet_tol") or default_tolerance(b, c)
            rep = jet_splitting_check(b, c, tols["jet_tol"])
        result = rep.to_dict()
        passed = rep.passed
    _emit({"check": what, "pass": passed, "result": result} | _provenance(project, tols))
    return EXIT_OK if passed else EXIT_FAIL


def _load_seeds(path: str | None, project):
    if path is None:
        return None
    import json

    doc = json.loads(Path(path).read_text())
    if "seed" in doc:
        return random_seeds(int(doc["seed"]), float(doc.get("amplitude", 0.3)))
    forms = {}
    for key, ref in doc.get("forms", {}).items():
        v, _, j = key.rpartition("/")
        forms[(v, int(j))] = read_field(ref, project.grid, Path(path).parent, f"seed {key}")
    return forms


def cmd_synthesize(args) -> int:
    project = load_project(args.project)
    b = _need_bundle(project)
    seeds = _load_seeds(args.seed_file, project)
    tols = {"rank_rel_tol": project.tol("rank_rel_tol")}
    c = synthesize_general_tree(b, seeds, tols["rank_rel_tol"])
    tols["compat_tol"] = project.tol("compat_tol") or default_tolerance(b, c)
    cert = synthesis_certificate(b, c, tols["compat_tol"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_project(out / "project.json", project.quiver, project.grid, b, c, project.representation, project.tolerances)
    doc = {"certificate": cert, "outputs": ["project.json", "certificate.json"]} | _provenance(project, tols)
    write_json(out / "certificate.json", doc)
    _emit(doc)
    return EXIT_OK if cert["pass"] else EXIT_FAIL


def cmd_obstruct(args) -> int:
    project = load_project(args.project)
    b = _need_bundle(project)
    base = project.connection if project.connection is not None else zero_connection(b)
    tols = {
        "obstruct_rel_tol": project.tol("obstruct_rel_tol"),
        "obstruct_abs_tol": project.tol("obstruct_abs_tol") or default_tolerance(b),
        "rank_rel_tol": project.tol("rank_rel_tol"),
    }
    cert = solve_l_map(b, beta_fields(b, base), tols["obstruct_rel_tol"], tols["obstruct_abs_tol"], tols["rank_rel_tol"])
    result = cert.to_dict()
    result["base_connection"] = "project" if project.connection is not None else "zero"
    if cert.alpha is not None:
        result["alpha_norms"] = {v: sup_norm(a) for v, a in sorted(cert.alpha.items())}
    _emit({"obstruction": result} | _provenance(project, tols))
    return {"solvable": EXIT_OK, "unsolvable": EXIT_FAIL}.get(cert.status, EXIT_INCONCLUSIVE)


def cmd_monodromy(args) -> int:
    project = load_project(args.project)
    steps = int(project.tol("steps_per_cell"))
    tols = {"steps_per_cell": steps, "intertwine_tol": project.tol("intertwine_tol")}
    if args.direction == "to-rep":
        b = _need_bundle(project)
        c = _need_connection(project)
        tols["flat_tol"] = project.tol("flat_tol") or default_tolerance(b, c)
        mono = monodromy_rep(b, c, steps_per_cell=steps, flat_tol=tols["flat_tol"])
        inter = check_intertwining(b, mono, tol=tols["intertwine_tol"])
        doc = {"monodromy": mono.to_dict(), "intertwining": inter.to_dict()}
        if inter.passed and args.out:
            grep = rep_from_monodromy(b, mono)
            write_json(args.out, representation_doc(grep))
            doc["outputs"] = [str(args.out)]
        _emit(doc | _provenance(project, tols))
        return EXIT_OK if inter.passed else EXIT_FAIL
    if project.representation is None:
        raise UsageError("from-rep needs a representation section in the project")
    grep = parse_representation(project.representation, project.quiver)
    b, c = bundle_from_rep(project.quiver, grep, project.grid)
    mono = monodromy_rep(b, c, steps_per_cell=steps)
    err = max(float(np.max(np.abs(mono.matrices[k] - np.asarray(grep.action[k])))) for k in grep.action)
    passed = err <= 1e-6
    doc = {"round_trip_error": err, "round_trip_pass": passed, "monodromy": mono.to_dict()}
    if args.out:
        out = Path(args.out)
        save_project(out / "project.json", project.quiver, project.grid, b, c, project.representation, project.tolerances)
        doc["outputs"] = ["project.json"]
    _emit(doc | _provenance(project, tols))
    return EXIT_OK if passed else EXIT_FAIL


# demo projects --------------------------------------------------------------


def _example(name: str, out: Path, seed: int) -> Path:
    from .instances import random_tree
    from .quiver import new_quiver

    if name == "counterexample":
        g = GridManifold.interval(-1.0, 1.0, 129)
        q = new_quiver(["1", "2"], [("a", "1", "2")])
        x = g.coords()[0]
        A = MatrixFormField(g, 0, (x[:, None, None] * np.eye(2))[:, None])
        return save_project(out / "project.json", q, g, QuiverBundle(q, g, {"1": 2, "2": 2}, {"a": A}))
    if name == "identity-chain":
        g = GridManifold.interval(-1.0, 1.0, 33)
        q = new_quiver(["1", "2", "3"], [("a1", "1", "2"), ("a2", "2", "3")])
        morph = {a: MatrixFormField.identity(g, 2) for a in q.arrow_ids}
        return save_project(out / "project.json", q, g, QuiverBundle(q, g, {"1": 2, "2": 2, "3": 2}, morph))
    if name == "random-tree":
        g = GridManifold.interval(-1.0, 1.0, 129)
        b = random_tree(np.random.default_rng(seed), g)
        return save_project(out / "project.json", b.quiver, g, b)
    if name == "circle-rep":
        g = GridManifold.circle(256)
        q = new_quiver(["1", "2"], [("a", "1", "2")])
        rep = {
            "generators": ["g0"],
            "dims": {"1": 2, "2": 2},
            "maps": {"a": [[1.0, 0.0], [0.0, 0.0]]},
            "action": {"g0": {"1": [[2.0, 0.0], [0.0, 0.5]], "2": [[2.0, 0.0], [0.0, 3.0]]}},
        }
        return save_project(out / "project.json", q, g, representation=rep)
    raise UsageError(f"unknown example {name!r}")


def cmd_example(args) -> int:
    path = _example(args.name, Path(args.out), args.seed)
    _emit({"example": args.name, "project": str(path)})
    return EXIT_OK


# entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qconnect", description="Relative connections on quiver bundles.")
    p.add_argument("--version", action="version", version=f"qconnect {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="load a project and check shapes")
    s.add_argument("project")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("check", help="run one family of checks")
    s.add_argument("project")
    s.add_argument("--what", required=True, choices=["ranks", "compat", "flat", "bianchi", "jet"])
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("synthesize", help="build a compatible connection on a tree-type bundle")
    s.add_argument("project")
    s.add_argument("--seed-file")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("obstruct", help="solvability certificate for the L-map")
    s.add_argument("project")
    s.set_defaults(func=cmd_obstruct)

    s = sub.add_parser("monodromy", help="flat bundle <-> representation of the fundamental group")
    s.add_argument("project")
    s.add_argument("--direction", required=True, choices=["to-rep", "from-rep"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_monodromy)

    s = sub.add_parser("example", help="write a demo project")
    s.add_argument("name", choices=["counterexample", "identity-chain", "random-tree", "circle-rep"])
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_example)
    return p


def _thread_limit():
    value = os.environ.get("QCONNECT_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"QCONNECT_THREADS must be a positive integer, got {value!r}") from None
    return threadpool_limits(limits=max(1, n))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except (UsageError, *INPUT_ERRORS) as exc:
        _emit(_error_doc(exc, EXIT_INPUT))
        return EXIT_INPUT
    except SEMANTIC_ERRORS as exc:
        _emit(_error_doc(exc, EXIT_FAIL))
        return EXIT_FAIL
    except QConnectError as exc:
        _emit(_error_doc(exc, EXIT_INPUT))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
