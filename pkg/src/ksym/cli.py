"""``ksym`` command line: classify, charge, simulate, verify, selftest.

System files are JSON documents::

    {
      "n": 1, "k": 2,
      "hamiltonian": "(p_1_1^2 + p_2_1^2)/2",
      "safe_box": {"q_1": [-1, 1], "p_1_1": [-1, 1], "p_2_1": [-1, 1]},
      "n_max": 5,
      "base": {"q_1": 0, "p_1_1": 0, "p_2_1": 0},
      "tolerances": {"zero_eps": 1e-9, "samples": 16, "tol_path": 1e-6, "verify": 1e-8},
      "candidates": {
        "translation": {"lift": ["1"]},
        "field": {"components": {"q_1": "1"}},
        "guess": {"charge": ["q_1", "0"]}
      },
      "sections": {"exact": {"q_1": "t_1*t_2", "p_1_1": "t_2", "p_2_1": "t_1"}},
      "grids": {
        "exact": {"origin": [0, 0], "spacing": [0.01, 0.01], "count": [101, 101], "section": "exact"},
        "flow": {"origin": [0, 0], "spacing": [0.01, 0.01], "count": [51, 51], "start": {"q_1": 0, "p_1_1": 1, "p_2_1": 0}}
      }
    }

Exit codes: 0 success, 1 input error, 2 mathematical failure, 3 route mismatch.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .chart import Chart, ZeroTest
from .expr import EvaluationDomainError, ParseError, SingularEvaluationError, default_seed, normalize, parse
from .forms import VectorField, canonical_lift
from .hdw import (
    TOL_PATH,
    AnalyticSection,
    GridAxis,
    GridSchemaError,
    HamiltonianSystem,
    NonIntegrableError,
    SolutionGrid,
    hdw_residual_grid,
    integrate_section,
    particular_kvector,
    sample_section,
)
from .noether import (
    InternalInconsistencyError,
    NotClosedError,
    RouteMismatchError,
    SingularityOnSegmentError,
    classify_cartan_order,
    conservation_check_numeric,
    conservation_check_symbolic,
    describe_charge,
    noether_charge,
)
from .selftest import SUITES, run_selftest

SCHEMA_VERSION = 1
DEFAULT_NMAX = 5
DEFAULT_VERIFY_TOL = 1e-8

EXIT_OK, EXIT_INPUT, EXIT_MATH, EXIT_ROUTE = 0, 1, 2, 3


class InputError(Exception):
    """A problem with the system file or the command line (exit code 1)."""


class MathFailure(Exception):
    """A mathematical failure such as non-integrability (exit code 2)."""


# system files ---------------------------------------------------------------

@dataclass
class Candidate:
    name: str
    field: VectorField | None
    charge: tuple | None
    spec: dict


@dataclass
class SystemFile:
    path: str
    digest: str
    raw: dict
    chart: Chart
    system: HamiltonianSystem
    candidates: dict[str, Candidate]
    sections: dict[str, AnalyticSection]
    grids: dict[str, dict]
    n_max: int
    base: dict[str, float] | None
    tolerances: dict


def _expr(chart: Chart, text, where: str, allow_params: bool = False):
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(text)
    if not isinstance(text, str):
        raise InputError(f"{where}: expected an expression string, got {type(text).__name__}")
    try:
        return normalize(parse(text, chart, allow_params=allow_params))
    except ParseError as exc:
        raise InputError(f"{where}: {exc} in {text!r}") from None


def _require(raw: dict, key: str, kind, where: str):
    if key not in raw:
        raise InputError(f"{where}: missing required field {key!r}")
    value = raw[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise InputError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}")
    return value


def _point(chart: Chart, raw, where: str) -> dict[str, float]:
    if not isinstance(raw, dict):
        raise InputError(f"{where}: expected an object of coordinate values")
    unknown = sorted(set(raw) - set(chart.coords))
    if unknown:
        raise InputError(f"{where}: unknown coordinates {unknown}")
    try:
        return chart.point({n: float(v) for n, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: {exc}") from None


def load_system(path: str) -> SystemFile:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not UTF-8 at byte {exc.start}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}: top level must be an object")

    n = _require(raw, "n", int, "system")
    k = _require(raw, "k", int, "system")
    if n < 1 or k < 1:
        raise InputError("system: n and k must be positive")
    tol = raw.get("tolerances", {})
    if not isinstance(tol, dict):
        raise InputError("system.tolerances: expected an object")
    known_tol = {"zero_eps", "samples", "tol_path", "verify", "quad_order"}
    if set(tol) - known_tol:
        raise InputError(f"system.tolerances: unknown keys {sorted(set(tol) - known_tol)}")
    zt = ZeroTest(eps=float(tol.get("zero_eps", 1e-9)), samples=int(tol.get("samples", 16)))

    box_raw = raw.get("safe_box", {})
    if not isinstance(box_raw, dict):
        raise InputError("system.safe_box: expected an object")
    box = {}
    for name, interval in box_raw.items():
        if not (isinstance(interval, list) and len(interval) == 2):
            raise InputError(f"system.safe_box.{name}: expected [low, high]")
        lo, hi = float(interval[0]), float(interval[1])
        if not lo < hi:
            raise InputError(f"system.safe_box.{name}: empty interval")
        box[name] = (lo, hi)
    try:
        chart = Chart(n, k, box=box, zero_test=zt)
    except (KeyError, ValueError) as exc:
        raise InputError(f"system.safe_box: {exc}") from None

    h = _expr(chart, _require(raw, "hamiltonian", (str, int, float), "system"), "system.hamiltonian")
    system = HamiltonianSystem(chart, h)

    candidates = {}
    cands_raw = raw.get("candidates", {})
    if not isinstance(cands_raw, dict):
        raise InputError("system.candidates: expected an object")
    for name, spec in cands_raw.items():
        where = f"system.candidates.{name}"
        if not isinstance(spec, dict) or len(spec) != 1 or next(iter(spec)) not in ("lift", "components", "charge"):
            raise InputError(f"{where}: expected exactly one of 'lift', 'components', 'charge'")
        kind, body = next(iter(spec.items()))
        if kind == "lift":
            if not isinstance(body, list) or len(body) != n:
                raise InputError(f"{where}.lift: expected {n} component expressions in q")
            z = [_expr(chart, c, f"{where}.lift[{i}]") for i, c in enumerate(body)]
            try:
                candidates[name] = Candidate(name, canonical_lift(z, chart), None, spec)
            except ValueError as exc:
                raise InputError(f"{where}.lift: {exc}") from None
        elif kind == "components":
            if not isinstance(body, dict):
                raise InputError(f"{where}.components: expected an object")
            unknown = sorted(set(body) - set(chart.coords))
            if unknown:
                raise InputError(f"{where}.components: unknown coordinates {unknown}")
            comps = {c: _expr(chart, v, f"{where}.components.{c}") for c, v in body.items()}
            candidates[name] = Candidate(name, VectorField.from_dict(chart, comps), None, spec)
        else:
            if not isinstance(body, list) or len(body) != k:
                raise InputError(f"{where}.charge: expected {k} component expressions")
            f = tuple(_expr(chart, c, f"{where}.charge[{i}]") for i, c in enumerate(body))
            candidates[name] = Candidate(name, None, f, spec)

    sections = {}
    for name, body in (raw.get("sections") or {}).items():
        where = f"system.sections.{name}"
        if not isinstance(body, dict) or set(body) != set(chart.coords):
            raise InputError(f"{where}: expected one expression in t for each of {list(chart.coords)}")
        comps = {c: _expr(chart, v, f"{where}.{c}", allow_params=True) for c, v in body.items()}
        try:
            sections[name] = AnalyticSection.from_dict(chart, comps)
        except ValueError as exc:
            raise InputError(f"{where}: {exc}") from None

    grids = {}
    for name, body in (raw.get("grids") or {}).items():
        where = f"system.grids.{name}"
        if not isinstance(body, dict):
            raise InputError(f"{where}: expected an object")
        for key in ("origin", "spacing", "count"):
            v = body.get(key)
            if not isinstance(v, list) or len(v) != k:
                raise InputError(f"{where}.{key}: expected a list of {k} numbers")
        if any(float(s) <= 0 for s in body["spacing"]):
            raise InputError(f"{where}.spacing: spacings must be positive")
        if any(not isinstance(c, int) or c < 1 for c in body["count"]):
            raise InputError(f"{where}.count: node counts must be positive integers")
        if ("section" in body) == ("start" in body):
            raise InputError(f"{where}: give exactly one of 'section' or 'start'")
        if "section" in body and body["section"] not in sections:
            raise InputError(f"{where}.section: no section named {body['section']!r}")
        if "start" in body:
            _point(chart, body["start"], f"{where}.start")
        grids[name] = body

    n_max = raw.get("n_max", DEFAULT_NMAX)
    if not isinstance(n_max, int) or n_max < 1:
        raise InputError("system.n_max: must be an integer >= 1")
    base = _point(chart, raw["base"], "system.base") if "base" in raw else None
    if base is not None and not chart.in_box(base):
        raise InputError("system.base: base point lies outside the safe box")

    return SystemFile(
        path=path,
        digest=hashlib.sha256(data).hexdigest(),
        raw=raw,
        chart=chart,
        system=system,
        candidates=candidates,
        sections=sections,
        grids=grids,
        n_max=n_max,
        base=base,
        tolerances=tol,
    )


def _candidate(sf: SystemFile, name: str) -> Candidate:
    if name not in sf.candidates:
        raise InputError(f"no candidate named {name!r}; available: {sorted(sf.candidates)}")
    return sf.candidates[name]


def _parse_base(sf: SystemFile, text: str | None) -> dict[str, float]:
    base = dict(sf.base) if sf.base is not None else sf.chart.center()
    if not text:
        return base
    for item in text.split(","):
        if "=" not in item:
            raise InputError(f"--base: expected name=value, got {item!r}")
        name, value = (s.strip() for s in item.split("=", 1))
        if name not in sf.chart.coords:
            raise InputError(f"--base: unknown coordinate {name!r}")
        try:
            base[name] = float(value)
        except ValueError:
            raise InputError(f"--base: {value!r} is not a number") from None
    if not sf.chart.in_box(base):
        raise InputError("--base: base point lies outside the safe box")
    return base


def build_grid(sf: SystemFile, name: str) -> SolutionGrid:
    if name not in sf.grids:
        raise InputError(f"no grid named {name!r}; available: {sorted(sf.grids)}")
    spec = sf.grids[name]
    axes = [GridAxis(float(o), float(s), int(c)) for o, s, c in zip(spec["origin"], spec["spacing"], spec["count"])]
    if "section" in spec:
        return sample_section(sf.sections[spec["section"]], axes)
    start = _point(sf.chart, spec["start"], f"system.grids.{name}.start")
    tol_path = float(sf.tolerances.get("tol_path", TOL_PATH))
    try:
        return integrate_section(particular_kvector(sf.system), start, axes, tol_path=tol_path)
    except NonIntegrableError as exc:
        raise MathFailure(str(exc)) from None


def grid_metadata(grid: SolutionGrid) -> dict:
    return {
        "source": grid.source,
        "origin": [ax.origin for ax in grid.axes],
        "spacing": [ax.spacing for ax in grid.axes],
        "count": [ax.count for ax in grid.axes],
        "path_residual": grid.path_residual,
        "path_tolerance": grid.meta.get("tol_path"),
        "audited_nodes": grid.meta.get("audited_nodes"),
        "integrability": grid.integrability,
        "integrability_test": "sufficient-condition (commuting brackets)",
    }


# workflows ------------------------------------------------------------------

def _summary_lines(report: dict) -> list[str]:
    return report.setdefault("_summary", [])


def classify_workflow(sf: SystemFile, n_max: int | None, out: dict) -> int:
    n_max = n_max or sf.n_max
    results = []
    code = EXIT_OK
    lines = _summary_lines(out)
    for name, cand in sf.candidates.items():
        if cand.field is None:
            results.append({"name": name, "skipped": "user-supplied charge, no vector field"})
            continue
        try:
            rep = classify_cartan_order(sf.system, cand.field, n_max)
        except InternalInconsistencyError as exc:
            results.append({"name": name, "error": f"internal inconsistency: {exc}"})
            lines.append(f"{name}: INTERNAL INCONSISTENCY {exc}")
            code = EXIT_MATH
            continue
        entry = {"name": name, **rep.to_dict()}
        results.append(entry)
        order = f"order {rep.order}" if rep.order is not None else f"no order <= {n_max}"
        lines.append(f"{name}: {order}; L(Y)H {rep.lie_H_verdict}; bracket evidence {rep.bracket_evidence} "
                     f"(necessary condition only)")
    out["result"] = {"n_max": n_max, "candidates": results}
    return code


def _derive_charge(sf: SystemFile, cand: Candidate, base: dict[str, float], out: dict):
    """(components, quantity-or-None) for a candidate; raises InputError when refused."""
    if cand.charge is not None:
        return cand.charge, None
    rep = classify_cartan_order(sf.system, cand.field, sf.n_max)
    out["classification"] = rep.to_dict()
    if rep.order is None:
        raise InputError(f"candidate {cand.name!r} has no Cartan order <= {sf.n_max}; refusing to build a charge")
    if not rep.lie_H_zero:
        raise InputError(f"candidate {cand.name!r} does not satisfy L(Y)H = 0 ({rep.lie_H_verdict}); refusing")
    try:
        q = noether_charge(sf.system, cand.field, rep.order, base, strict=True)
    except RouteMismatchError as exc:
        out["charge"] = exc.quantity.to_dict()
        out["warning"] = str(exc)
        raise
    return q.components, q


def charge_workflow(sf: SystemFile, name: str, base_text: str | None, out: dict) -> int:
    cand = _candidate(sf, name)
    lines = _summary_lines(out)
    base = _parse_base(sf, base_text)
    out["result"] = res = {"candidate": name}
    if cand.field is None:
        res["charge"] = {"provenance": "user-supplied", "g": [describe_charge(c) for c in cand.charge]}
        lines.append(f"{name}: user-supplied charge {[str(c) for c in cand.charge]}")
        return EXIT_OK
    try:
        comps, q = _derive_charge(sf, cand, base, res)
    except RouteMismatchError as exc:
        lines.append(f"WARNING {name}: {exc}")
        return EXIT_ROUTE
    res["charge"] = q.to_dict()
    for a, g in enumerate(comps, start=1):
        desc = describe_charge(g)
        shown = desc["expression"] if desc["kind"] == "closed-form" else f"quadrature (order {desc['order']})"
        lines.append(f"{name}: g^{a} = {shown}")
    lines.append(f"{name}: routes agree ({', '.join(str(v) for v in q.route_agreement)})")
    return EXIT_OK


def simulate_workflow(sf: SystemFile, grid_name: str, out_path: str | None, out: dict) -> int:
    grid = build_grid(sf, grid_name)
    target = out_path or f"{Path(sf.path).stem}-{grid_name}.csv"
    grid.to_csv(target)
    residual = hdw_residual_grid(sf.system, grid)
    out["result"] = {
        "grid": grid_name,
        "csv": target,
        "grid_metadata": grid_metadata(grid),
        "hdw_residual": {"sup_norm": residual, "method": "central differences on interior nodes"},
    }
    path = "n/a" if grid.path_residual is None else f"{grid.path_residual:.3e}"
    _summary_lines(out).append(
        f"{grid_name}: wrote {target}; HDW residual {residual:.3e}; path residual {path}; {grid.integrability}")
    return EXIT_OK


def verify_workflow(sf: SystemFile, name: str, grid_name: str | None, csv_path: str | None,
                    tol: float | None, out: dict) -> int:
    if (grid_name is None) == (csv_path is None):
        raise InputError("verify needs exactly one of --grid or --csv")
    cand = _candidate(sf, name)
    lines = _summary_lines(out)
    out["result"] = res = {"candidate": name}
    base = _parse_base(sf, None)
    try:
        comps, q = _derive_charge(sf, cand, base, res)
    except RouteMismatchError as exc:
        lines.append(f"WARNING {name}: {exc}")
        return EXIT_ROUTE
    res["charge"] = q.to_dict() if q is not None else {
        "provenance": "user-supplied", "g": [describe_charge(c) for c in comps]}

    if csv_path is not None:
        try:
            grid = SolutionGrid.from_csv(Path(csv_path), sf.chart)
        except OSError as exc:
            raise InputError(f"cannot read {csv_path}: {exc.strerror}") from None
        except GridSchemaError as exc:
            raise InputError(f"{csv_path}: {exc}") from None
        res["grid"] = {"csv": csv_path, **grid_metadata(grid)}
    else:
        grid = build_grid(sf, grid_name)
        res["grid"] = {"name": grid_name, **grid_metadata(grid)}

    tol = float(tol if tol is not None else sf.tolerances.get("verify", DEFAULT_VERIFY_TOL))
    symbolic = conservation_check_symbolic(sf.system, comps, particular_kvector(sf.system))
    numeric = conservation_check_numeric(comps, grid)
    ok = numeric <= tol and symbolic.vanishes
    res["symbolic"] = {"verdict": str(symbolic), "against": "particular k-vector field",
                       "zero_test_eps": sf.chart.zero_test.eps}
    res["numeric"] = {"sup_norm": numeric, "tolerance": tol, "spacing": [ax.spacing for ax in grid.axes],
                      "passed": numeric <= tol}
    res["passed"] = ok
    lines.append(f"{name}: symbolic {symbolic}; numeric divergence {numeric:.3e} (tol {tol:g}) "
                 f"-> {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_MATH


def selftest_workflow(only: list[str] | None, out: dict) -> int:
    suites = run_selftest(only=only)
    out["result"] = {"suites": [s.to_dict() for s in suites], "passed": all(s.passed for s in suites)}
    lines = _summary_lines(out)
    for s in suites:
        for c in s.checks:
            err = f" max error {c.max_error:.3e} (tol {c.tolerance:g})" if c.max_error is not None else ""
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {s.name}: {c.name} ({c.instances} instances){err}")
    return EXIT_OK if out["result"]["passed"] else EXIT_MATH


# entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ksym", description="k-symplectic field theory: symmetries and charges.")
    ap.add_argument("--version", action="version", version=f"ksym {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--report", metavar="PATH", help="write the JSON report here")
        p.add_argument("--timings", action="store_true",
                       help="add wall-clock timings to the report (the report is then not reproducible)")

    p = sub.add_parser("classify", help="find the Cartan order of every candidate")
    p.add_argument("file")
    p.add_argument("--nmax", type=int, help="largest order to try (default: file's n_max or 5)")
    common(p)

    p = sub.add_parser("charge", help="build the conserved quantity of a candidate")
    p.add_argument("file")
    p.add_argument("--candidate", required=True)
    p.add_argument("--base", metavar="k=v,...", help="override base-point coordinates")
    common(p)

    p = sub.add_parser("simulate", help="integrate a grid and export it as CSV")
    p.add_argument("file")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", metavar="PATH")
    common(p)

    p = sub.add_parser("verify", help="check conservation of a candidate's charge")
    p.add_argument("file")
    p.add_argument("--candidate", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--grid")
    src.add_argument("--csv", metavar="PATH")
    p.add_argument("--tol", type=float)
    common(p)

    p = sub.add_parser("selftest", help="run the randomized invariant suites")
    p.add_argument("--suite", action="append", choices=sorted(SUITES), help="run only this suite (repeatable)")
    common(p)
    return ap


def _run(args, out: dict) -> int:
    if args.command == "selftest":
        return selftest_workflow(args.suite, out)
    sf = load_system(args.file)
    out["input"] = {"file": args.file, "sha256": sf.digest, "n": sf.chart.n, "k": sf.chart.k,
                    "hamiltonian": str(sf.system.hamiltonian)}
    if args.command == "classify":
        if args.nmax is not None and args.nmax < 1:
            raise InputError("--nmax must be >= 1")
        return classify_workflow(sf, args.nmax, out)
    if args.command == "charge":
        return charge_workflow(sf, args.candidate, args.base, out)
    if args.command == "simulate":
        return simulate_workflow(sf, args.grid, args.out, out)
    return verify_workflow(sf, args.candidate, args.grid, args.csv, args.tol, out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out: dict = {
        "schema_version": SCHEMA_VERSION,
        "engine": {"name": "ksym", "version": __version__},
        "seed": default_seed(),
        "command": args.command,
    }
    started = time.perf_counter()
    try:
        code = _run(args, out)
    except InputError as exc:
        out["error"] = {"kind": "input", "message": str(exc)}
        code = EXIT_INPUT
    except (MathFailure, NotClosedError, SingularityOnSegmentError, InternalInconsistencyError,
            SingularEvaluationError, EvaluationDomainError) as exc:
        out["error"] = {"kind": "mathematical", "message": str(exc)}
        code = EXIT_MATH
    summary = out.pop("_summary", [])
    out["exit_code"] = code
    if args.timings:
        out["timings"] = {"wall_seconds": time.perf_counter() - started}

    for line in summary:
        print(line)
    if "error" in out:
        print(f"error: {out['error']['message']}", file=sys.stderr)
    if args.report:
        Path(args.report).write_text(json.dumps(out, indent=2) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
