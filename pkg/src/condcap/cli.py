"""condenser-cap: scenario-driven solves, studies and the benchmark suite.

Exit codes: 0 converged, 1 invalid input, 2 not converged, 3 internal error.
"""
from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema

from . import __version__
from .benchmark import CRITERIA, run_suite
from .capacity import exhaustion_study, family_positivity_study, solve_capacity
from .condenser import (CondenserError, PlateSpec, discretize, exhaustion_sequence, shape_from_dict, validate,
                        weight_function_from_dict)
from .io import write_csv, write_json
from .kernels import KernelError, KernelSpec
from .solver import SolveOptions, SolverError

log = logging.getLogger("condcap")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_INTERNAL = 0, 1, 2, 3
SCHEMA_ID = "condenser-cap/1"

_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_shape = {
    "type": "object",
    "required": ["type"],
    "properties": {
        "type": {"enum": ["sphere_shell", "ball_volume", "segment", "explicit_points"]},
        "center": _vec, "radius": {"type": "number", "exclusiveMinimum": 0},
        "interior_points": {"type": "integer", "minimum": 0},
        "a": _vec, "b": _vec,
        "points": {"type": "array", "items": _vec, "minItems": 1},
    },
    "allOf": [
        {"if": {"properties": {"type": {"enum": ["sphere_shell", "ball_volume"]}}},
         "then": {"required": ["center", "radius"]}},
        {"if": {"properties": {"type": {"const": "segment"}}}, "then": {"required": ["a", "b"]}},
        {"if": {"properties": {"type": {"const": "explicit_points"}}}, "then": {"required": ["points"]}},
    ],
    "additionalProperties": False,
}
_plate = {
    "type": "object",
    "required": ["id", "sign", "shape"],
    "properties": {
        "id": {"type": "integer"},
        "sign": {"enum": [1, -1]},
        "shape": _shape,
        "points": {"type": "integer", "minimum": 1},
        "a": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}
SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema"],
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "seed": {"type": "integer", "minimum": 0},
        "kernel": {
            "type": "object",
            "properties": {"family": {"enum": ["riesz", "log_unit_disk"]}, "alpha": {"type": "number"},
                           "dim": {"type": "integer"}, "epsilon": {"type": "number", "minimum": 0}},
            "additionalProperties": False,
        },
        "weight_function": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["constant", "radial_polynomial"]}, "value": {"type": "number"},
                           "coefficients": _vec},
            "additionalProperties": False,
        },
        "plates": {"type": "array", "items": _plate, "minItems": 1},
        "solver": {
            "type": "object",
            "properties": {"max_iterations": {"type": "integer", "minimum": 1},
                           "gap_tolerance": {"type": "number", "exclusiveMinimum": 0},
                           "step_rule": {"enum": ["armijo", "fixed"]},
                           "armijo_shrink": {"type": "number"}, "armijo_c": {"type": "number"}},
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "weights_csv": {"type": "boolean"},
                           "residuals_csv": {"type": "boolean"}, "trace_csv": {"type": "boolean"}},
            "additionalProperties": False,
        },
        "checks": {
            "type": "object",
            "properties": {"kkt_tolerance": {"type": "number", "exclusiveMinimum": 0},
                           "duality_tests": {"type": "integer", "minimum": 0}},
            "additionalProperties": False,
        },
        "exhaustion": {
            "type": "object",
            "required": ["levels"],
            "properties": {"mode": {"enum": ["points", "radius"]},
                           "levels": {"type": "array", "items": {"type": "number"}, "minItems": 1}},
            "additionalProperties": False,
        },
        "family": {
            "type": "object",
            "required": ["template", "N"],
            "properties": {
                "template": _plate,
                "offset": _vec,
                "mass_rule": {"enum": ["unit", "inverse_square", "geometric"]},
                "ratio": {"type": "number", "exclusiveMinimum": 0},
                "N": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "huge_capacity": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ScenarioError(ValueError):
    pass


def _skip_ws(text: str, pos: int) -> int:
    while pos < len(text) and text[pos] in " \t\r\n":
        pos += 1
    return pos


def locate(text: str, path) -> int:
    """Character offset of the JSON value at ``path`` (keys and indices).

    Falls back to the deepest container found if the path runs out.
    """
    dec = json.JSONDecoder()
    pos = _skip_ws(text, 0)
    for key in path:
        if pos >= len(text) or text[pos] not in "{[":
            return pos
        opener = text[pos]
        cur = _skip_ws(text, pos + 1)
        k = 0
        found = False
        while cur < len(text) and text[cur] not in "}]":
            if opener == "{":
                name, cur = dec.raw_decode(text, cur)
                cur = _skip_ws(text, cur) + 1  # colon
                cur = _skip_ws(text, cur)
                hit = name == key
            else:
                hit = k == key
            if hit:
                pos, found = cur, True
                break
            _, cur = dec.raw_decode(text, cur)
            cur = _skip_ws(text, cur)
            if cur < len(text) and text[cur] == ",":
                cur = _skip_ws(text, cur + 1)
            k += 1
        if not found:
            return pos
    return pos


def _line_col(text: str, offset: int) -> tuple:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def load_scenario(path) -> dict:
    """Parse and schema-check a scenario file; errors carry ``file:line:col``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        lines = []
        for e in errors:
            ln, col = _line_col(text, locate(text, list(e.absolute_path)))
            where = "/".join(map(str, e.absolute_path)) or "<root>"
            lines.append(f"{path}:{ln}:{col}: {where}: {e.message}")
        raise ScenarioError("\n".join(lines))
    data.setdefault("seed", 0)
    return data


def _plate_spec(d: dict) -> PlateSpec:
    d = dict(d)
    d.setdefault("points", len(d["shape"]["points"]) if d["shape"]["type"] == "explicit_points" else 100)
    return PlateSpec.from_dict(d)


def scenario_parts(sc: dict):
    wf = weight_function_from_dict(sc.get("weight_function"))
    kernel = KernelSpec.from_dict(sc["kernel"]) if "kernel" in sc else None
    opts = SolveOptions.from_dict(sc.get("solver"))
    specs = [_plate_spec(p) for p in sc.get("plates", [])]
    return specs, wf, kernel, opts


def _out_dir(args, sc, scenario_path) -> Path:
    d = Path(args.out or sc.get("outputs", {}).get("dir") or Path(scenario_path).with_suffix("").name + "_out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _meta(args, sc) -> dict:
    meta = {"tool": "condenser-cap", "version": __version__, "schema": SCHEMA_ID, "seed": sc["seed"]}
    if not args.deterministic:
        meta["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return meta


def _kernel_for(kernel: KernelSpec | None, c) -> KernelSpec:
    kernel = kernel or KernelSpec.newtonian(c.dim)
    return kernel if kernel.epsilon > 0 else kernel.with_epsilon(c.default_epsilon())


def cmd_solve(args) -> int:
    sc = load_scenario(args.scenario)
    specs, wf, kernel, opts = scenario_parts(sc)
    if not specs:
        raise ScenarioError(f"{args.scenario}: solve needs a non-empty 'plates' list")
    c = discretize(specs, wf, sc["seed"], kernel)
    kernel = _kernel_for(kernel, c)
    vr = validate(c, kernel=kernel)
    if not vr.passed:
        msg = str(vr)
        if any(f.name == "opposite_sign_separation" for f in vr.failures):
            msg += "\nseparation axiom violated: opposite-sign plates must be a positive distance apart"
        raise ScenarioError(msg)
    checks = sc.get("checks", {})
    rep, res, K = solve_capacity(c, kernel, opts, checks.get("kkt_tolerance", 1e-6), checks.get("duality_tests", 10),
                                 sc["seed"])
    out = _out_dir(args, sc, args.scenario)
    body = {"meta": _meta(args, sc), "fingerprint": c.fingerprint(), "n_points": len(c.points),
            "plates": [s.to_dict() for s in specs], "weight_function": wf.to_dict(),
            "solver": opts.to_dict(), "converged": res.converged, "validation": vr.to_dict(), "report": rep.to_dict()}
    write_json(out / "report.json", body)
    outputs = sc.get("outputs", {})
    if outputs.get("weights_csv", True):
        rows = []
        for p, s, w in zip(c.plates, c.slices, rep.gamma.weights):
            for k in range(p.n):
                rows.append([p.id, k, *p.points[k], p.g_values[k], w[k]])
        coords = [f"x{j}" for j in range(c.dim)]
        write_csv(out / "weights.csv", ["plate", "index", *coords, "g", "gamma"], rows)
    if outputs.get("residuals_csv", True) and rep.frostman is not None:
        rows = [[p.id, k, r] for p, res_i in zip(c.plates, rep.frostman.residuals) for k, r in enumerate(res_i)]
        write_csv(out / "residuals.csv", ["plate", "index", "residual"], rows)
    if outputs.get("trace_csv", False):
        write_csv(out / "trace.csv", ["iteration", "energy", "gap"], [[i, f, g] for i, (f, g) in enumerate(res.trace)])
    print(f"cap = {rep.cap:.12g}  C = {', '.join(f'{x:.6g}' for x in rep.constants)}  "
          f"converged = {res.converged}  -> {out / 'report.json'}")
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _write_table(path: Path, table, meta: dict, extra: dict | None = None):
    write_csv(path.with_suffix(".csv"), table.columns, table.rows)
    write_json(path.with_suffix(".json"), {"meta": meta, **(extra or {}), "columns": table.columns,
                                           "flags": table.flags})


def cmd_exhaust(args) -> int:
    sc = load_scenario(args.scenario)
    if "exhaustion" not in sc:
        raise ScenarioError(f"{args.scenario}: exhaust needs an 'exhaustion' block with 'levels'")
    specs, wf, kernel, opts = scenario_parts(sc)
    ex = sc["exhaustion"]
    mode = ex.get("mode", "points")
    levels = [int(x) for x in ex["levels"]] if mode == "points" else list(ex["levels"])
    seq = exhaustion_sequence(specs, wf, levels, mode, sc["seed"], kernel)
    kernel = _kernel_for(kernel, seq[-1])
    for c in seq:
        vr = validate(c, kernel=kernel)
        if not vr.passed:
            raise ScenarioError(str(vr))
    table = exhaustion_study(seq, kernel, opts, args.jobs, levels)
    out = _out_dir(args, sc, args.scenario)
    _write_table(out / "exhaustion", table, _meta(args, sc), {"mode": mode})
    for r in table.rows:
        print(f"level {r[0]}: n = {r[1]}, cap = {r[2]:.10g}, dist = {r[-2]:.4g}")
    return EXIT_OK if table.flags["all_converged"] else EXIT_NOT_CONVERGED


def _family_generator(fam: dict):
    tpl = dict(fam["template"])
    rule = fam.get("mass_rule", "unit")
    ratio = float(fam.get("ratio", 0.5))
    base_a = float(tpl.get("a", 1.0))
    shape0 = tpl["shape"]
    offset = fam.get("offset", [4.0] + [0.0] * (len(shape0.get("center", [0, 0, 0])) - 1))

    def mass(k):
        if rule == "inverse_square":
            return base_a / k ** 2
        if rule == "geometric":
            return base_a * ratio ** (k - 1)
        return base_a

    def gen(k: int) -> PlateSpec:
        shape = dict(shape0)
        for key in ("center", "a", "b"):
            if key in shape:
                shape[key] = [x + k * o for x, o in zip(shape[key], offset)]
        if "points" in shape:
            shape["points"] = [[x + k * o for x, o in zip(p, offset)] for p in shape["points"]]
        return PlateSpec(k, int(tpl["sign"]), shape_from_dict(shape), int(tpl.get("points", 100)), mass(k))

    return gen


def cmd_family(args) -> int:
    sc = load_scenario(args.scenario)
    if "family" not in sc:
        raise ScenarioError(f"{args.scenario}: family needs a 'family' block with 'template' and 'N'")
    _, wf, kernel, opts = scenario_parts(sc)
    fam = sc["family"]
    table = family_positivity_study(_family_generator(fam), fam["N"], wf, kernel, opts, sc["seed"], args.jobs,
                                    fam.get("huge_capacity", 1e6))
    out = _out_dir(args, sc, args.scenario)
    _write_table(out / "family", table, _meta(args, sc), {"mass_rule": fam.get("mass_rule", "unit")})
    for r in table.rows:
        print(f"N = {r[0]}: cap = {r[1]:.10g}, partial sum = {r[2]:.6g}")
    return EXIT_OK if all(r[-1] for r in table.rows) else EXIT_NOT_CONVERGED


def cmd_benchmark(args) -> int:
    if args.list:
        for cid, (title, _) in CRITERIA.items():
            print(f"{cid}: {title}")
        return EXIT_OK
    ids = args.only or None
    if ids and any(i not in CRITERIA for i in ids):
        raise ScenarioError(f"unknown criterion id in {ids}; valid ids are {sorted(CRITERIA)}")
    results = run_suite(ids, gap_tolerance=args.gap)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return EXIT_OK if n_pass == len(results) else EXIT_NOT_CONVERGED


def _setup_logging():
    level = os.environ.get("CONDENSER_CAP_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condenser-cap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, hlp in (("solve", cmd_solve, "solve one scenario and write report.json"),
                          ("exhaust", cmd_exhaust, "capacity along a nested exhaustion"),
                          ("family", cmd_family, "capacity of truncated plate families")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("scenario")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--deterministic", action="store_true", help="omit timestamps for byte-identical reports")
        p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=fn)
    p = sub.add_parser("benchmark", help="run the built-in analytic suite")
    p.add_argument("--list", action="store_true", help="list criteria without running")
    p.add_argument("--gap", type=float, default=1e-10, help="solver relative gap tolerance")
    p.add_argument("--only", type=int, nargs="+", help="criterion ids to run")
    p.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (ScenarioError, CondenserError, KernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything else is a bug
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
