"""Command line interface: ``harmlab <subcommand> [options]``.

Exit codes: 0 success, 2 solver non-convergence, 3 check violation, 4 bad input.
JSON reports use sorted keys and 17 significant digits, so runs with the same
inputs and seed are byte-identical.
"""
from __future__ import annotations

import argparse
import glob
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .continuation import PROTOCOL_VERSION, StepUnderflow
from .experiments import (
    abp_experiment,
    bifurcation_experiment,
    bound_sweep_experiment,
    comparison_experiment,
    transform_check,
)
from .field import field_to_csv, sup_norm
from .fixpoint import SolverConfig, SolverError, newton_solve, picard_solve
from .spectral import EigenError, principal_eigenpair
from .specio import SpecError, load_spec

EXIT_OK, EXIT_NONCONVERGED, EXIT_VIOLATION, EXIT_BAD_INPUT = 0, 2, 3, 4
SUBCOMMANDS = ("solve", "transform-check", "abp", "compare", "sweep", "eigen", "bifurcate", "report")


class BadInput(Exception):
    pass


# ---------------------------------------------------------------------------
# deterministic JSON


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return f"{x:.17g}"


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with sorted keys, 17-digit floats and non-finite floats as strings."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, np.generic):
        obj = obj.item()
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{dumps(str(k))}: {dumps(obj[k], indent, _level + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{inner}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write(out_dir: str, name: str, text: str) -> str:
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def _write_json(out_dir: str, name: str, obj) -> str:
    return _write(out_dir, name, dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# argument handling


def _float_list(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("refinement levels must be nonnegative")
    return vals


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadInput(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="harmlab", description="Numerical laboratory for Pucci equations with quadratic gradient terms.")
    p.add_argument("--version", action="version", version=f"harmlab {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, spec_required: bool):
        sp.add_argument("--spec", required=spec_required, help="problem spec JSON")
        sp.add_argument("--out", default=".", help="output directory (created if missing)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--refine", type=_int_list, default=[0], help="comma-separated refinement levels")
        sp.add_argument("--tol", type=float, default=SolverConfig.tol)
        sp.add_argument("--max-iter", type=int, default=SolverConfig.max_iter)
        sp.add_argument("--theta", type=float, default=SolverConfig.theta)
        sp.add_argument("--lambda-max", type=float, default=None)
        sp.add_argument("--protocol", default=PROTOCOL_VERSION)

    s = sub.add_parser("solve", help="solve the Dirichlet problem of a spec")
    common(s, True)
    s.add_argument("--method", choices=("newton", "picard"), default="newton")
    t = sub.add_parser("transform-check", help="change-of-variables identities and asymptotics")
    common(t, False)
    t.add_argument("--m", type=_float_list, default=[0.5, 1.0, 2.0])
    t.add_argument("--k", type=_float_list, default=[1.0, 3.0])
    a = sub.add_parser("abp", help="uniform ABP constant over random subsolutions")
    common(a, True)
    a.add_argument("--instances", type=int, default=20)
    c = sub.add_parser("compare", help="comparison of generated sub/supersolution pairs over mu2")
    common(c, True)
    c.add_argument("--mu2", type=_float_list, default=[1e-5, 3e-5, 1e-4, 3e-4, 1e-3])
    c.add_argument("--pairs", type=int, default=20)
    w = sub.add_parser("sweep", help="uniform bound on the negative part of supersolutions")
    common(w, True)
    w.add_argument("--n-lambda", type=int, default=9)
    e = sub.add_parser("eigen", help="principal eigenpair with weight c")
    common(e, True)
    b = sub.add_parser("bifurcate", help="continuation of the solution branch in lam")
    common(b, True)
    b.add_argument("--ds", type=float, default=1e-2)
    b.add_argument("--sup-guard", type=float, default=1e5)
    b.add_argument("--probe", type=_float_list, default=[])
    r = sub.add_parser("report", help="summarise the JSON reports in --out")
    common(r, False)
    return p


def _config(args) -> SolverConfig:
    if not args.tol > 0:
        raise BadInput("--tol must be positive")
    if args.max_iter < 1:
        raise BadInput("--max-iter must be >= 1")
    if not 0 < args.theta <= 1:
        raise BadInput("--theta must lie in (0, 1]")
    return SolverConfig(tol=args.tol, max_iter=args.max_iter, theta=args.theta)


def _spec(args, refine: int = 0):
    try:
        return load_spec(args.spec, refine)
    except SpecError as err:
        raise BadInput(f"spec error at '{err.key}': {err}") from None


def _meta(args, cfg: SolverConfig | None) -> dict:
    out = {"harmlab_version": __version__, "command": args.command, "seed": args.seed, "protocol": args.protocol}
    if getattr(args, "spec", None):
        out["spec"] = os.path.basename(args.spec)
    if cfg is not None:
        out["solver"] = {"tol": cfg.tol, "max_iter": cfg.max_iter, "theta": cfg.theta}
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args, cfg) -> int:
    levels, errors, code = [], [], EXIT_OK
    multi = len(args.refine) > 1
    for r in args.refine:
        loaded = _spec(args, r)
        spec = loaded.spec
        rep = newton_solve(spec, None, cfg) if args.method == "newton" else picard_solve(spec, cfg)
        rec = {"refine": r, "counts": list(spec.grid.counts), "h": spec.grid.h, **rep.as_dict()}
        exact = loaded.exact_field()
        if exact is not None:
            rec["error_sup"] = sup_norm(rep.solution - exact)
            errors.append((spec.grid.h, rec["error_sup"]))
        if not rep.converged:
            code = EXIT_NONCONVERGED
        name = f"solution_r{r}.csv" if multi else "solution.csv"
        _write(args.out, name, field_to_csv(rep.solution))
        rec["csv"] = name
        levels.append(rec)
    orders = [math.log(e0 / e1) / math.log(h0 / h1) for (h0, e0), (h1, e1) in zip(errors, errors[1:]) if e0 > 0 and e1 > 0]
    report = {"meta": _meta(args, cfg), "method": args.method, "levels": levels, "observed_orders": orders, "passed": code == EXIT_OK}
    _write_json(args.out, "solve.json", report)
    return code


def cmd_transform_check(args, cfg) -> int:
    for k in args.k:
        if k != int(k) or k < 1 or int(k) % 2 == 0:
            raise BadInput(f"--k entries must be odd natural numbers, got {k}")
    if any(not m > 0 for m in args.m):
        raise BadInput("--m entries must be positive")
    rep = transform_check(tuple(args.m), tuple(int(k) for k in args.k))
    rep["meta"] = _meta(args, None)
    _write_json(args.out, "transform_check.json", rep)
    return EXIT_OK if rep["passed"] else EXIT_VIOLATION


def cmd_abp(args, cfg) -> int:
    spec = _spec(args).spec
    rep = abp_experiment(spec.grid, spec.pucci, float(np.max(spec.b.values)), args.instances, args.seed, spec.p, cfg)
    rep["meta"] = _meta(args, cfg)
    _write_json(args.out, "abp.json", rep)
    if not rep["checks"]["all_solved"]:
        return EXIT_NONCONVERGED
    return EXIT_OK if rep["passed"] else EXIT_VIOLATION


def cmd_compare(args, cfg) -> int:
    spec = _spec(args).spec
    if any(not m > 0 for m in args.mu2):
        raise BadInput("--mu2 entries must be positive")
    rep = comparison_experiment(spec, args.mu2, args.pairs, args.seed, cfg)
    rep["meta"] = _meta(args, cfg)
    _write_json(args.out, "compare.json", rep)
    return EXIT_OK if rep["passed"] else EXIT_VIOLATION


def cmd_sweep(args, cfg) -> int:
    spec = _spec(args).spec
    L2 = 4.0 if args.lambda_max is None else args.lambda_max
    if not L2 > 0:
        raise BadInput("--lambda-max must be positive")
    rep = bound_sweep_experiment(spec, L2, args.n_lambda, config=cfg)
    rep["meta"] = _meta(args, cfg)
    _write_json(args.out, "sweep.json", rep)
    return EXIT_OK if rep["passed"] else EXIT_VIOLATION


def cmd_eigen(args, cfg) -> int:
    spec = _spec(args).spec
    try:
        pair = principal_eigenpair(spec.grid, spec.c)
    except EigenError as err:
        raise BadInput(str(err)) from None
    _write(args.out, "phi1.csv", field_to_csv(pair.phi1))
    _write_json(args.out, "eigen.json", {"meta": _meta(args, None), **pair.as_dict(), "csv": "phi1.csv", "passed": True})
    return EXIT_OK


def cmd_bifurcate(args, cfg) -> int:
    spec = _spec(args).spec
    lam_max = math.inf if args.lambda_max is None else args.lambda_max
    try:
        rep, br = bifurcation_experiment(spec, args.ds, lam_max, args.sup_guard, cfg, args.probe)
    except (SolverError, StepUnderflow) as err:
        _write_json(args.out, "bifurcate.json", {"meta": _meta(args, cfg), "error": str(err), "passed": False})
        return EXIT_NONCONVERGED
    rep["meta"] = _meta(args, cfg)
    _write(args.out, "branch.csv", br.to_csv())
    _write_json(args.out, "bifurcate.json", rep)
    return EXIT_OK if rep["passed"] else EXIT_VIOLATION


def cmd_report(args, cfg) -> int:
    files = sorted(f for f in glob.glob(os.path.join(args.out, "*.json")) if os.path.basename(f) != "summary.json")
    if not files:
        raise BadInput(f"no JSON reports in {args.out}")
    rows = {}
    for f in files:
        with open(f) as fh:
            doc = json.load(fh)
        rows[os.path.basename(f)] = {"passed": doc.get("passed"), "checks": doc.get("checks", {})}
    ok = all(r["passed"] is not False for r in rows.values())
    _write_json(args.out, "summary.json", {"reports": rows, "passed": ok})
    for name, r in rows.items():
        print(f"{'PASS' if r['passed'] is not False else 'FAIL'} {name}")
    return EXIT_OK if ok else EXIT_VIOLATION


COMMANDS = {
    "solve": cmd_solve,
    "transform-check": cmd_transform_check,
    "abp": cmd_abp,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "eigen": cmd_eigen,
    "bifurcate": cmd_bifurcate,
    "report": cmd_report,
}


def run(argv=None) -> int:
    """Parse ``argv``, run the subcommand and return its exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv or argv[0] not in SUBCOMMANDS and not argv[0].startswith("-"):
            raise BadInput(f"unknown subcommand {argv[0]!r}; choose from {', '.join(SUBCOMMANDS)}" if argv else "missing subcommand")
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as ex:  # --help / --version
            return int(ex.code or 0)
        if args.command is None:
            raise BadInput("missing subcommand")
        if args.protocol != PROTOCOL_VERSION:
            raise BadInput(f"unknown protocol {args.protocol!r}; supported: {PROTOCOL_VERSION}")
        if getattr(args, "spec", None) and not os.path.isfile(args.spec):
            raise BadInput(f"spec file not found: {args.spec}")
        os.makedirs(args.out, exist_ok=True)
        cfg = _config(args)
        code = COMMANDS[args.command](args, cfg)
    except BadInput as err:
        print(f"harmlab: error: {err}", file=sys.stderr)
        return EXIT_BAD_INPUT
    print(f"harmlab {args.command}: exit {code}")
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))
