"""``nlac run | check | sweep | table``.

Exit codes are a stable contract: 0 pass, 1 verdict failure, 2 invalid
configuration or input, 3 solver failure (partial artifacts written),
4 internal error.
"""
import argparse
import csv
import json
import os
import sys
import traceback

import numpy as np

from .. import io
from ..assembly.load import CompatibilityError, LoadFunctional
from ..cases import get_case
from ..femspace import lp_error, mean_value
from ..harness import (CSV_COLUMNS, PathSpec, delta_from_sigma, family_delta0, build_model,
                       gamma_pointwise_check, inequality_suite, run_path, solve_model)
from ..solver import SolverFailure, iteration_log_text
from .config import ConfigError, check_delta, load_config, path_deltas
from .expr import EvaluationError, parse_expression

EXIT_PASS, EXIT_VERDICT, EXIT_CONFIG, EXIT_SOLVE, EXIT_INTERNAL = 0, 1, 2, 3, 4


class _SolveError(Exception):
    """Solver failure after partial artifacts have been written."""


def _say(msg, stream=None):
    print(msg, file=stream or sys.stdout, flush=True)


# -- load and delta resolution -------------------------------------------------

def _load(cfg):
    lc = cfg.load
    if lc.case is not None:
        return get_case(lc.case).load()
    f0 = parse_expression(lc.f0) if lc.f0 else None
    g = parse_expression(lc.g) if lc.g else None
    f1 = None
    if lc.f1:
        comps = [parse_expression(e) for e in lc.f1]
        f1 = lambda X: np.stack([c(X) for c in comps], axis=1)
    return LoadFunctional(f0=f0, f1=f1, g=g)


def _delta(cfg):
    pr = cfg.problem
    cap = family_delta0(pr.family, pr.domain_obj)
    if pr.sigma is not None:
        delta = delta_from_sigma(pr.sigma, cap) if np.isfinite(cap) else 1.0 / pr.sigma
        check_delta(pr.family, delta, cap)
        return delta
    return pr.delta


def _path_spec(cfg, entry):
    pr = cfg.problem
    cap = family_delta0(pr.family, pr.domain_obj)
    try:
        return PathSpec(entry.path, pr.family, pr.p, path_deltas(entry, cap), entry.ns, cfg.load.case,
                        entry.reference, pr.beta, pr.d, entry.fine_n, entry.eval_factor, cfg.solver,
                        entry.warm_start, entry.final_tol, entry.min_order, entry.require_decreasing,
                        entry.record_timing)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# -- experiments ---------------------------------------------------------------

def _manifest(cfg, **extra):
    return {"config": cfg.to_dict(), **extra}


def _run_solve(cfg, out):
    pr, dc = cfg.problem, cfg.discretization
    try:
        model, kcfg, used = build_model(pr.family, pr.domain_obj, pr.p, dc.n, _delta(cfg), pr.beta,
                                        _load(cfg), dc.degree, dc.continuity)
    except CompatibilityError as exc:
        raise ConfigError(str(exc)) from None
    try:
        res = solve_model(model, cfg.solver)
    except SolverFailure as exc:
        partial = exc.result
        if partial is not None:
            io.write_text(os.path.join(out, "iterations.log"), iteration_log_text(partial))
            io.write_vector(os.path.join(out, "solution_partial.txt"), partial.u.coeffs)
        io.write_json(os.path.join(out, "manifest.json"),
                      _manifest(cfg, constants=model.constants(), failure=str(exc), passed=False))
        raise _SolveError(str(exc)) from None
    u = res.u
    verdicts = {"converged": {"pass": bool(res.converged), "grad_norm": res.grad_norm}}
    space = u.space
    if space.constraint == "zero-mean":
        m = float(mean_value(u))
        verdicts["zero_mean"] = {"pass": abs(m) <= 1e-12, "mean": m}
    elif space.pinned.any():
        worst = float(np.max(np.abs(u.coeffs[space.pinned])))
        verdicts["pinned_zero"] = {"pass": worst == 0.0, "max_abs": worst}
    results = {"energy": res.energy, "iterations": res.iterations, "delta": used,
               "dofs": space.n_dofs}
    if cfg.load.case is not None:
        err = float(lp_error(u, get_case(cfg.load.case).exact, pr.p))
        results["err_lp"] = err
        if cfg.experiment.final_tol is not None:
            verdicts["final_error"] = {"pass": err <= cfg.experiment.final_tol, "err_lp": err,
                                       "tol": cfg.experiment.final_tol}
    passed = all(v["pass"] for v in verdicts.values())
    io.write_vector(os.path.join(out, "solution.txt"), u.coeffs)
    io.write_text(os.path.join(out, "iterations.log"), iteration_log_text(res))
    io.write_json(os.path.join(out, "manifest.json"),
                  _manifest(cfg, constants=model.constants(), results=results, verdicts=verdicts,
                            passed=passed))
    _say(f"solve {pr.family} p={pr.p!r} n={dc.n} energy={res.energy!r} iters={res.iterations}")
    for k, v in verdicts.items():
        _say(f"  {k}: {'PASS' if v['pass'] else 'FAIL'}")
    return passed


def _run_paths(cfg, out, entries):
    specs = [_path_spec(cfg, e) for e in entries]
    summary, failed = [], None
    for i, spec in enumerate(specs):
        stem = f"path{i}_{spec.path}" if len(specs) > 1 else spec.path
        report = run_path(spec)
        io.write_text(os.path.join(out, f"{stem}.csv"), report.csv_text())
        io.write_json(os.path.join(out, f"{stem}.json"), report.to_dict())
        _say(f"{spec.path} ({len(report.records)} levels) -> {stem}.csv")
        _say(report.csv_text().rstrip())
        for k, v in report.verdicts.items():
            _say(f"  {k}: {'PASS' if v['pass'] else 'FAIL'}")
        summary.append({"stem": stem, "path": spec.path, "passed": report.passed,
                        "failure": report.failure, "verdicts": report.verdicts})
        if report.failure and failed is None:
            failed = report.failure
    passed = failed is None and all(s["passed"] for s in summary)
    io.write_json(os.path.join(out, "manifest.json"),
                  _manifest(cfg, paths=summary, failure=failed, passed=passed))
    if failed:
        raise _SolveError(failed)
    return passed


def _run_gamma(cfg, out):
    pr, ex = cfg.problem, cfg.experiment
    v = parse_expression(ex.function)
    rep = gamma_pointwise_check(v, ex.deltas, pr.family, pr.p, cfg.discretization.n, pr.d, pr.beta)
    io.write_json(os.path.join(out, "manifest.json"), _manifest(cfg, gamma=rep, passed=rep["pass"]))
    _say("delta,gap")
    for dl, g in zip(rep["deltas"], rep["gaps"]):
        _say(f"{dl!r},{g!r}")
    _say(f"  trend: {'PASS' if rep['pass'] else 'FAIL'}")
    return rep["pass"]


def _run_inequality(cfg, out):
    pr, ex = cfg.problem, cfg.experiment
    kw = {} if ex.fractions is None else {"fractions": ex.fractions}
    rep = inequality_suite(pr.p, pr.beta, samples=ex.samples, n=cfg.discretization.n, seed=cfg.seed, **kw)
    io.write_json(os.path.join(out, "manifest.json"), _manifest(cfg, inequalities=rep, passed=rep["pass"]))
    for k, v in rep.items():
        if isinstance(v, dict):
            _say(f"  {k}: {'PASS' if v['pass'] else 'FAIL'}")
    return rep["pass"]


def _execute(cfg, out, sweep=False):
    kind = cfg.experiment.kind
    if sweep and kind not in ("sweep", "path"):
        raise ConfigError(f"sweep needs experiment.kind 'sweep' or 'path', got {kind!r}")
    if kind == "solve":
        return _run_solve(cfg, out)
    if kind == "path":
        return _run_paths(cfg, out, [cfg.experiment])
    if kind == "sweep":
        return _run_paths(cfg, out, list(cfg.experiment.paths))
    if kind == "gamma":
        return _run_gamma(cfg, out)
    return _run_inequality(cfg, out)


# -- subcommands ---------------------------------------------------------------

def cmd_run(args, sweep=False):
    cfg = load_config(args.config)
    out = args.output or cfg.output
    return EXIT_PASS if _execute(cfg, out, sweep) else EXIT_VERDICT


def cmd_check(args):
    from ..checks import SUITES, run_suite
    if args.suite != "all" and args.suite not in SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from {sorted(SUITES) + ['all']}")
    results = run_suite(args.suite)
    for r in results:
        _say(f"{'PASS' if r.passed else 'FAIL'} {r.suite}.{r.name}  {r.detail}")
    ok = all(r.passed for r in results)
    _say(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_PASS if ok else EXIT_VERDICT


def read_table(path):
    """Header and rows from a CSV table or a JSON path report."""
    if not os.path.isfile(path):
        raise ConfigError(f"report not found: {path}")
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc.msg}") from None
        return list(CSV_COLUMNS), _rows_from_json(data)
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        return list(CSV_COLUMNS), []
    return rows[0], rows[1:]


def _rows_from_json(data):
    from ..harness import _fmt_order
    recs = data.get("records", [])
    olp, oen = data.get("order_lp", []), data.get("order_energy", [])
    timing = data.get("spec", {}).get("record_timing", False)
    rows = []
    for i, r in enumerate(recs):
        a = olp[i - 1] if 0 < i <= len(olp) else None
        b = oen[i - 1] if 0 < i <= len(oen) else None
        rows.append([str(r["level"]), repr(r["delta"]), repr(r["h"]), str(r["dofs"]), repr(r["err_lp"]),
                     repr(r["err_energy"]), _fmt_order(a), _fmt_order(b), str(r["iters"]),
                     repr(r["seconds"]) if timing else "-"])
    return rows


def format_table(header, rows):
    cells = [header] + [_pretty(r) for r in rows]
    widths = [max(len(c[j]) for c in cells) for j in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    if rows:
        lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _pretty(row):
    out = []
    for c in row:
        try:
            v = float(c)
        except ValueError:
            out.append(c)
            continue
        out.append(c if c.lstrip("-").isdigit() else f"{v:.4e}")
    return out


def cmd_table(args):
    header, rows = read_table(args.report)
    _say(format_table(header, rows))
    return EXIT_PASS


def build_parser():
    ap = argparse.ArgumentParser(prog="nlac", description="Nonlocal variational solver and AC harness.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep"):
        p = sub.add_parser(name, help=f"{name} an experiment from a JSON config")
        p.add_argument("config")
        p.add_argument("-o", "--output", help="output directory (overrides the config)")
    p = sub.add_parser("check", help="run a module invariant suite")
    p.add_argument("suite")
    p = sub.add_parser("table", help="print a convergence table from a CSV or JSON report")
    p.add_argument("report")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_run(args, sweep=True)
        if args.command == "check":
            return cmd_check(args)
        return cmd_table(args)
    except ConfigError as exc:
        _say(f"nlac: config error: {exc}", sys.stderr)
        return EXIT_CONFIG
    except EvaluationError as exc:
        _say(f"nlac: load expression could not be evaluated: {exc}", sys.stderr)
        return EXIT_CONFIG
    except _SolveError as exc:
        _say(f"nlac: solver failure: {exc}", sys.stderr)
        return EXIT_SOLVE
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
