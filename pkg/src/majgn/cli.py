"""Command-line front end: ``majgn radius | run | certify | matrix``.

Every command reads an optional JSON config (``--config``); flags override
the fields they name. See the README for the config schema.

Exit codes: 0 success, 2 invalid config, 3 solver error, 4 bound violated.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundViolated, InsufficientData, MajgnError, SolverError
from .gn_solver import (BStrategy, ResidualPolicy, SolverConfig, fmt, solve, trace_to_csv,
                        trace_to_json)
from .majorant import SolverRates, majorant_from_dict, radii
from .problems import catalog, problem_from_dict, start_point
from .verification import (calibrated_run, certify_trace, empirical_order, nominal_rates,
                           ratio_window)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_BOUND = 0, 2, 3, 4
SEED_ENV = "MAJGN_SEED"

DEFAULTS = {
    "problem": None,
    "majorant": None,
    "rates": {"omega1": 1.0, "omega2": 0.0, "theta": 0.0},
    "kappa": None,
    "b_strategy": {"kind": "exact"},
    "residual": {"mode": "exact"},
    "x0": None,
    "seed": 0,
    "max_iter": 100,
    "grad_tol": 1e-12,
    "step_tol": 1e-15,
    "out": "majgn-out",
    "inject_fault": None,
    "matrix": {},
}

MATRIX_DEFAULT = {
    "problems": None,
    "strategies": [{"kind": "exact"}, {"kind": "frozen"}, {"kind": "scaled", "c": 1.25}],
    "residuals": [{"mode": "exact", "theta": 0.0}, {"mode": "synthetic", "theta": 0.0},
                  {"mode": "synthetic", "theta": 0.1}, {"mode": "synthetic", "theta": 0.3}],
    "fractions": [0.5, 0.9],
}


class ConfigError(MajgnError):
    pass


def _deep_update(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--problem", type=_json_arg,
                        help="catalog name or inline JSON problem definition")
    g = common.add_argument_group("majorant")
    g.add_argument("--family", choices=["holder", "lipschitz", "smale", "glip"])
    g.add_argument("--K", type=float)
    g.add_argument("--p", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--L-terms", dest="L_terms", type=json.loads,
                   help='power-sum L(u) as JSON [[coef, exponent], ...]')
    g.add_argument("--R", type=float, help="majorant domain bound")
    g = common.add_argument_group("rates")
    g.add_argument("--omega1", type=float)
    g.add_argument("--omega2", type=float)
    g.add_argument("--theta", type=float)
    g.add_argument("--kappa", type=float)
    g = common.add_argument_group("solver")
    g.add_argument("--b-strategy", dest="b_strategy", choices=["exact", "frozen", "scaled"])
    g.add_argument("--scale", type=float, help="c for the scaled strategy")
    g.add_argument("--residual", choices=["exact", "synthetic", "truncated"])
    g.add_argument("--magnitude", type=float)
    g.add_argument("--preconditioner", choices=["identity", "jacobi"])
    g.add_argument("--x0", type=_floats, help="comma-separated start vector")
    g.add_argument("--x0-fraction", dest="x0_fraction", type=float,
                   help="start at this fraction of r along a seeded direction")
    g.add_argument("--seed", type=int)
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--grad-tol", dest="grad_tol", type=float)
    g.add_argument("--step-tol", dest="step_tol", type=float)
    g.add_argument("--out", help="output directory")
    g.add_argument("--json", action="store_true", help="print JSON instead of a table")

    ap = argparse.ArgumentParser(prog="majgn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("radius", parents=[common], help="convergence radii")
    sub.add_parser("run", parents=[common], help="solve and write the trace")
    c = sub.add_parser("certify", parents=[common], help="solve and check the bounds")
    c.add_argument("--inject-fault", dest="inject_fault", type=float,
                   help="multiply errors k >= 1 by this factor before checking")
    m = sub.add_parser("matrix", parents=[common], help="certify a grid of configurations")
    m.add_argument("--jobs", type=int, default=1)
    return ap


def merge_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                _deep_update(cfg, json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    if os.environ.get(SEED_ENV):
        try:
            cfg["seed"] = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    a = vars(args)
    if a.get("problem") is not None:
        cfg["problem"] = a["problem"]
    maj = {k: a[k] for k in ("family", "K", "p", "gamma", "R") if a.get(k) is not None}
    if a.get("L_terms") is not None:
        maj["L"] = {"terms": a["L_terms"]}
    if maj:
        cfg["majorant"] = _deep_update(dict(cfg["majorant"] or {}), maj)
    for k in ("omega1", "omega2", "theta"):
        if a.get(k) is not None:
            cfg["rates"][k] = a[k]
    if a.get("b_strategy"):
        cfg["b_strategy"] = {"kind": a["b_strategy"]}
    if a.get("scale") is not None:
        cfg["b_strategy"]["c"] = a["scale"]
    if a.get("residual"):
        cfg["residual"]["mode"] = a["residual"]
    for k in ("magnitude", "preconditioner"):
        if a.get(k) is not None:
            cfg["residual"][k] = a[k]
    if a.get("x0") is not None:
        cfg["x0"] = a["x0"]
    if a.get("x0_fraction") is not None:
        cfg["x0"] = {"fraction": a["x0_fraction"]}
    for k in ("kappa", "seed", "max_iter", "grad_tol", "step_tol", "out", "inject_fault"):
        if a.get(k) is not None:
            cfg[k] = a[k]
    return cfg


# -- config resolution --------------------------------------------------------

@dataclass
class Resolved:
    problem: object
    majorant: object
    rates: SolverRates
    kappa: float
    strategy: BStrategy
    policy: ResidualPolicy
    cfg: dict


def _rates(cfg) -> SolverRates:
    r = cfg["rates"]
    return SolverRates(float(r.get("omega1", 1.0)), float(r.get("omega2", 0.0)),
                       float(r.get("theta", 0.0)))


def _strategy(d: dict) -> BStrategy:
    kind = d.get("kind", "exact")
    if kind == "scaled":
        return BStrategy.scaled(d.get("c", 1.25))
    if kind == "frozen":
        return BStrategy.frozen(d.get("at"))
    if kind == "exact":
        return BStrategy.exact()
    raise ConfigError(f"unknown B strategy {kind!r}")


def _policy(d: dict, seed: int) -> ResidualPolicy:
    return ResidualPolicy(mode=d.get("mode", "exact"), magnitude=float(d.get("magnitude", 1.0)),
                          seed=int(d.get("seed", seed)),
                          preconditioner=d.get("preconditioner", "identity"),
                          theta_request=d.get("theta_request"),
                          inner_max_iter=d.get("inner_max_iter"))


def resolve(cfg: dict, need_problem: bool = True) -> Resolved:
    problem = None
    if cfg["problem"] is not None:
        problem = problem_from_dict(cfg["problem"])
    elif need_problem:
        raise ConfigError("no problem given (use --problem or the 'problem' field)")
    if cfg["majorant"]:
        f = majorant_from_dict(cfg["majorant"])
    elif problem is not None:
        f = problem.majorant
    else:
        raise ConfigError("no majorant given (use --family or a problem)")
    if cfg["kappa"] is not None:
        kappa = float(cfg["kappa"])
    else:
        kappa = problem.instance.kappa if problem is not None else math.inf
    if not kappa > 0:
        raise ConfigError("kappa must be positive")
    return Resolved(problem, f, _rates(cfg), kappa, _strategy(cfg["b_strategy"]),
                    _policy(cfg["residual"], int(cfg["seed"])), cfg)


def _solver_kw(cfg):
    return {"max_iter": int(cfg["max_iter"]), "grad_tol": float(cfg["grad_tol"]),
            "step_tol": float(cfg["step_tol"])}


def execute(res: Resolved):
    """Solve per the config; returns ``(trace, rates, radius_report_or_None, x0)``.

    A fractional ``x0`` with a strategy whose omegas are not known in
    advance goes through rate calibration.
    """
    cfg = res.cfg
    x0 = cfg["x0"]
    if x0 is None:
        x0 = {"fraction": 0.5}
    if isinstance(x0, dict):
        frac = float(x0["fraction"])
        if not 0.0 <= frac < 1.0:
            raise ConfigError("x0 fraction must lie in [0, 1)")
        known = nominal_rates(res.strategy, res.rates.theta)
        if known is None and x0.get("calibrate", True):
            run = calibrated_run(res.problem, res.majorant, res.strategy, res.policy,
                                 res.rates.theta, frac, seed=int(cfg["seed"]),
                                 **_solver_kw(cfg))
            return run.trace, run.rates, run.radius, run.x0
        rr = radii(res.majorant, res.rates, res.kappa)
        x = start_point(res.problem, frac * rr.r, int(cfg["seed"]))
    else:
        x = np.atleast_1d(np.asarray(x0, dtype=float))
        rr = None
        if x.size != res.problem.instance.n:
            raise ConfigError(f"x0 has {x.size} entries, problem needs {res.problem.instance.n}")
    trace = solve(res.problem.instance, x, SolverConfig(res.rates, res.strategy, res.policy,
                                                       **_solver_kw(cfg)))
    return trace, res.rates, rr, x


# -- output ------------------------------------------------------------------

def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (float, np.floating)):
        return float(o) if math.isfinite(o) else str(float(o))
    if isinstance(o, np.integer):
        return int(o)
    return o


def _dump(path: Path, obj):
    path.write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _write_trace(out: Path, trace):
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(trace_to_csv(trace), encoding="utf-8")
    (out / "trace.json").write_text(trace_to_json(trace) + "\n", encoding="utf-8")


def _summary(trace, problem):
    xs = float(np.linalg.norm(problem.instance.x_star)) if problem.instance.x_star is not None else 0.0
    errs = trace.errors()
    s = {"problem": problem.name, "iterations": trace.iterations, "reason": trace.reason,
         "final_error": trace.records[-1].error, "compliant": trace.compliant}
    ratios = ratio_window(errs, xs) if errs.size and np.all(np.isfinite(errs)) else np.array([])
    s["observed_ratio"] = float(ratios.max()) if ratios.size else None
    try:
        s["order"] = empirical_order(errs, xs)
    except InsufficientData:
        s["order"] = None
    return s


def _print_kv(items):
    width = max(len(k) for k, _ in items)
    for k, v in items:
        print(f"{k:<{width}}  {v}")


def cmd_radius(res: Resolved, as_json: bool):
    rr = radii(res.majorant, res.rates, res.kappa)
    if as_json:
        print(json.dumps(_jsonable(rr.to_dict()), sort_keys=True))
    else:
        _print_kv([("nu", f"{fmt(rr.nu)}  ({rr.methods['nu']})"),
                   ("rho", f"{fmt(rr.rho)}  ({rr.methods['rho']})"),
                   ("kappa", fmt(rr.kappa)),
                   ("r", fmt(rr.r))])
    return EXIT_OK


def cmd_run(res: Resolved, as_json: bool):
    trace, rates, _, _ = execute(res)
    out = Path(res.cfg["out"])
    _write_trace(out, trace)
    s = _summary(trace, res.problem)
    s["rates"] = rates.to_dict()
    _dump(out / "summary.json", s)
    if as_json:
        print(json.dumps(_jsonable(s), sort_keys=True))
        return EXIT_OK
    items = [("problem", s["problem"]), ("iterations", s["iterations"]),
             ("final_error", fmt(s["final_error"])), ("reason", s["reason"])]
    if trace.iterations == 0:
        items.append(("note", "converged immediately: x0 satisfies the stopping rule"))
    items += [("observed_ratio", fmt(s["observed_ratio"])), ("order", fmt(s["order"])),
              ("compliant", fmt(s["compliant"]))]
    _print_kv(items)
    return EXIT_OK


def cmd_certify(res: Resolved, as_json: bool):
    if res.problem.instance.x_star is None:
        raise ConfigError("certification needs a problem with known x*")
    trace, rates, rr, _ = execute(res)
    out = Path(res.cfg["out"])
    _write_trace(out, trace)
    errors = None
    factor = res.cfg.get("inject_fault")
    if factor is not None:
        errors = trace.errors().copy()
        errors[1:] *= float(factor)
    rep = certify_trace(trace, res.problem, res.majorant, rates, res.problem.h3_p,
                        strict=False, errors=errors, radius=rr)
    d = rep.to_dict()
    d["rates"] = rates.to_dict()
    d["fault_factor"] = factor
    _dump(out / "report.json", d)
    (out / "bounds.csv").write_text(rep.to_csv(), encoding="utf-8")
    if as_json:
        print(json.dumps(_jsonable({k: v for k, v in d.items() if k != "rows"}), sort_keys=True))
    else:
        _print_kv([("problem", res.problem.name), ("iterations", trace.iterations),
                   ("t0", fmt(rep.t0)), ("r", fmt(rep.r)), ("majorant_bound", fmt(rep.bound_ok)),
                   ("per_step_bound", fmt(rep.step_ok)), ("monotone", fmt(rep.monotone_ok)),
                   ("ratio_limsup", fmt(rep.ratio_limsup)), ("rate_bound", fmt(rep.rate_bound)),
                   ("order", fmt(rep.order)), ("ok", fmt(rep.ok))])
    if not rep.ok:
        k, what, lhs, rhs = rep.first_failure()
        where = "" if k is None else f" at k = {k}"
        print(f"bound violated: {what}{where}: {fmt(lhs)} > {fmt(rhs)}", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK


# -- matrix --------------------------------------------------------------------

MATRIX_COLUMNS = ("problem", "strategy", "residual", "theta", "fraction", "iterations", "t0",
                  "r", "bound_ok", "step_ok", "rate_ok", "monotone_ok", "order", "ok", "error")


def matrix_cases(cfg: dict):
    m = {**MATRIX_DEFAULT, **(cfg.get("matrix") or {})}
    problems = m["problems"] or ([cfg["problem"]] if cfg["problem"] is not None else catalog())
    for prob in problems:
        for strat in m["strategies"]:
            for resid in m["residuals"]:
                for frac in m["fractions"]:
                    case = copy.deepcopy(cfg)
                    case.update(problem=prob, b_strategy=dict(strat),
                                x0={"fraction": frac}, matrix={})
                    case["residual"] = {k: v for k, v in resid.items() if k != "theta"}
                    case["rates"] = dict(cfg["rates"], theta=float(resid.get("theta", 0.0)))
                    yield case


def run_case(case: dict) -> dict:
    row = {"problem": case["problem"] if isinstance(case["problem"], str)
           else json.dumps(case["problem"], sort_keys=True),
           "strategy": case["b_strategy"]["kind"], "residual": case["residual"].get("mode", "exact"),
           "theta": case["rates"]["theta"], "fraction": case["x0"]["fraction"]}
    try:
        res = resolve(case)
        rates = nominal_rates(res.strategy, res.rates.theta) or res.rates
        res.rates = rates
        trace, rates, rr, _ = execute(res)
        rep = certify_trace(trace, res.problem, res.majorant, rates, res.problem.h3_p,
                            strict=False, radius=rr)
        row.update(iterations=trace.iterations, t0=rep.t0, r=rep.r, bound_ok=rep.bound_ok,
                   step_ok=rep.step_ok, rate_ok=rep.rate_ok, monotone_ok=rep.monotone_ok,
                   order=rep.order, ok=rep.ok and trace.compliant, error="")
    except MajgnError as exc:
        row.update(ok=False, error=f"{type(exc).__name__}: {exc}")
    return row


def cmd_matrix(cfg: dict, jobs: int, as_json: bool):
    cases = list(matrix_cases(cfg))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_case, cases))
    else:
        rows = [run_case(c) for c in cases]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MATRIX_COLUMNS)
    for row in rows:
        w.writerow([row.get(c) if isinstance(row.get(c), str) else fmt(row.get(c))
                    for c in MATRIX_COLUMNS])
    (out / "matrix.csv").write_text(buf.getvalue(), encoding="utf-8")
    failed = [r for r in rows if not r["ok"]]
    if as_json:
        print(json.dumps(_jsonable({"cases": len(rows), "failed": len(failed)})))
    else:
        print(f"cases   {len(rows)}")
        print(f"failed  {len(failed)}")
        for r in failed:
            print(f"  {r['problem']} {r['strategy']} {r['residual']} theta={fmt(r['theta'])} "
                  f"fraction={fmt(r['fraction'])} {r.get('error', '')}")
    if any(r.get("error") for r in failed):
        return EXIT_SOLVER
    return EXIT_BOUND if failed else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    as_json = getattr(args, "json", False)
    try:
        cfg = merge_config(args)
        if args.command == "matrix":
            return cmd_matrix(cfg, args.jobs, as_json)
        res = resolve(cfg, need_problem=args.command != "radius")
        if args.command == "radius":
            return cmd_radius(res, as_json)
        if args.command == "run":
            return cmd_run(res, as_json)
        return cmd_certify(res, as_json)
    except SolverError as exc:
        if exc.trace is not None and exc.trace.records:
            try:
                _write_trace(Path(cfg["out"]), exc.trace)
            except OSError:
                pass
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except BoundViolated as exc:
        print(f"bound violated: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (MajgnError, ValueError, KeyError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"invalid config: {msg}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
