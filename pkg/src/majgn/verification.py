"""Check solver traces against the majorant guarantees.

For a start ``x_0`` with ``t_0 = ||x_0 - x*|| < r`` the errors must obey

* ``||x_k - x*|| <= t_k`` (domination by the majorant sequence),
* ``||x_{k+1} - x*|| <= (1+theta) omega1 C ||x_k - x*||^(p+1)
  + (omega1 theta + omega2) ||x_k - x*||`` with
  ``C = |n_f(t_0)| / t_0^(p+1)``, whenever h3 holds for ``p``,
* error ratios eventually at most ``omega1 theta + omega2``.

The limsup is checked on a finite window (the last ``max(3, ceil(k/2))``
usable ratios) with additive tolerance 0.05. When the linear rate is 0 the
window ratios must instead be non-increasing and end below 0.05. "Exact" inequalities get
1e-12 absolute slack for rounding.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolated, InsufficientData, InvalidParameter, OutOfRadius
from .gn_solver import (BStrategy, ProblemInstance, ResidualPolicy, SolverConfig, Trace, fmt,
                        solve)
from .majorant import (MajorantFunction, RadiusReport, SolverRates, check_h3,
                       majorant_sequence, radii, radius_nu)
from .operator_core import pinv_apply, pinv_norm

BOUND_SLACK = 1e-12
POINTWISE_SLACK = 1e-9
RATE_TOL = 0.05
EPS = np.finfo(float).eps
PRECISION_FACTOR = 1e3


def _instance(problem) -> ProblemInstance:
    return getattr(problem, "instance", problem)


def linearization_error(problem, x, y) -> float:
    """``||F(y) - F(x) - F'(x)(y - x)||``."""
    inst = _instance(problem)
    x = np.asarray(x, float).reshape(inst.n)
    y = np.asarray(y, float).reshape(inst.n)
    e = inst.residual(y) - inst.residual(x) - inst.jac(x) @ (y - x)
    return float(np.linalg.norm(e))


@dataclass(frozen=True)
class Inequality:
    name: str
    lhs: float
    rhs: float
    slack: float = POINTWISE_SLACK

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + self.slack

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "ok": self.ok}


def check_pointwise_bounds(problem, f: MajorantFunction, x, slack: float = POINTWISE_SLACK,
                       nu: float | None = None) -> list[Inequality]:
    """Evaluate the pointwise bounds linking ``F`` to its majorant at ``x``.

    * ``||F'(x)^+|| <= beta / |f'(t)|``
    * ``beta ||E_F(x, x*)|| <= e_f(t, 0)``
    * ``||F'(x)^+ F(x)|| <= |n_f(t)| + t``

    with ``t = ||x - x*||``, which must be below ``min(nu, kappa)``.
    """
    inst = _instance(problem)
    x = np.asarray(x, float).reshape(inst.n)
    t = float(np.linalg.norm(x - inst.x_star))
    nu = radius_nu(f) if nu is None else nu
    if not t < min(nu, inst.kappa):
        raise OutOfRadius(f"||x - x*|| = {t:.9g} >= min(nu, kappa) = {min(nu, inst.kappa):.9g}")
    beta = inst.beta
    J = inst.jac(x)
    dft = float(f.deriv(t))
    return [
        Inequality("pinv_norm", pinv_norm(J), beta / abs(dft), slack),
        Inequality("linearization", beta * linearization_error(inst, x, inst.x_star),
                   float(f.linearization_error(t, 0.0)), slack),
        Inequality("gn_step", float(np.linalg.norm(pinv_apply(J, inst.residual(x)))),
                   float(f.newton_gap(t)) + t, slack),
    ]


# -- rates ------------------------------------------------------------------

def _usable_pairs(errors, x_star_norm=0.0):
    """Consecutive ``(e_k, e_{k+1})`` whose second entry is above rounding noise.

    ``e_{k+1}`` carries absolute error about ``eps (||x*|| + e_k)``.
    """
    e = np.asarray(errors, dtype=float)
    pairs = []
    for a, b in zip(e[:-1], e[1:]):
        if not (a > 0 and b > 0 and np.isfinite(a) and np.isfinite(b)):
            break
        if b <= PRECISION_FACTOR * EPS * (x_star_norm + a):
            break
        pairs.append((a, b))
    return pairs


def _window(n: int) -> int:
    return min(n, max(3, math.ceil(n / 2)))


def _errors_of(trace_or_errors):
    if isinstance(trace_or_errors, Trace):
        return trace_or_errors.errors()
    return np.asarray(trace_or_errors, dtype=float)


def empirical_order(trace_or_errors, x_star_norm: float = 0.0) -> float:
    """Least-squares slope of ``log e_{k+1}`` against ``log e_k``.

    Uses the last ``max(3, ceil(n/2))`` of the ``n`` usable consecutive
    pairs; needs at least four strictly decreasing positive errors.
    """
    pairs = _usable_pairs(_errors_of(trace_or_errors), x_star_norm)
    if len(pairs) < 3 or any(b >= a for a, b in pairs):
        raise InsufficientData(f"need 4 strictly decreasing errors, have {len(pairs) + 1} usable")
    w = np.log(np.array(pairs[-_window(len(pairs)):]))
    return float(np.polyfit(w[:, 0], w[:, 1], 1)[0])


def ratio_window(trace_or_errors, x_star_norm: float = 0.0) -> np.ndarray:
    """Error ratios ``e_{k+1}/e_k`` over the final window."""
    pairs = _usable_pairs(_errors_of(trace_or_errors), x_star_norm)
    if not pairs:
        return np.array([])
    w = np.array(pairs[-_window(len(pairs)):])
    return w[:, 1] / w[:, 0]


# -- certification ------------------------------------------------------------

@dataclass
class BoundReport:
    """Per-iteration comparison of a trace with the majorant sequence."""

    rows: list
    t0: float
    r: float
    h3: bool | None
    p: float | None
    bound_ok: bool
    step_ok: bool | None
    monotone_ok: bool
    rate_bound: float
    ratio_limsup: float | None
    rate_ok: bool | None
    order: float | None
    compliant: bool
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.bound_ok and self.step_ok is not False and self.monotone_ok
                and self.rate_ok is not False)

    def first_failure(self):
        for row in self.rows:
            if not row["bound_ok"]:
                return row["k"], "majorant domination", row["error"], row["t_k"]
            if row.get("step_ok") is False:
                return row["k"], "per-step bound", row["next_error"], row["step_rhs"]
        if not self.monotone_ok:
            return None, "monotone decrease", None, None
        if self.rate_ok is False:
            return None, "ratio limsup", self.ratio_limsup, self.rate_bound + RATE_TOL
        return None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "t0", "r", "h3", "p", "bound_ok", "step_ok", "monotone_ok", "rate_bound",
            "ratio_limsup", "rate_ok", "order", "compliant", "notes")}
        d["ok"] = self.ok
        d["rows"] = self.rows
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True,
                          default=lambda o: None if o is None else float(o))

    CSV_COLUMNS = ("k", "error", "t_k", "slack", "bound_ok", "step_rhs", "step_ok")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for row in self.rows:
            w.writerow([fmt(row.get(c)) for c in self.CSV_COLUMNS])
        return buf.getvalue()


def certify_trace(trace: Trace, problem, f: MajorantFunction, rates: SolverRates,
                  p: float | None = None, strict: bool = True,
                  errors=None, radius: RadiusReport | None = None) -> BoundReport:
    """Confront ``trace`` with the majorant bounds.

    ``p`` enables the per-step bound when h3 holds for it. ``errors``
    overrides the trace's error column (used for fault injection);
    ``radius`` reuses radii already computed for ``(f, rates)``.
    Raises :class:`BoundViolated` on failure when ``strict``.
    """
    inst = _instance(problem)
    if inst.x_star is None:
        raise InvalidParameter("certification needs a known zero")
    e = np.asarray(trace.errors() if errors is None else errors, dtype=float)
    rr = radius or radii(f, rates, inst.kappa)
    t0 = float(e[0])
    xs_norm = float(np.linalg.norm(inst.x_star))
    notes = []
    if t0 == 0.0:
        ts = [0.0] * len(e)
        notes.append("trace starts at x*: vacuous")
    else:
        if not t0 < rr.r:
            raise OutOfRadius(f"t0 = {t0:.9g} >= r = {rr.r:.9g}")
        ts = majorant_sequence(f, rates, t0, len(e) - 1, rho=rr.rho)
    h3 = None
    C0 = None
    if p is not None and t0 > 0:
        h3 = check_h3(f, p, nu=rr.nu)
        if h3:
            C0 = float(f.newton_gap(t0)) / t0 ** (p + 1)
    smale_c = None
    if f.family == "smale" and t0 > 0:
        g = f.params.gamma
        smale_c = g / (2.0 * (1.0 - g * t0) ** 2 - 1.0)
        notes.append("smale: factor-free bound without the (1+theta)*omega1 factor reported, not asserted")
    c = rates.linear_rate
    rows = []
    for k, (ek, tk) in enumerate(zip(e, ts)):
        row = {"k": k, "error": float(ek), "t_k": float(tk), "slack": float(tk - ek)}
        row["bound_ok"] = bool(row["slack"] >= -BOUND_SLACK)
        if k + 1 < len(e):
            row["next_error"] = float(e[k + 1])
            if C0 is not None:
                rhs = rates.gain * C0 * ek ** (p + 1) + c * ek
                row["step_rhs"] = float(rhs)
                row["step_ok"] = bool(e[k + 1] <= rhs + BOUND_SLACK)
            if smale_c is not None:
                rhs = smale_c * ek ** 2 + c * ek
                row["smale_factor_free_rhs"] = float(rhs)
                row["smale_factor_free_ok"] = bool(e[k + 1] <= rhs + BOUND_SLACK)
        rows.append(row)
    bound_ok = all(r["bound_ok"] for r in rows)
    step_ok = None if C0 is None else all(r.get("step_ok", True) for r in rows)
    floor = PRECISION_FACTOR * EPS * (xs_norm + e[:-1])
    live = e[:-1] > floor
    monotone_ok = bool(np.all(e[1:][live] < e[:-1][live]))
    ratios = ratio_window(e, xs_norm)
    if not ratios.size:
        limsup, rate_ok = None, None
    elif c > 0:
        limsup = float(ratios.max())
        rate_ok = bool(limsup <= c + RATE_TOL)
    else:
        # superlinear: ratios must shrink toward 0 across the window
        limsup = float(ratios[-1])
        rate_ok = bool(limsup <= RATE_TOL and np.all(np.diff(ratios) <= BOUND_SLACK))
    try:
        order = empirical_order(e, xs_norm)
    except InsufficientData:
        order = None
    rep = BoundReport(rows, t0, rr.r, h3, p, bound_ok, step_ok, monotone_ok, c, limsup, rate_ok,
                      order, trace.compliant, notes)
    if strict and not rep.ok:
        k, what, lhs, rhs = rep.first_failure()
        raise BoundViolated(f"{what} violated at k = {k}: {lhs!r} > {rhs!r}", k, lhs, rhs, rep)
    return rep


# -- rate calibration ---------------------------------------------------------

def nominal_rates(strategy: BStrategy, theta: float) -> SolverRates | None:
    """Exact omegas for strategies whose ``B^{-1} M`` is known in advance."""
    if strategy.kind == "exact":
        return SolverRates(1.0, 0.0, theta)
    if strategy.kind == "scaled":
        return SolverRates(1.0 / strategy.c, abs(1.0 - 1.0 / strategy.c), theta)
    return None


@dataclass
class CalibratedRun:
    rates: SolverRates
    x0: np.ndarray
    trace: Trace
    radius: RadiusReport
    rounds: int


def calibrated_run(problem, f: MajorantFunction, strategy: BStrategy, policy: ResidualPolicy,
                   theta: float, fraction: float, seed: int = 0, rates: SolverRates | None = None,
                   max_rounds: int = 30, **solver_kw) -> CalibratedRun:
    """Run from ``x0`` at ``fraction * r`` with omegas that bound the observed ones.

    For strategies without known omegas (frozen, custom) the declared
    rates are raised to the observed maxima and ``r`` and ``x0`` recomputed
    until the run is consistent: every step meets the declared rates and
    ``x0`` lies inside the radius those rates certify.
    """
    from .problems import start_point

    inst = _instance(problem)
    declared = rates or nominal_rates(strategy, theta) or SolverRates(1.0 + 1e-9, 0.05, theta)
    for rnd in range(1, max_rounds + 1):
        rr = radii(f, declared, inst.kappa)
        x0 = start_point(inst, fraction * rr.r, seed)
        cfg = SolverConfig(declared, strategy, policy, **solver_kw)
        trace = solve(inst, x0, cfg)
        steps = [r for r in trace.records if r.step is not None]
        w1 = max((r.omega1_observed for r in steps), default=0.0)
        w2 = max((r.omega2_observed for r in steps), default=0.0)
        if w1 <= declared.omega1 + 1e-12 and w2 <= declared.omega2 + 1e-12:
            return CalibratedRun(declared, x0, trace, rr, rnd)
        declared = SolverRates(max(declared.omega1, w1 * (1 + 1e-6)),
                               max(declared.omega2, w2 * 1.02), theta)
    raise InvalidParameter(f"rate calibration did not settle in {max_rounds} rounds")
