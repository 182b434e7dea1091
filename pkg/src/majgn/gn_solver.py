"""Inexact Gauss-Newton-like iteration.

One step solves ``B(x_k) S_k = -F'(x_k)^T F(x_k) + r_k`` and sets
``x_{k+1} = x_k + S_k``. ``B`` approximates ``M_k = F'(x_k)^T F'(x_k)``
(exact, frozen at a point, scaled, or user supplied). The residual ``r_k``
comes from a :class:`ResidualPolicy` and must satisfy

    ||P_k r_k|| <= theta_k ||P_k g_k||,   theta_k cond(P_k M_k) <= theta_bar

for the policy's preconditioner ``P_k``. Both conditions, and the
``omega1``/``omega2`` bounds on ``B^{-1} M``, are measured on every step
and flagged in the record when violated; they are not enforced.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import (InvalidParameter, MajgnError, OutOfDomain, PolicyInfeasible,
                     RankDeficient, Singular, SingularB, SolverError)
from .majorant import SolverRates
from .operator_core import DenseOperator, cond_number, pinv_apply, pinv_norm, spectral_norm

CHECK_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Map ``F: R^n -> R^m`` (``m >= n``) with a hand-coded Jacobian.

    When ``x_star`` is given, evaluations at distance ``>= kappa`` from it
    raise :class:`OutOfDomain`, and ``beta`` defaults to ``||F'(x*)^+||``.
    """

    F: Callable = field(repr=False)
    jacobian: Callable = field(repr=False)
    n: int
    m: int
    x_star: np.ndarray | None = None
    kappa: float = math.inf
    beta: float | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.m < self.n:
            raise InvalidParameter(f"need m >= n, got m = {self.m}, n = {self.n}")
        if not self.kappa > 0:
            raise InvalidParameter("kappa must be positive")
        if self.x_star is None:
            return
        xs = np.array(self.x_star, dtype=float).reshape(self.n)
        xs.setflags(write=False)
        object.__setattr__(self, "x_star", xs)
        res = np.linalg.norm(self.F(xs))
        if res > 1e-10:
            raise InvalidParameter(f"||F(x*)|| = {res:.3e} is not zero")
        beta = pinv_norm(self.jac(xs))
        if self.beta is None:
            object.__setattr__(self, "beta", beta)

    def _check(self, x):
        x = np.asarray(x, dtype=float).reshape(self.n)
        if self.x_star is not None and math.isfinite(self.kappa):
            d = np.linalg.norm(x - self.x_star)
            if not d < self.kappa:
                raise OutOfDomain(f"||x - x*|| = {d:.9g} >= kappa = {self.kappa:.9g}")
        return x

    def residual(self, x) -> np.ndarray:
        return np.asarray(self.F(self._check(x)), dtype=float).reshape(self.m)

    def jac(self, x) -> np.ndarray:
        return np.asarray(self.jacobian(self._check(x)), dtype=float).reshape(self.m, self.n)

    def error(self, x) -> float | None:
        if self.x_star is None:
            return None
        return float(np.linalg.norm(np.asarray(x, float) - self.x_star))


@dataclass(frozen=True, eq=False)
class BStrategy:
    """How ``B(x)`` approximates ``M(x) = F'(x)^T F'(x)``.

    ``exact``: ``B = M``. ``frozen``: ``B = M(at)``; ``at=None`` freezes at
    the starting point of :func:`solve`. ``scaled``: ``B = c M``.
    ``custom``: ``B = provider(x, M)``.
    """

    kind: str = "exact"
    at: np.ndarray | None = None
    c: float = 1.0
    provider: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("exact", "frozen", "scaled", "custom"):
            raise InvalidParameter(f"unknown B strategy {self.kind!r}")
        if self.kind == "scaled" and not self.c > 0:
            raise InvalidParameter("scale c must be positive")
        if self.kind == "custom" and self.provider is None:
            raise InvalidParameter("custom B strategy needs a provider")

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def frozen(cls, at=None):
        return cls("frozen", at=None if at is None else np.asarray(at, float))

    @classmethod
    def scaled(cls, c):
        return cls("scaled", c=float(c))

    @classmethod
    def custom(cls, provider):
        return cls("custom", provider=provider)

    def matrix(self, problem: ProblemInstance, x, M) -> np.ndarray:
        if self.kind == "exact":
            return M
        if self.kind == "scaled":
            return self.c * M
        if self.kind == "frozen":
            if self.at is None:
                raise InvalidParameter("frozen strategy has no freeze point")
            Ja = problem.jac(self.at)
            return Ja.T @ Ja
        return np.asarray(self.provider(x, M), dtype=float)

    def to_dict(self):
        if self.kind == "frozen":
            return {"kind": "frozen", "at": None if self.at is None else self.at.tolist()}
        if self.kind == "scaled":
            return {"kind": "scaled", "c": self.c}
        return {"kind": self.kind}


@dataclass(frozen=True, eq=False)
class ResidualPolicy:
    """Source of the linear-solve residual ``r_k``.

    mode ``exact``: ``r = 0``. ``synthetic``: ``r`` along a seeded random
    direction, scaled so ``||P r|| = magnitude * theta ||P g||``.
    ``truncated``: preconditioned CG on ``B S = -g`` stopped by the
    preconditioned residual test; ``r = B S + g``.

    ``theta_request`` caps the forcing term; ``None`` saturates at
    ``theta_bar / cond(P M)``. It may be a float or a callable of ``k``.
    """

    mode: str = "exact"
    magnitude: float = 1.0
    seed: int = 0
    preconditioner: str | Callable = "identity"
    theta_request: float | Callable | None = None
    inner_max_iter: int | None = None

    def __post_init__(self):
        if self.mode not in ("exact", "synthetic", "truncated"):
            raise InvalidParameter(f"unknown residual mode {self.mode!r}")
        if not 0.0 <= self.magnitude <= 1.0:
            raise InvalidParameter("relative magnitude must lie in [0, 1]")
        if isinstance(self.preconditioner, str) and self.preconditioner not in ("identity", "jacobi"):
            raise InvalidParameter(f"unknown preconditioner {self.preconditioner!r}")

    def to_dict(self):
        d = {"mode": self.mode}
        if self.mode == "synthetic":
            d.update(magnitude=self.magnitude, seed=self.seed)
        if isinstance(self.preconditioner, str):
            d["preconditioner"] = self.preconditioner
        if isinstance(self.theta_request, (int, float)):
            d["theta_request"] = self.theta_request
        return d


@dataclass(frozen=True, eq=False)
class SolverConfig:
    rates: SolverRates = field(default_factory=SolverRates)
    b_strategy: BStrategy = field(default_factory=BStrategy)
    residual_policy: ResidualPolicy = field(default_factory=ResidualPolicy)
    max_iter: int = 100
    grad_tol: float = 1e-12
    step_tol: float = 1e-15

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidParameter("max_iter must be >= 1")
        if not (self.grad_tol > 0 and self.step_tol > 0):
            raise InvalidParameter("tolerances must be positive")


@dataclass(eq=False)
class IterationRecord:
    """Diagnostics for iterate ``x_k``.

    The last record of a trace carries no step (``step is None``).
    """

    k: int
    x: np.ndarray
    grad: np.ndarray
    error: float | None = None
    step: np.ndarray | None = None
    residual: np.ndarray | None = None
    theta: float | None = None
    cond_pm: float | None = None
    omega1_observed: float | None = None
    omega2_observed: float | None = None
    B: np.ndarray | None = field(default=None, repr=False)
    P: np.ndarray | None = field(default=None, repr=False)
    violations: tuple = ()

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))

    @property
    def step_norm(self) -> float | None:
        return None if self.step is None else float(np.linalg.norm(self.step))


@dataclass(eq=False)
class Trace:
    records: list
    reason: str

    @property
    def iterations(self) -> int:
        return len(self.records) - 1

    @property
    def x_final(self) -> np.ndarray:
        return self.records[-1].x

    def errors(self) -> np.ndarray:
        return np.array([np.nan if r.error is None else r.error for r in self.records])

    @property
    def compliant(self) -> bool:
        return not any(r.violations for r in self.records)


# -- residual policies ------------------------------------------------------

def preconditioner_matrix(policy: ResidualPolicy, x, M) -> np.ndarray:
    pc = policy.preconditioner
    if pc == "identity":
        return np.eye(M.shape[0])
    if pc == "jacobi":
        d = np.diag(M)
        if np.any(d == 0):
            raise PolicyInfeasible("Jacobi preconditioner needs a nonzero diagonal")
        return np.diag(1.0 / d)
    return np.asarray(pc(x, M), dtype=float)


def _theta(policy: ResidualPolicy, rates: SolverRates, cond_pm: float, k: int) -> float:
    cap = rates.theta / cond_pm
    req = policy.theta_request
    if req is None:
        return cap
    req = req(k) if callable(req) else float(req)
    return min(max(req, 0.0), cap)


def make_residual(policy: ResidualPolicy, x, g, M, rates: SolverRates, B=None, k: int = 0):
    """Return ``(r, theta, P)`` for one step.

    ``B`` defaults to ``M`` and is used only by the truncated mode.
    """
    g = np.asarray(g, dtype=float)
    M = np.asarray(M, dtype=float)
    P = preconditioner_matrix(policy, x, M)
    if policy.mode == "exact":
        return np.zeros_like(g), 0.0, P
    try:
        cpm = cond_number(P @ M)
    except Singular as exc:
        raise PolicyInfeasible(f"P M is singular: {exc}") from exc
    theta = _theta(policy, rates, cpm, k)
    if policy.mode == "synthetic":
        if policy.magnitude == 0.0 or rates.theta == 0.0:
            return np.zeros_like(g), theta, P
        if theta <= 0.0 or not math.isfinite(theta):
            raise PolicyInfeasible(f"forcing budget theta_bar/cond(PM) = {theta:g} leaves no room")
        rng = np.random.default_rng([policy.seed, k])
        d = rng.standard_normal(g.shape[0])
        pg, pd = np.linalg.norm(P @ g), np.linalg.norm(P @ d)
        r = theta * policy.magnitude * (pg / pd) * d
        return r, theta, P
    B = M if B is None else np.asarray(B, dtype=float)
    s = _truncated_cg(B, g, P, theta, policy.inner_max_iter)
    return B @ s + g, theta, P


def _spd(P):
    if not np.allclose(P, P.T):
        return False
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return False
    return True


def _truncated_cg(B, g, P, theta, max_iter=None):
    """CG on ``B s = -g`` until ``||P(B s + g)|| <= theta ||P g||``.

    ``P`` doubles as the CG preconditioner when it is SPD. Falls back to a
    direct solve if CG stalls.
    """
    n = g.shape[0]
    max_iter = 10 * n if max_iter is None else max_iter
    target = theta * np.linalg.norm(P @ g)
    prec = P if _spd(P) else np.eye(n)
    s = np.zeros(n)
    res = -g.copy()  # -(B s + g)
    z = prec @ res
    d = z.copy()
    rz = res @ z
    for _ in range(max_iter):
        if np.linalg.norm(P @ res) <= target:
            return s
        Bd = B @ d
        dBd = d @ Bd
        if dBd <= 0:
            break
        alpha = rz / dBd
        s = s + alpha * d
        res = res - alpha * Bd
        z = prec @ res
        rz_new = res @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    if np.linalg.norm(P @ (B @ s + g)) <= target:
        return s
    return np.linalg.solve(B, -g)


# -- iteration --------------------------------------------------------------

def _local_model(problem: ProblemInstance, x):
    Fx = problem.residual(x)
    J = problem.jac(x)
    op = DenseOperator(J)
    if not op.spectral.injective():
        raise RankDeficient(f"Jacobian lost injectivity (sigma_min = {op.spectral.sigma_min:.3e})")
    return Fx, J, J.T @ Fx, J.T @ J


def gn_step(problem: ProblemInstance, x, config: SolverConfig, k: int = 0):
    """One inexact Gauss-Newton-like step from ``x``.

    Returns ``(x_next, record)``. Hypothesis violations (observed omegas
    above the declared rates, residual or forcing contract broken) are
    listed in ``record.violations``; they do not stop the step.
    """
    x = np.asarray(x, dtype=float).reshape(problem.n)
    Fx, J, g, M = _local_model(problem, x)
    rates = config.rates
    B = config.b_strategy.matrix(problem, x, M)
    try:
        cond_number(B)
    except Singular as exc:
        raise SingularB(str(exc)) from exc
    r, theta, P = make_residual(config.residual_policy, x, g, M, rates, B=B, k=k)
    if config.b_strategy.kind == "exact" and not np.any(r):
        S = pinv_apply(J, -Fx)
    else:
        S = np.linalg.solve(B, -g + r)
    BinvM = np.linalg.solve(B, M)
    w1 = spectral_norm(BinvM)
    w2 = spectral_norm(BinvM - np.eye(problem.n))
    cpm = cond_number(P @ M)
    viol = []
    if w1 > rates.omega1 + CHECK_SLACK:
        viol.append("omega1")
    if w2 > rates.omega2 + CHECK_SLACK:
        viol.append("omega2")
    if theta * cpm > rates.theta + CHECK_SLACK:
        viol.append("forcing")
    if np.linalg.norm(P @ r) > theta * np.linalg.norm(P @ g) + CHECK_SLACK:
        viol.append("residual")
    rec = IterationRecord(
        k=k, x=x, grad=g, error=problem.error(x), step=S, residual=r, theta=theta,
        cond_pm=cpm, omega1_observed=w1, omega2_observed=w2, B=B, P=P,
        violations=tuple(viol),
    )
    return x + S, rec


def solve(problem: ProblemInstance, x0, config: SolverConfig) -> Trace:
    """Iterate :func:`gn_step` until a stopping rule fires.

    Stops when ``||g_k|| <= grad_tol``, after a step with
    ``||S_k|| <= step_tol``, or after ``max_iter`` steps. Errors inside a
    step are re-raised as :class:`SolverError` carrying the partial trace.
    """
    x = np.asarray(x0, dtype=float).reshape(problem.n)
    if config.b_strategy.kind == "frozen" and config.b_strategy.at is None:
        config = replace(config, b_strategy=BStrategy.frozen(x))
    records = []
    reason = None
    k = 0
    while True:
        try:
            _, _, g, _ = _local_model(problem, x)
            if reason is None:
                if np.linalg.norm(g) <= config.grad_tol:
                    reason = "grad_tol"
                elif k >= config.max_iter:
                    reason = "max_iter"
            if reason is not None:
                records.append(IterationRecord(k=k, x=x, grad=g, error=problem.error(x)))
                return Trace(records, reason)
            x_next, rec = gn_step(problem, x, config, k)
        except MajgnError as exc:
            raise SolverError(str(exc), k, exc, Trace(records, "error")) from exc
        records.append(rec)
        if rec.step_norm <= config.step_tol:
            reason = "step_tol"
        x = x_next
        k += 1


# -- serialization ----------------------------------------------------------

TRACE_COLUMNS = ("k", "error", "grad_norm", "step_norm", "theta", "cond",
                 "omega1_obs", "omega2_obs")


def fmt(v) -> str:
    """9 significant digits, locale independent; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".9g")


def trace_rows(trace: Trace):
    for r in trace.records:
        yield (r.k, r.error, r.grad_norm, r.step_norm, r.theta, r.cond_pm,
               r.omega1_observed, r.omega2_observed)


def trace_to_csv(trace: Trace, fh=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace_rows(trace):
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def _vec(v):
    return None if v is None else [float(a) for a in np.asarray(v).ravel()]


def trace_to_dict(trace: Trace) -> dict:
    recs = []
    for r in trace.records:
        recs.append({
            "k": r.k, "x": _vec(r.x), "grad": _vec(r.grad), "error": r.error,
            "step": _vec(r.step), "residual": _vec(r.residual), "theta": r.theta,
            "cond_pm": r.cond_pm, "omega1_observed": r.omega1_observed,
            "omega2_observed": r.omega2_observed, "violations": list(r.violations),
        })
    return {"reason": trace.reason, "iterations": trace.iterations, "records": recs}


def trace_to_json(trace: Trace) -> str:
    return json.dumps(trace_to_dict(trace), indent=1, sort_keys=True)


def trace_from_dict(d: dict) -> Trace:
    def arr(v):
        return None if v is None else np.asarray(v, dtype=float)

    recs = [
        IterationRecord(
            k=r["k"], x=arr(r["x"]), grad=arr(r["grad"]), error=r["error"], step=arr(r["step"]),
            residual=arr(r["residual"]), theta=r["theta"], cond_pm=r["cond_pm"],
            omega1_observed=r["omega1_observed"], omega2_observed=r["omega2_observed"],
            violations=tuple(r["violations"]),
        )
        for r in d["records"]
    ]
    return Trace(recs, d["reason"])
