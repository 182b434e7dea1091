"""Majorant functions, convergence radii and the scalar majorant sequence.

A majorant function ``f`` on ``[0, R)`` satisfies ``f(0) = 0``,
``f'(0) = -1`` and has a strictly increasing derivative. Its Newton map
``n_f(t) = t - f(t)/f'(t)`` is nonpositive on ``(0, nu)``; most routines
here work with the *gap* ``|n_f(t)| = f(t)/f'(t) - t``.

The sequence ``t_k`` from :func:`majorant_sequence` dominates the errors
``||x_k - x*||`` of the inexact Gauss-Newton iteration. Certifying with it
needs ``t_0 = ||x_0 - x*||``, so it is a tool for problems whose zero is
known, not a runtime error estimate.

Every callable stored on a :class:`MajorantFunction` accepts numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParameter, NotFound, OutOfDomain, OutOfRadius
from .quadrature import integrate_from_zero

H1_TOL = 1e-12
BISECT_RTOL = 1e-13
SCAN_POINTS = 10_000
TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class SolverRates:
    """Accuracy parameters of the inexact method: omega1, omega2, theta_bar."""

    omega1: float = 1.0
    omega2: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        w1, w2, th = self.omega1, self.omega2, self.theta
        if not 0.0 <= th < 1.0:
            raise InvalidParameter(f"need 0 <= theta < 1, got theta = {th:g}")
        if not 0.0 <= w2 < w1:
            raise InvalidParameter(f"need 0 <= omega2 < omega1, got omega1 = {w1:g}, omega2 = {w2:g}")
        if w1 * th + w2 >= 1.0:
            raise InvalidParameter(f"need omega1*theta + omega2 < 1, got {w1 * th + w2:g} (ω1ϑ+ω2 ≥ 1)")

    @property
    def gain(self) -> float:
        """Coefficient ``(1 + theta) * omega1`` of the Newton gap."""
        return (1.0 + self.theta) * self.omega1

    @property
    def linear_rate(self) -> float:
        """``omega1 * theta + omega2``, the asymptotic contraction factor."""
        return self.omega1 * self.theta + self.omega2

    def to_dict(self):
        return {"omega1": self.omega1, "omega2": self.omega2, "theta": self.theta}


PURE_GN = SolverRates(1.0, 0.0, 0.0)


@dataclass(frozen=True)
class HolderParams:
    K: float
    p: float = 1.0

    def __post_init__(self):
        if not self.K > 0:
            raise InvalidParameter(f"Hölder constant must be positive, got K = {self.K:g}")
        if not 0.0 < self.p <= 1.0:
            raise InvalidParameter(f"Hölder exponent must lie in (0, 1], got p = {self.p:g}")


@dataclass(frozen=True)
class SmaleParams:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidParameter(f"gamma must be positive, got {self.gamma:g}")


class PowerSum:
    """``L(u) = sum_i c_i * u**e_i``; JSON friendly and numpy vectorized."""

    def __init__(self, terms):
        self.terms = tuple((float(c), float(e)) for c, e in terms)
        if not self.terms:
            raise InvalidParameter("PowerSum needs at least one term")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        with np.errstate(divide="ignore"):
            for c, e in self.terms:
                out = out + c * u ** e
        return out if out.ndim else float(out)

    def to_dict(self):
        return {"terms": [[c, e] for c, e in self.terms]}

    def __repr__(self):
        return " + ".join(f"{c:g}*u^{e:g}" for c, e in self.terms)


@dataclass(frozen=True)
class GeneralizedLipschitzParams:
    """Radial function ``L`` of a generalized Lipschitz condition.

    ``L`` must be positive and integrable on ``[0, R)``; it need not be
    monotone and may blow up at 0.
    """

    L: Callable
    R: float = math.inf
    tol: float = 1e-10

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidParameter("quadrature tolerance must be positive")
        if not self.R > 0:
            raise InvalidParameter("domain radius must be positive")
        hi = self.R if math.isfinite(self.R) else 1e3
        u = np.geomspace(hi * 1e-9, hi * (1 - 1e-9), 400)
        vals = np.asarray(self.L(u), dtype=float) if _is_vectorized(self.L, u) else np.array(
            [float(self.L(x)) for x in u]
        )
        if not np.all(vals > 0):
            raise InvalidParameter("L must be positive on [0, R)")


def _is_vectorized(func, u):
    try:
        return np.shape(func(u)) == u.shape
    except (TypeError, ValueError):
        return False


@dataclass(frozen=True, eq=False)
class MajorantFunction:
    """A majorant ``f`` with derivative, checked for h1 and (on a grid) h2.

    ``gap`` optionally gives ``|n_f(t)| = f(t)/f'(t) - t`` in closed form,
    which avoids cancellation at small ``t``.
    """

    f: Callable = field(repr=False)
    df: Callable = field(repr=False)
    R: float = math.inf
    family: str = "custom"
    params: object = None
    gap: Callable | None = field(default=None, repr=False)
    h2_grid: int = field(default=1000, repr=False)

    def __post_init__(self):
        if not self.R > 0:
            raise InvalidParameter("domain radius R must be positive")
        f0, d0 = float(self.f(0.0)), float(self.df(0.0))
        if abs(f0) > H1_TOL or abs(d0 + 1.0) > H1_TOL:
            raise InvalidParameter(f"h1 fails: f(0) = {f0:g}, f'(0) = {d0:g} (need 0 and -1)")
        if self.h2_grid:
            ts = np.linspace(0.0, self._grid_extent(), self.h2_grid + 1)[:-1]
            d = np.asarray(self.df(ts), dtype=float)
            if not np.all(np.diff(d) > 0):
                k = int(np.argmin(np.diff(d) > 0))
                raise InvalidParameter(f"h2 fails: f' not strictly increasing near t = {ts[k]:g}")

    def _grid_extent(self) -> float:
        if math.isfinite(self.R):
            return self.R
        t = 1.0
        while t < 1e12 and float(self.df(t)) < 0:
            t *= 2.0
        return 2.0 * t

    def eval(self, t):
        return self.f(t)

    def __call__(self, t):
        return self.f(t)

    def deriv(self, t):
        return self.df(t)

    def newton_gap(self, t):
        """``|n_f(t)|``; raises OutOfDomain where ``f'(t) >= 0``."""
        t = np.asarray(t, dtype=float)
        d = np.asarray(self.df(t), dtype=float)
        if np.any(~(d < 0)):
            raise OutOfDomain(f"f'(t) >= 0 at t = {np.atleast_1d(t)[np.argmax(np.atleast_1d(~(d < 0)))]:g}")
        if self.gap is not None:
            out = np.asarray(self.gap(t), dtype=float)
        else:
            out = np.asarray(self.f(t), dtype=float) / d - t
        out = np.where(t == 0, 0.0, out)
        return float(out) if out.ndim == 0 else out

    def linearization_error(self, t, u):
        """``e_f(t, u) = f(u) - [f(t) + f'(t)(u - t)]``."""
        return self.f(u) - (self.f(t) + self.df(t) * (u - t))


def newton_map(f: MajorantFunction, t):
    """``n_f(t) = t - f(t)/f'(t)``, nonpositive on ``(0, nu)``."""
    g = f.newton_gap(t)
    return -g


# -- families ---------------------------------------------------------------

def holder_majorant(params: HolderParams, closed_gap: bool = True) -> MajorantFunction:
    """``f(t) = K t^(p+1)/(p+1) - t``."""
    K, p = params.K, params.p

    def f(t):
        return K * np.asarray(t, float) ** (p + 1) / (p + 1) - t

    def df(t):
        return K * np.asarray(t, float) ** p - 1.0

    def gap(t):
        tp = np.asarray(t, float) ** p
        return p * K * tp * t / ((p + 1) * (1.0 - K * tp))

    return MajorantFunction(f, df, math.inf, "holder", params, gap if closed_gap else None)


def lipschitz_majorant(K: float, closed_gap: bool = True) -> MajorantFunction:
    return holder_majorant(HolderParams(K, 1.0), closed_gap)


def smale_majorant(params: SmaleParams, closed_gap: bool = True) -> MajorantFunction:
    """``f(t) = t/(1 - gamma t) - 2t`` on ``[0, 1/gamma)``."""
    g = params.gamma

    def f(t):
        t = np.asarray(t, float)
        return t / (1.0 - g * t) - 2.0 * t

    def df(t):
        with np.errstate(divide="ignore"):
            return 1.0 / (1.0 - g * np.asarray(t, float)) ** 2 - 2.0

    def gap(t):
        t = np.asarray(t, float)
        return g * t * t / (2.0 * (1.0 - g * t) ** 2 - 1.0)

    return MajorantFunction(f, df, 1.0 / g, "smale", params, gap if closed_gap else None)


def glip_majorant(params: GeneralizedLipschitzParams) -> MajorantFunction:
    """Majorant induced by a generalized Lipschitz function ``L``.

    ``f(t) = int_0^t L(u)(t - u) du - t`` and ``f'(t) = int_0^t L(u) du - 1``,
    both by adaptive quadrature; the gap is
    ``int_0^t L(u) u du / (1 - int_0^t L(u) du)``.
    """
    L, tol = params.L, params.tol

    def m0(t):
        return integrate_from_zero(L, t, tol)[0]

    def m1(t):
        return integrate_from_zero(L, t, tol, moment=1)[0]

    def f(t):
        return t * (m0(t) - 1.0) - m1(t)

    def df(t):
        return np.asarray(m0(t)) - 1.0 if np.ndim(t) else m0(t) - 1.0

    def gap(t):
        return np.asarray(m1(t)) / (1.0 - np.asarray(m0(t)))

    return MajorantFunction(f, df, params.R, "glip", params, gap)


def majorant_for(family: str, params) -> MajorantFunction:
    if family == "holder":
        return holder_majorant(params)
    if family == "smale":
        return smale_majorant(params)
    if family == "glip":
        return glip_majorant(params)
    raise InvalidParameter(f"unknown majorant family {family!r}")


def majorant_from_dict(d: dict) -> MajorantFunction:
    """Build from ``{"family": "holder", "K": 1, "p": 1}`` style records."""
    fam = d.get("family")
    if fam in ("holder", "lipschitz"):
        return holder_majorant(HolderParams(float(d["K"]), float(d.get("p", 1.0))))
    if fam == "smale":
        return smale_majorant(SmaleParams(float(d["gamma"])))
    if fam == "glip":
        L = PowerSum(d["L"]["terms"])
        return glip_majorant(
            GeneralizedLipschitzParams(L, float(d.get("R", math.inf)), float(d.get("tol", 1e-10)))
        )
    raise InvalidParameter(f"unknown majorant family {fam!r}")


def majorant_to_dict(f: MajorantFunction) -> dict:
    prm = f.params
    if f.family == "holder":
        return {"family": "holder", "K": prm.K, "p": prm.p}
    if f.family == "smale":
        return {"family": "smale", "gamma": prm.gamma}
    if f.family == "glip" and isinstance(prm.L, PowerSum):
        out = {"family": "glip", "L": prm.L.to_dict(), "tol": prm.tol}
        if math.isfinite(prm.R):
            out["R"] = prm.R
        return out
    raise InvalidParameter(f"majorant family {f.family!r} is not serializable")


# -- radii ------------------------------------------------------------------

def _bisect(neg, lo, hi, rtol=BISECT_RTOL, max_iter=400):
    """Shrink ``[lo, hi]`` with ``neg(lo)`` true and ``neg(hi)`` false."""
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if neg(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _nu_with_method(f: MajorantFunction):
    def neg(t):
        with np.errstate(all="ignore"):
            return bool(float(f.df(t)) < 0)

    if math.isfinite(f.R):
        if neg(f.R):
            return f.R, "domain"
        return _bisect(neg, 0.0, f.R), "bisection"
    hi = 1.0
    while neg(hi):
        hi *= 2.0
        if hi > 1e300:
            return math.inf, "domain"
    return _bisect(neg, 0.0, hi), "bisection"


def radius_nu(f: MajorantFunction) -> float:
    """``nu = sup{t in [0, R): f'(t) < 0}``."""
    return _nu_with_method(f)[0]


def _rho_condition(f: MajorantFunction, rates: SolverRates):
    a, c = rates.gain, rates.linear_rate

    def neg(t):
        with np.errstate(all="ignore"):
            try:
                g = a * f.newton_gap(t) / t + c - 1.0
            except OutOfDomain:
                return False
        return bool(g < 0)

    return neg


def _rho_with_method(f: MajorantFunction, rates: SolverRates, nu: float | None = None):
    nu = radius_nu(f) if nu is None else nu
    neg = _rho_condition(f, rates)
    top = nu if math.isfinite(nu) else 1e300
    if check_h3(f, 0.0, nu=nu):
        if math.isfinite(nu):
            cands = (nu * (1.0 - 2.0 ** -k) for k in range(1, 60))
        else:
            cands = (2.0 ** k for k in range(-20, 1000))
        hi = next((c for c in cands if not neg(c)), None)
        if hi is None:
            return nu, "nu"
        lo = hi / 2.0
        while not neg(lo):
            lo /= 2.0
            if lo < top * 1e-300:
                raise NotFound("condition fails arbitrarily close to 0; invalid majorant")
        return _bisect(neg, lo, hi), "bisection"
    grid = np.geomspace(top * 1e-10, top * (1.0 - 1e-10), SCAN_POINTS)
    if not neg(grid[0]):
        raise NotFound("condition fails arbitrarily close to 0; invalid majorant")
    for i in range(1, grid.size):
        if not neg(grid[i]):
            return _bisect(neg, grid[i - 1], grid[i]), "scan"
    return nu, "nu"


def radius_rho(f: MajorantFunction, rates: SolverRates, nu: float | None = None) -> float:
    """Largest ``delta <= nu`` with ``(1+theta) omega1 |n_f(t)|/t + omega1 theta + omega2 < 1`` on ``(0, delta)``.

    Bisection when ``|n_f(t)|/t`` is certified increasing; otherwise a
    10,000-point log scan followed by bisection of the first sign change.
    """
    return _rho_with_method(f, rates, nu)[0]


def check_h3(f: MajorantFunction, p: float, grid: int = 1000, nu: float | None = None) -> bool:
    """Whether ``|n_f(t)|/t^(p+1)`` is strictly increasing on a grid of ``(0, nu)``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter(f"need 0 <= p <= 1, got {p:g}")
    nu = radius_nu(f) if nu is None else nu
    top = nu if math.isfinite(nu) else 1e6
    ts = np.geomspace(top * 1e-6, top * (1.0 - 1e-6), grid)
    q = np.asarray(f.newton_gap(ts)) / ts ** (p + 1)
    return bool(np.all(np.isfinite(q)) and np.all(np.diff(q) > 0))


@dataclass(frozen=True)
class RadiusReport:
    nu: float
    rho: float
    kappa: float
    r: float
    methods: dict

    def __post_init__(self):
        if not (self.nu > 0 and self.rho > 0 and self.kappa > 0):
            raise InvalidParameter("radii must be positive")
        if self.rho > self.nu * (1 + 1e-12):
            raise InvalidParameter(f"rho = {self.rho:g} exceeds nu = {self.nu:g}")

    def to_dict(self):
        return {"nu": self.nu, "rho": self.rho, "kappa": self.kappa, "r": self.r,
                "methods": dict(self.methods)}


def radius_report(f: MajorantFunction, rates: SolverRates, kappa: float = math.inf) -> RadiusReport:
    """Numeric radii for an arbitrary majorant."""
    nu, m_nu = _nu_with_method(f)
    rho, m_rho = _rho_with_method(f, rates, nu)
    return RadiusReport(nu, rho, kappa, min(kappa, rho),
                        {"nu": m_nu, "rho": m_rho, "kappa": "given"})


def holder_radius_closed_form(params: HolderParams, rates: SolverRates,
                              kappa: float = math.inf) -> RadiusReport:
    K, p = params.K, params.p
    b = 1.0 - rates.linear_rate
    rho = (b * (p + 1) / (K * (b + p * (1.0 + rates.omega1 - rates.omega2)))) ** (1.0 / p)
    nu = (1.0 / K) ** (1.0 / p)
    return RadiusReport(nu, rho, kappa, min(kappa, rho),
                        {"nu": "closed_form", "rho": "closed_form", "kappa": "given"})


def smale_radius_closed_form(params: SmaleParams, rates: SolverRates,
                             kappa: float = math.inf) -> RadiusReport:
    g = params.gamma
    a, b = rates.gain, 1.0 - rates.linear_rate
    s = a + 4.0 * b
    rho = (s - math.sqrt(s * s - 8.0 * b * b)) / (4.0 * b * g)
    nu = (1.0 - 1.0 / math.sqrt(2.0)) / g
    return RadiusReport(nu, rho, kappa, min(kappa, rho),
                        {"nu": "closed_form", "rho": "closed_form", "kappa": "given"})


def radii(f: MajorantFunction, rates: SolverRates, kappa: float = math.inf) -> RadiusReport:
    """Closed-form radii when the family has them, numeric otherwise."""
    if f.family == "holder":
        return holder_radius_closed_form(f.params, rates, kappa)
    if f.family == "smale":
        return smale_radius_closed_form(f.params, rates, kappa)
    return radius_report(f, rates, kappa)


# -- majorant sequence ------------------------------------------------------

def majorant_sequence(f: MajorantFunction, rates: SolverRates, t0: float, k_max: int,
                      rho: float | None = None) -> list[float]:
    """``t_{k+1} = omega1 (1+theta) |n_f(t_k)| + (omega1 theta + omega2) t_k``.

    Requires ``0 < t0 < rho``. The result is strictly decreasing until it
    drops below the smallest normal float, after which it is 0.
    """
    rho = radius_rho(f, rates) if rho is None else rho
    if not 0.0 < t0 < rho:
        raise OutOfRadius(f"t0 = {t0:.9g} not in (0, rho = {rho:.9g})")
    a, c = rates.gain, rates.linear_rate
    ts = [float(t0)]
    for _ in range(k_max):
        t = ts[-1]
        nxt = 0.0 if t == 0.0 else a * f.newton_gap(t) + c * t
        if nxt < TINY:
            nxt = 0.0  # subnormal range: c * t may round back to t
        if t > 0 and not nxt < t:
            raise AssertionError(f"majorant sequence not decreasing: {t!r} -> {nxt!r}")
        ts.append(float(nxt))
    return ts
