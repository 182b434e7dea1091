"""Zero-residual test problems with known zeros and majorant annotations.

Every constant below is derived by hand (see each entry's provenance
note); nothing is fitted. ``validate_annotation`` re-checks the majorant
inequality

    beta ||F'(x) - F'(x* + tau (x - x*))|| <= f'(||x - x*||) - f'(tau ||x - x*||)

on random samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AnnotationInvalid, InvalidParameter, UnknownProblem
from .gn_solver import ProblemInstance
from .majorant import MajorantFunction, majorant_from_dict, radius_nu

MAX_N, MAX_M = 50, 200
ANNOTATION_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class AnnotatedProblem:
    """A problem plus the condition class its Jacobian is known to satisfy.

    ``condition`` is a majorant record such as ``{"family": "holder",
    "K": 1, "p": 1}``; ``h3_p`` is an exponent for which the induced
    majorant satisfies h3 (used for the per-step bound).
    """

    instance: ProblemInstance
    condition: dict
    provenance: str = ""
    h3_p: float | None = None
    kind: str = ""

    @cached_property
    def majorant(self) -> MajorantFunction:
        return majorant_from_dict(self.condition)

    @property
    def name(self) -> str:
        return self.instance.name


def _col(v):
    return np.array(v, dtype=float).reshape(-1, 1)


def _poly2(**_):
    inst = ProblemInstance(
        F=lambda x: np.array([x[0], 0.5 * x[0] ** 2]),
        jacobian=lambda x: _col([1.0, x[0]]),
        n=1, m=2, x_star=[0.0], name="poly2",
    )
    return AnnotatedProblem(
        inst, {"family": "holder", "K": 1.0, "p": 1.0},
        "F'(x) = (1, x)^T, so ||F'(x) - F'(y)|| = |x - y|; F'(0) = (1, 0)^T gives beta = 1, "
        "hence Lipschitz with K = beta * 1 = 1; Omega = R.",
        h3_p=1.0, kind="lipschitz",
    )


def _exp2(**_):
    # gamma = sup_n (1/n!)^(1/(n-1)) = 1/2 at n = 2
    inst = ProblemInstance(
        F=lambda x: np.array([x[0], math.expm1(x[0]) - x[0]]),
        jacobian=lambda x: _col([1.0, math.expm1(x[0])]),
        n=1, m=2, x_star=[0.0], kappa=2.0, name="exp2",
    )
    return AnnotatedProblem(
        inst, {"family": "smale", "gamma": 0.5},
        "F^(n)(0)/n! = (0, 1/n!) for n >= 2 and beta = 1, so gamma = max_n (1/n!)^(1/(n-1)) = 1/2 "
        "(attained at n = 2); the majorant lives on [0, 1/gamma) = [0, 2), so kappa = 2.",
        h3_p=1.0, kind="smale",
    )


def _holder_p(p=0.5, **_):
    p = float(p)
    if not 0 < p <= 1:
        raise InvalidParameter("holder-p needs 0 < p <= 1")
    inst = ProblemInstance(
        F=lambda x: np.array([x[0], x[0] * abs(x[0]) ** p]),
        jacobian=lambda x: _col([1.0, (1.0 + p) * abs(x[0]) ** p]),
        n=1, m=2, x_star=[0.0], name="holder-p",
    )
    return AnnotatedProblem(
        inst, {"family": "holder", "K": 1.0 + p, "p": p},
        f"F_2(x) = x|x|^p has F_2'(x) = (1+p)|x|^p, so |F'(x) - F'(tau x)| = (1+p)(1 - tau^p)|x|^p "
        f"exactly; beta = 1 gives K = 1 + p = {1 + p:g}. Not Lipschitz at 0 for p < 1.",
        h3_p=p, kind="holder",
    )


_U = np.array([[1, 1, 1, 1, 0], [1, -1, 1, -1, 0], [1, 1, -1, -1, 0]], dtype=float).T / 2.0
_A = _U * np.array([4.0, 2.0, 1.0])
_H = np.array([
    [[2, 1, 0], [1, 0, 0], [0, 0, 0]],
    [[0, 0, 1], [0, 1, 0], [1, 0, 0]],
    [[0, 0, 0], [0, 0, 1], [0, 1, -1]],
    [[0.5, 0, 0], [0, 0.5, 0], [0, 0, 0.5]],
    [[0, 0.5, 0.5], [0.5, 0, 0], [0.5, 0, 0]],
], dtype=float)
_XSTAR = np.array([1.0, -0.5, 0.25])


def _multi_nd(**_):
    def F(x):
        e = x - _XSTAR
        return _A @ e + 0.5 * np.einsum("i,kij,j->k", e, _H, e)

    def J(x):
        e = x - _XSTAR
        return _A + np.einsum("kij,j->ki", _H, e)

    K = math.sqrt(float(np.sum(_H ** 2)))
    inst = ProblemInstance(F=F, jacobian=J, n=3, m=5, x_star=_XSTAR, name="multi-nd")
    return AnnotatedProblem(
        inst, {"family": "holder", "K": K, "p": 1.0},
        "F(x) = A e + (1/2)(e^T H_k e)_k with e = x - x*. A has orthogonal columns of norms "
        "4, 2, 1, so beta = 1 and cond F'(x*) = 4. F'(x) - F'(y) has rows (x-y)^T H_k, whose "
        "spectral norm is at most sqrt(sum_k ||H_k||_F^2) ||x - y|| = sqrt(13.75) ||x - y||.",
        h3_p=1.0, kind="lipschitz",
    )


def _glip_sing(**_):
    # L(u) = u^(-1/2)/2 + 1: decreasing, singular at 0
    inst = ProblemInstance(
        F=lambda x: np.array([x[0], (2.0 / 3.0) * math.copysign(abs(x[0]) ** 1.5, x[0])
                              + 0.5 * x[0] ** 2]),
        jacobian=lambda x: _col([1.0, math.sqrt(abs(x[0])) + x[0]]),
        n=1, m=2, x_star=[0.0], name="glip-sing",
    )
    return AnnotatedProblem(
        inst, {"family": "glip", "L": {"terms": [[0.5, -0.5], [1.0, 0.0]]}},
        "F_2'(x) = |x|^(1/2) + x, so |F_2'(x) - F_2'(tau x)| <= |x|^(1/2)(1 - tau^(1/2)) + |x|(1 - tau) "
        "= int_{tau|x|}^{|x|} L(u) du for L(u) = u^(-1/2)/2 + 1, with beta = 1. "
        "t^(1/2) L(t) is nondecreasing, so h3 holds with p = 1/2.",
        h3_p=0.5, kind="glip",
    )


CATALOG = {
    "poly2": _poly2,
    "exp2": _exp2,
    "holder-p": _holder_p,
    "multi-nd": _multi_nd,
    "glip-sing": _glip_sing,
}


def catalog() -> list[str]:
    return list(CATALOG)


def builtin(name: str, **params) -> AnnotatedProblem:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise UnknownProblem(f"unknown problem {name!r}; known: {', '.join(CATALOG)}") from None
    return factory(**params)


# -- polynomial problems from JSON -------------------------------------------

class PolynomialMap:
    """``F_i(x) = sum_j c_ij prod_l x_l^(e_ijl)`` with nonnegative integer exponents."""

    def __init__(self, n: int, components):
        self.n = int(n)
        self.components = []
        for comp in components:
            terms = []
            for coef, expo in comp:
                expo = tuple(int(e) for e in expo)
                if len(expo) != self.n or min(expo) < 0:
                    raise InvalidParameter(f"bad exponent vector {expo} for n = {self.n}")
                terms.append((float(coef), expo))
            self.components.append(terms)
        self.m = len(self.components)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([sum(c * np.prod(x ** np.array(e)) for c, e in comp)
                         for comp in self.components])

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros((self.m, self.n))
        for i, comp in enumerate(self.components):
            for c, e in comp:
                for l in range(self.n):
                    if e[l] == 0:
                        continue
                    ee = np.array(e)
                    ee[l] -= 1
                    J[i, l] += c * e[l] * np.prod(x ** ee)
        return J


def problem_from_dict(d) -> AnnotatedProblem:
    """Resolve a config ``problem`` field: a catalog name or an inline polynomial."""
    if isinstance(d, str):
        return builtin(d)
    if "name" in d and "polynomial" not in d:
        return builtin(d["name"], **d.get("params", {}))
    poly = d["polynomial"]
    pm = PolynomialMap(poly["n"], poly["components"])
    if pm.n > MAX_N or pm.m > MAX_M:
        raise InvalidParameter(f"problem too large (n <= {MAX_N}, m <= {MAX_M})")
    kappa = d.get("kappa")
    inst = ProblemInstance(
        F=pm, jacobian=pm.jacobian, n=pm.n, m=pm.m, x_star=d.get("x_star"),
        kappa=math.inf if kappa is None else float(kappa), beta=d.get("beta"),
        name=d.get("name", "polynomial"),
    )
    return AnnotatedProblem(inst, dict(d["condition"]), d.get("provenance", "user supplied"),
                            d.get("h3_p"), d["condition"].get("family", ""))


# -- validation -------------------------------------------------------------

@dataclass
class AnnotationReport:
    max_violation: float
    worst_x: np.ndarray | None
    worst_tau: float | None
    radius: float
    samples: int
    lhs: np.ndarray = field(repr=False, default=None)
    rhs: np.ndarray = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return self.max_violation <= ANNOTATION_SLACK


def annotation_sides(problem: AnnotatedProblem, x, tau):
    """Both sides of the majorant inequality at one ``(x, tau)``."""
    inst, f = problem.instance, problem.majorant
    x = np.asarray(x, float).reshape(inst.n)
    e = x - inst.x_star
    t = float(np.linalg.norm(e))
    D = inst.jac(x) - inst.jac(inst.x_star + tau * e)
    lhs = inst.beta * np.linalg.norm(D, 2)
    rhs = float(f.deriv(t)) - float(f.deriv(tau * t))
    return lhs, rhs


def sampling_radius(problem: AnnotatedProblem) -> float:
    inst, f = problem.instance, problem.majorant
    rad = min(inst.kappa, f.R)
    if not math.isfinite(rad):
        rad = 2.0 * radius_nu(f)
    return rad * (1.0 - 1e-6)


def validate_annotation(problem: AnnotatedProblem, samples: int = 10_000, seed: int = 0,
                        strict: bool = True) -> AnnotationReport:
    """Sample ``(x, tau)`` in ``B(x*, kappa) x [0, 1]`` and return the worst violation.

    Raises :class:`AnnotationInvalid` with the witness when it exceeds
    1e-9 and ``strict`` is set.
    """
    inst, f = problem.instance, problem.majorant
    if inst.x_star is None:
        raise InvalidParameter("validation needs a known zero")
    rng = np.random.default_rng(seed)
    rad = sampling_radius(problem)
    ts = rad * rng.random(samples)
    taus = rng.random(samples)
    taus[: samples // 10] = 0.0
    dirs = rng.standard_normal((samples, inst.n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    xs = inst.x_star + ts[:, None] * dirs
    lhs = np.empty(samples)
    for i in range(samples):
        e = xs[i] - inst.x_star
        D = inst.jac(xs[i]) - inst.jac(inst.x_star + taus[i] * e)
        lhs[i] = inst.beta * np.linalg.norm(D, 2)
    rhs = np.asarray(f.deriv(ts)) - np.asarray(f.deriv(taus * ts))
    viol = lhs - rhs
    i = int(np.argmax(viol))
    rep = AnnotationReport(float(viol[i]), xs[i], float(taus[i]), rad, samples, lhs, rhs)
    if strict and not rep.ok:
        raise AnnotationInvalid(
            f"{inst.name}: majorant inequality fails by {viol[i]:.3e} at x = {xs[i]}, tau = {taus[i]:g}",
            x=xs[i], tau=float(taus[i]), violation=float(viol[i]),
        )
    return rep


def start_point(problem: AnnotatedProblem | ProblemInstance, distance: float, seed: int = 0):
    """``x* + distance * u`` for a seeded unit direction ``u``."""
    inst = problem.instance if isinstance(problem, AnnotatedProblem) else problem
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(inst.n)
    u /= np.linalg.norm(u)
    return inst.x_star + distance * u
