"""Dense linear-operator utilities.

Everything is real and finite dimensional: an operator is an ``m x n``
matrix with ``m >= n``. Norms are spectral. The pseudoinverse is applied
through a thin SVD rather than by forming ``(A^T A)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidParameter, RankDeficient, Singular

RANK_RTOL = 1e-12


@dataclass(frozen=True)
class SpectralData:
    """Thin SVD ``A = U diag(s) Vt`` with ``s`` sorted nonincreasing."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def sigma_max(self) -> float:
        return float(self.s[0]) if self.s.size else 0.0

    @property
    def sigma_min(self) -> float:
        return float(self.s[-1]) if self.s.size else 0.0

    def injective(self, rtol: float = RANK_RTOL) -> bool:
        return self.s.size > 0 and self.sigma_min > rtol * self.sigma_max


@dataclass(frozen=True)
class DenseOperator:
    """Immutable real ``m x n`` matrix with ``m >= n`` and finite entries."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2:
            raise InvalidParameter(f"operator must be 2-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidParameter("operator has non-finite entries")
        if a.shape[0] < a.shape[1]:
            raise InvalidParameter(f"need m >= n, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    @cached_property
    def spectral(self) -> SpectralData:
        u, s, vt = np.linalg.svd(self.entries, full_matrices=False)
        return SpectralData(u, s, vt)

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def as_operator(a) -> DenseOperator:
    return a if isinstance(a, DenseOperator) else DenseOperator(a)


def spectral_norm(a) -> float:
    return as_operator(a).spectral.sigma_max


def _require_injective(op: DenseOperator, rtol: float) -> SpectralData:
    sd = op.spectral
    if not sd.injective(rtol):
        raise RankDeficient(
            f"smallest singular value {sd.sigma_min:.3e} <= {rtol:g} * {sd.sigma_max:.3e}"
        )
    return sd


def pinv_apply(a, y, rtol: float = RANK_RTOL) -> np.ndarray:
    """Return ``A^+ y``, the least-squares solution of ``A x = y``."""
    op = as_operator(a)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != op.rows:
        raise InvalidParameter(f"y has length {y.shape[0]}, expected {op.rows}")
    sd = _require_injective(op, rtol)
    return sd.vt.T @ ((sd.u.T @ y) / sd.s)


def pinv_norm(a, rtol: float = RANK_RTOL) -> float:
    """Spectral norm of the pseudoinverse, ``1 / sigma_min``."""
    sd = _require_injective(as_operator(a), rtol)
    return 1.0 / sd.sigma_min


def cond_number(m, rtol: float = RANK_RTOL) -> float:
    """``||M^{-1}|| ||M||`` for a square invertible ``M``."""
    op = as_operator(m)
    if op.rows != op.cols:
        raise InvalidParameter(f"cond_number needs a square matrix, got {op.shape}")
    sd = op.spectral
    if not sd.injective(rtol):
        raise Singular(f"matrix is singular (sigma_min = {sd.sigma_min:.3e})")
    return sd.sigma_max / sd.sigma_min


@dataclass(frozen=True)
class PerturbationBound:
    """Outcome of the injectivity perturbation test.

    ``feasible`` is False when ``||A^+|| ||A - B|| >= 1``; in that case no
    claim is made and ``injective``/``bound`` are None.
    """

    feasible: bool
    injective: bool | None
    bound: float | None
    product: float


def perturbed_pinv_bound(a, b, rtol: float = RANK_RTOL) -> PerturbationBound:
    """Bound ``||B^+||`` from ``||A^+||`` and ``||A - B||``.

    If ``A`` is injective and ``||A^+|| ||A - B|| < 1`` then ``B`` is
    injective and ``||B^+|| <= ||A^+|| / (1 - ||A^+|| ||A - B||)``.
    """
    opa, opb = as_operator(a), as_operator(b)
    if opa.shape != opb.shape:
        raise InvalidParameter(f"shape mismatch {opa.shape} vs {opb.shape}")
    na = pinv_norm(opa, rtol)
    prod = na * spectral_norm(opa.entries - opb.entries)
    if prod >= 1.0:
        return PerturbationBound(False, None, None, prod)
    return PerturbationBound(True, True, na / (1.0 - prod), prod)
