"""Adaptive Simpson quadrature, vectorized across intervals.

Intervals are refined breadth first: every pass evaluates the integrand on
all still-unconverged panels at once, so an integrand that accepts numpy
arrays is called O(max_depth) times instead of once per point.

``integrate_from_zero`` handles an integrable singularity at the left
endpoint (e.g. ``u**(p - 1)`` with ``0 < p < 1``) with a dyadic graded
mesh toward 0 and a geometric extrapolation of the unresolved tail.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import QuadratureFailure

MAX_DEPTH = 50
MAX_EVALS = 50_000_000
CHUNK = 512
TINY = np.finfo(float).tiny
TOL_CAP = 1e300


def vectorized(func):
    """Return a version of ``func`` that maps float arrays to float arrays."""

    def call(x):
        x = np.asarray(x, dtype=float)
        try:
            with np.errstate(all="ignore"), warnings.catch_warnings():
                # size-1 arrays passed to scalar code warn instead of failing
                warnings.simplefilter("error", DeprecationWarning)
                y = np.asarray(func(x), dtype=float)
            if y.shape == x.shape:
                return y
        except (TypeError, ValueError, DeprecationWarning):
            pass
        return np.vectorize(lambda v: float(func(float(v))), otypes=[float])(x)

    return call


def _simpson_panels(g, a, b, tol, owner, n_owner, max_depth=MAX_DEPTH):
    """Integrate ``g(x, owner_idx)`` over panels ``[a_i, b_i]``.

    Each panel contributes to ``result[owner_i]``. Returns (result, error).
    """
    result = np.zeros(n_owner)
    error = np.zeros(n_owner)
    m = 0.5 * (a + b)
    fa, fm, fb = g(a, owner), g(m, owner), g(b, owner)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    depth = 0
    evals = 3 * a.size
    while a.size:
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = g(lm, owner), g(rm, owner)
        evals += 2 * a.size
        half = (b - a) / 12.0
        left = half * (fa + 4.0 * flm + fm)
        right = half * (fm + 4.0 * frm + fb)
        diff = left + right - whole
        if not np.all(np.isfinite(diff)):
            raise QuadratureFailure("integrand produced non-finite values")
        done = np.abs(diff) <= 15.0 * tol
        if np.any(done):
            np.add.at(result, owner[done], left[done] + right[done] + diff[done] / 15.0)
            np.add.at(error, owner[done], np.abs(diff[done]) / 15.0)
        keep = ~done
        if not np.any(keep):
            break
        depth += 1
        if depth > max_depth:
            raise QuadratureFailure(f"adaptive Simpson exceeded depth {max_depth}")
        if evals > MAX_EVALS:
            raise QuadratureFailure(f"adaptive Simpson exceeded {MAX_EVALS} evaluations")
        a, m, b = a[keep], m[keep], b[keep]
        fa, fm, fb = fa[keep], fm[keep], fb[keep]
        lm, rm, flm, frm = lm[keep], rm[keep], flm[keep], frm[keep]
        left, right = left[keep], right[keep]
        tol, owner = tol[keep] / 2.0, owner[keep]
        a = np.concatenate([a, m])
        b = np.concatenate([m, b])
        m = np.concatenate([lm, rm])
        fa, fm, fb = np.concatenate([fa, fm]), np.concatenate([flm, frm]), np.concatenate([fm, fb])
        whole = np.concatenate([left, right])
        tol = np.concatenate([tol, tol])
        owner = np.concatenate([owner, owner])
    return result, error


def adaptive_simpson(func, a, b, tol=1e-10, max_depth=MAX_DEPTH):
    """Integrate ``func`` over ``[a, b]`` (arrays broadcast) to absolute ``tol``.

    Returns ``(value, error_estimate)`` with the shape of the broadcast bounds.
    """
    f = vectorized(func)
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    shape = a.shape
    a, b = a.ravel().copy(), b.ravel().copy()
    sign = np.where(b < a, -1.0, 1.0)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    owner = np.arange(lo.size)
    val, err = _simpson_panels(
        lambda x, _o: f(x), lo, hi, np.full(lo.size, float(tol)), owner, lo.size, max_depth
    )
    val = (sign * val).reshape(shape)
    err = err.reshape(shape)
    if not shape:
        return float(val), float(err)
    return val, err


def integrate_from_zero(func, upper, tol=1e-10, moment=0, levels=64, max_depth=MAX_DEPTH):
    """Compute ``int_0^t func(u) u**moment du`` for each ``t`` in ``upper``.

    ``func`` may be singular (but integrable) at 0. The substitution
    ``u = t s`` maps every integral to ``[0, 1]``, which is split at
    ``2**-j`` for ``j < levels``; the piece ``[0, 2**-levels]`` is estimated
    by extrapolating the ratio of the last two dyadic contributions.
    """
    f = vectorized(func)
    t = np.atleast_1d(np.asarray(upper, dtype=float)).ravel()
    scalar = np.ndim(upper) == 0
    if np.any(t < 0):
        raise ValueError("upper limits must be nonnegative")
    value = np.zeros(t.size)
    error = np.zeros(t.size)
    nz = np.flatnonzero(t > 0)
    edges = 2.0 ** -np.arange(levels + 1)
    lo_s, hi_s = edges[1:], edges[:-1]
    for start in range(0, nz.size, CHUNK):
        idx = nz[start:start + CHUNK]
        tc = t[idx]
        scale = tc ** (moment + 1)
        n_own = idx.size * levels
        owner = np.arange(n_own)
        which = owner // levels
        a = np.tile(lo_s, idx.size)
        b = np.tile(hi_s, idx.size)
        # absolute tol on the unscaled integral, spread over the pieces
        with np.errstate(over="ignore", divide="ignore"):
            tol_p = np.repeat(np.minimum(tol / (levels + 1) / scale, TOL_CAP), levels)

        def g(s, own):
            w = tc[which[own]]
            # keep u a normal float when t itself is tiny
            out = f(np.maximum(w * s, TINY))
            return out * s ** moment if moment else out

        pieces, perr = _simpson_panels(g, a, b, tol_p, owner, n_own, max_depth)
        pieces = pieces.reshape(idx.size, levels)
        perr = perr.reshape(idx.size, levels)
        tail, tail_err = _geometric_tail(pieces)
        value[idx] = scale * (pieces.sum(axis=1) + tail)
        error[idx] = scale * (perr.sum(axis=1) + tail_err)
    if scalar:
        return float(value[0]), float(error[0])
    shape = np.shape(upper)
    return value.reshape(shape), error.reshape(shape)


def _geometric_tail(pieces):
    p1, p2, p3 = pieces[:, -1], pieces[:, -2], pieces[:, -3]
    tail = np.zeros(pieces.shape[0])
    err = np.zeros(pieces.shape[0])
    live = p1 != 0.0
    if not np.any(live):
        return tail, err
    with np.errstate(divide="ignore", invalid="ignore"):
        r = p1 / p2
        r_prev = p2 / p3
    bad = live & ~((r >= 0.0) & (r < 1.0))
    if np.any(bad):
        raise QuadratureFailure("integrand does not look integrable at 0 (tail ratio >= 1)")
    tail[live] = p1[live] * r[live] / (1.0 - r[live])
    prev = np.where(np.isfinite(r_prev) & (r_prev < 1.0), p1 * r_prev / (1.0 - r_prev), tail)
    err[live] = np.abs(tail[live] - prev[live])
    return tail, err
