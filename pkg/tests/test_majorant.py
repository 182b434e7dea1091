import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from majgn.errors import InvalidParameter, OutOfDomain, OutOfRadius
from majgn.majorant import (PURE_GN, GeneralizedLipschitzParams, HolderParams,
                            MajorantFunction, PowerSum, SmaleParams, SolverRates, check_h3,
                            glip_majorant, holder_majorant, holder_radius_closed_form,
                            lipschitz_majorant, majorant_from_dict, majorant_sequence,
                            majorant_to_dict, newton_map, radii, radius_nu, radius_report,
                            radius_rho, smale_majorant, smale_radius_closed_form)


@pytest.fixture(scope="module")
def lip1():
    return lipschitz_majorant(1.0)


@pytest.fixture(scope="module")
def smale1():
    return smale_majorant(SmaleParams(1.0))


# -- rates and parameter validation -------------------------------------------

@pytest.mark.parametrize("w1, w2, th", [(1, 0.6, 0.5), (1, 1, 0), (0.5, 0.5, 0), (1, 0, 1.0),
                                        (1, -0.1, 0), (1, 0, -0.1)])
def test_invalid_rates(w1, w2, th):
    with pytest.raises(InvalidParameter):
        SolverRates(w1, w2, th)


def test_invalid_rates_message_names_invariant():
    with pytest.raises(InvalidParameter, match="ω1ϑ\\+ω2 ≥ 1"):
        SolverRates(1.0, 0.6, 0.5)


def test_parameter_validation():
    with pytest.raises(InvalidParameter):
        HolderParams(0.0, 1.0)
    with pytest.raises(InvalidParameter):
        HolderParams(1.0, 1.5)
    with pytest.raises(InvalidParameter):
        SmaleParams(-1.0)
    with pytest.raises(InvalidParameter):
        GeneralizedLipschitzParams(PowerSum([[0.0, 0.0]]))


def test_h1_and_h2_checked():
    with pytest.raises(InvalidParameter, match="h1"):
        MajorantFunction(lambda t: t * t - 2 * t, lambda t: 2 * t - 2.0)
    with pytest.raises(InvalidParameter, match="h2"):
        MajorantFunction(lambda t: np.sin(t) - 2 * t, lambda t: np.cos(t) - 2.0 + 0 * t)


# -- Newton map -----------------------------------------------------------------

def test_newton_map_holder(lip1):
    assert newton_map(lip1, 0.5) == pytest.approx(-0.25, rel=1e-14)
    assert newton_map(lip1, 0.0) == 0.0


def test_newton_map_smale(smale1):
    assert newton_map(smale1, 0.2) == pytest.approx(-1 / 7, rel=1e-14)


@pytest.mark.parametrize("t", [0.01, 0.1, 0.25, 0.29])
def test_smale_gap_matches_direct_formula(smale1, t):
    direct = t - smale1(t) / smale1.deriv(t)
    assert newton_map(smale1, t) == pytest.approx(direct, rel=1e-12)


def test_newton_map_out_of_domain(lip1):
    with pytest.raises(OutOfDomain):
        newton_map(lip1, 1.5)


@pytest.mark.parametrize("make", [
    lambda: lipschitz_majorant(1.0), lambda: holder_majorant(HolderParams(2.0, 0.5)),
    lambda: smale_majorant(SmaleParams(3.0)),
    lambda: glip_majorant(GeneralizedLipschitzParams(PowerSum([[0.5, -0.5], [1.0, 0.0]]))),
])
def test_newton_map_negative_and_vanishing(make):
    f = make()
    nu = radius_nu(f)
    ts = np.geomspace(1e-8 * nu, (1 - 1e-6) * nu, 60)
    assert np.all(np.asarray(newton_map(f, ts)) < 0)
    small = np.array([1e-4, 1e-5, 1e-6, 1e-7, 1e-8]) * nu
    q = np.asarray(f.newton_gap(small)) / small
    assert np.all(q < 1e-2) and np.all(np.diff(q) < 0)


# -- nu ----------------------------------------------------------------------

def test_nu_examples(lip1, smale1):
    assert radius_nu(lip1) == pytest.approx(1.0, rel=1e-12)
    assert radius_nu(smale1) == pytest.approx(1 - 1 / math.sqrt(2), rel=1e-12)
    const = glip_majorant(GeneralizedLipschitzParams(PowerSum([[1.0, 0.0]])))
    assert radius_nu(const) == pytest.approx(1.0, rel=1e-10)


def test_nu_is_domain_when_derivative_stays_negative():
    f = MajorantFunction(lambda t: 0.25 * t * t - t, lambda t: 0.5 * t - 1.0, R=1.0)
    assert radius_nu(f) == 1.0


# -- rho ------------------------------------------------------------------------

def test_rho_examples(lip1, smale1):
    assert radius_rho(lip1, PURE_GN) == pytest.approx(2 / 3, rel=1e-10)
    assert radius_rho(smale1, PURE_GN) == pytest.approx((5 - math.sqrt(17)) / 4, rel=1e-10)
    half = holder_majorant(HolderParams(1.0, 0.5))
    assert radius_rho(half, PURE_GN) == pytest.approx(0.5625, rel=1e-10)


def test_rho_generic_gap_agrees():
    half = holder_majorant(HolderParams(1.0, 0.5), closed_gap=False)
    assert radius_rho(half, PURE_GN) == pytest.approx(0.5625, rel=1e-9)


def test_rho_scan_route(monkeypatch):
    import majgn.majorant as mj
    monkeypatch.setattr(mj, "check_h3", lambda *a, **k: False)
    rho, method = mj._rho_with_method(holder_majorant(HolderParams(1.0, 0.5)), PURE_GN)
    assert method == "scan"
    assert rho == pytest.approx(0.5625, rel=1e-10)


def test_closed_form_examples():
    assert holder_radius_closed_form(HolderParams(1, 1), PURE_GN).r == pytest.approx(2 / 3)
    assert holder_radius_closed_form(HolderParams(2, 1), PURE_GN, kappa=0.1).r == 0.1
    r = holder_radius_closed_form(HolderParams(1, 1), SolverRates(1, 0.5, 0)).r
    assert r == pytest.approx(0.5, rel=1e-14)
    s1 = smale_radius_closed_form(SmaleParams(1), PURE_GN).r
    assert s1 == pytest.approx(0.2192235935955849, rel=1e-14)
    assert smale_radius_closed_form(SmaleParams(2), PURE_GN).r == pytest.approx(s1 / 2, rel=1e-14)
    assert smale_radius_closed_form(SmaleParams(1), PURE_GN, kappa=0.1).r == 0.1


GRID = [SolverRates(w1, w2, th) for th in (0.0, 0.1, 0.3) for w1 in (1.0, 1.2, 0.8)
        for w2 in (0.0, 0.1, 0.3) if w2 < w1 and w1 * th + w2 < 1]


@pytest.mark.parametrize("rates", GRID, ids=str)
def test_numeric_rho_matches_closed_forms(rates):
    for K, p in [(1.0, 1.0), (2.5, 0.5)]:
        f = holder_majorant(HolderParams(K, p))
        want = holder_radius_closed_form(HolderParams(K, p), rates).rho
        assert radius_rho(f, rates) == pytest.approx(want, rel=1e-8)
    f = smale_majorant(SmaleParams(1.7))
    want = smale_radius_closed_form(SmaleParams(1.7), rates).rho
    assert radius_rho(f, rates) == pytest.approx(want, rel=1e-8)


def test_radius_report_invariants(lip1):
    rr = radius_report(lip1, SolverRates(1, 0.1, 0.1), kappa=0.3)
    assert rr.r == min(rr.kappa, rr.rho) == 0.3
    assert rr.rho <= rr.nu
    assert rr.methods["rho"] in ("bisection", "scan")
    assert radii(lip1, PURE_GN).methods["rho"] == "closed_form"


@pytest.mark.parametrize("rates", GRID[::4], ids=str)
def test_contraction_on_zero_rho(lip1, rates):
    rho = radius_rho(lip1, rates)
    ts = np.linspace(rho * 1e-3, rho * (1 - 1e-6), 200)
    nxt = rates.gain * lip1.newton_gap(ts) + rates.linear_rate * ts
    assert np.all(nxt > 0) and np.all(nxt < ts)


# -- generalized Lipschitz ---------------------------------------------------------

def test_glip_constant_L_matches_lipschitz():
    K = 1.7
    g = glip_majorant(GeneralizedLipschitzParams(PowerSum([[K, 0.0]])))
    ts = np.linspace(0.0, 1.0 / K, 20)
    np.testing.assert_allclose(g(ts), K * ts ** 2 / 2 - ts, atol=1e-10)
    np.testing.assert_allclose(g.deriv(ts), K * ts - 1, atol=1e-10)


def test_glip_decreasing_L_matches_holder():
    g = glip_majorant(GeneralizedLipschitzParams(PowerSum([[0.5, -0.5]])))
    ts = np.linspace(0.0, 0.99, 15)
    np.testing.assert_allclose(g.deriv(ts), np.sqrt(ts) - 1.0, atol=1e-10)
    np.testing.assert_allclose(g(ts), ts ** 1.5 / 1.5 - ts, atol=1e-10)


def test_glip_rejects_zero_L():
    with pytest.raises(InvalidParameter):
        glip_majorant(GeneralizedLipschitzParams(lambda u: 0.0 * np.asarray(u)))


def test_glip_accepts_scalar_callable():
    g = glip_majorant(GeneralizedLipschitzParams(lambda u: 2.0))
    assert g.deriv(0.25) == pytest.approx(-0.5, abs=1e-10)


# -- majorant sequence ----------------------------------------------------------------

def test_sequence_example(lip1):
    ts = majorant_sequence(lip1, PURE_GN, 0.5, 3)
    assert ts[1] == pytest.approx(0.25, rel=1e-14)
    assert ts[2] == pytest.approx(0.0625 / 1.5, rel=1e-14)


def test_sequence_inexact_step(lip1):
    t0 = 0.3
    rates = SolverRates(1.0, 0.0, 0.1)
    t1 = majorant_sequence(lip1, rates, t0, 1)[1]
    assert t1 == pytest.approx(1.1 * t0 ** 2 / (2 * (1 - t0)) + 0.1 * t0, rel=1e-14)
    generic = holder_majorant(HolderParams(1.0, 1.0), closed_gap=False)
    assert majorant_sequence(generic, rates, t0, 1)[1] == pytest.approx(t1, rel=1e-12)


def test_sequence_out_of_radius(lip1):
    with pytest.raises(OutOfRadius):
        majorant_sequence(lip1, PURE_GN, 0.7, 3)


@settings(max_examples=60, deadline=None)
@given(frac=st.floats(0.01, 0.99), idx=st.integers(0, len(GRID) - 1),
       fam=st.sampled_from(["lip", "half", "smale"]))
def test_sequence_strictly_decreasing(frac, idx, fam):
    f = {"lip": lipschitz_majorant(1.0), "half": holder_majorant(HolderParams(1.0, 0.5)),
         "smale": smale_majorant(SmaleParams(1.0))}[fam]
    rates = GRID[idx]
    rho = radii(f, rates).rho
    ts = np.array(majorant_sequence(f, rates, frac * rho, 30, rho=rho))
    pos = ts[ts > 0]
    assert np.all(np.diff(pos) < 0) and pos[0] < rho


def test_sequence_ratio_limit(lip1):
    rates = SolverRates(1.0, 0.2, 0.1)
    ts = majorant_sequence(lip1, rates, 0.3, 200)
    nu = radius_nu(lip1)
    tail = [(a, b) for a, b in zip(ts, ts[1:]) if 0 < a < 1e-8 * nu]
    assert tail
    for a, b in tail:
        assert b / a == pytest.approx(rates.linear_rate, abs=1e-6)


# -- h3 -------------------------------------------------------------------------

def test_h3_examples(lip1, smale1):
    assert check_h3(lip1, 1.0)
    assert check_h3(smale1, 1.0)
    half = holder_majorant(HolderParams(2.0, 0.5))
    assert check_h3(half, 0.5)
    assert not check_h3(half, 1.0)
    # f' = e^t - 2 is convex: h3 for p = 1
    conv = MajorantFunction(lambda t: np.expm1(t) - 2 * np.asarray(t), lambda t: np.exp(t) - 2.0)
    assert check_h3(conv, 1.0)


# -- serialization ----------------------------------------------------------------

@pytest.mark.parametrize("d", [
    {"family": "holder", "K": 2.0, "p": 0.5}, {"family": "smale", "gamma": 0.5},
    {"family": "glip", "L": {"terms": [[0.5, -0.5], [1.0, 0.0]]}, "tol": 1e-10},
])
def test_dict_round_trip(d):
    f = majorant_from_dict(d)
    assert majorant_to_dict(f) == d


def test_dict_lipschitz_alias():
    f = majorant_from_dict({"family": "lipschitz", "K": 3.0})
    assert f.family == "holder" and f.params.p == 1.0


def test_dict_unknown_family():
    with pytest.raises(InvalidParameter):
        majorant_from_dict({"family": "nope"})
