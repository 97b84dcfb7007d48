import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.special import log_ndtr, ndtr

from annuitize import ShockRegime, derive_coefficients, eval_shock, solve_constant, solve_shock
from annuitize.shock_solver import (
    BranchInconsistency,
    MultipleRootsWarning,
    NoBracket,
    RegimeMismatch,
    classify,
    solve_threshold,
    threshold_equation,
)
from annuitize.verify_oracles import structural_checks

from conftest import random_params, replace


def test_table1_regime_and_thresholds(table1):
    c = derive_coefficients(table1)
    assert c.delta_h < c.beta_h and c.M_beta_l > 0
    assert classify(c, table1.pricing.K) is ShockRegime.P33ii
    sol = solve_shock(table1)
    assert sol.regime is ShockRegime.P33ii1
    assert sol.stopping_region_l.kind == "below"
    assert sol.post_shock.region.kind == "below"
    assert sol.threshold_l > sol.threshold_h
    # regression anchors, cross-checked by test_threshold_against_policy_maximisation
    assert sol.threshold_l == pytest.approx(63161.78906363804, rel=1e-10)
    assert sol.threshold_h == pytest.approx(26436.856897907634, rel=1e-12)


def _stop_below_policy_value(params, b, x):
    """Value of stopping the first time wealth is at or below ``b`` (b above the
    post-shock threshold), from lognormal partial moments and quadrature.

    ``P(x)`` is the value of never stopping before the shock; the stop-below
    rule value is ``P(x) - (x/b)**gm (P(b) - delta_l (b - K))``.
    """
    m, pr, q = params.market, params.prefs, params.mortality
    c = derive_coefficients(params)
    post = solve_constant(params, q.mu_h)
    xh, K, dh, bh = post.threshold, params.pricing.K, c.delta_h, c.beta_h
    g = c.gamma_minus_h
    zh_log = math.log(post.zeta)
    drift, sg = m.theta - m.alpha, m.sigma

    def pm(x, t, p):
        mu = math.log(x) + (drift - 0.5 * sg * sg) * t
        s = sg * math.sqrt(t)
        return math.exp(p * mu + 0.5 * p * p * s * s) * ndtr((math.log(xh) - mu - p * s * s) / s)

    def expected_vh(x, t):
        mu = math.log(x) + (drift - 0.5 * sg * sg) * t
        s = sg * math.sqrt(t)
        low = dh * (pm(x, t, 1) - K * pm(x, t, 0))
        up = bh * (x * math.exp(drift * t) - pm(x, t, 1))
        up += math.exp(zh_log + g * mu + 0.5 * g * g * s * s + log_ndtr((mu + g * s * s - math.log(xh)) / s))
        return low + up

    def P(x):
        run = (m.alpha + pr.nu * q.mu_l) * x / (c.r_l - drift)
        tail = quad(lambda t: math.exp(-c.r_l * t) * expected_vh(x, t), 0, np.inf,
                    limit=400, epsabs=1e-9, epsrel=1e-11)[0]
        return run + q.lambda_l * tail

    gm = c.gamma_minus_l
    return P(x) - (x / b) ** gm * (P(b) - c.delta_l * (b - K)), P, gm


def test_threshold_against_policy_maximisation(table1):
    """The optimal stop-below level maximises ``(P(b) - payoff(b)) b**(-gm)``
    over b; this uses no threshold equation at all."""
    c = derive_coefficients(table1)
    _, P, gm = _stop_below_policy_value(table1, 1e5, 1e5)
    K = table1.pricing.K

    def loss(lb):
        b = math.exp(lb)
        return (P(b) - c.delta_l * (b - K)) * b ** (-gm)

    res = minimize_scalar(loss, bounds=(math.log(3e4), math.log(3e5)), method="bounded",
                          options={"xatol": 1e-10})
    assert math.exp(res.x) == pytest.approx(solve_shock(table1).threshold_l, rel=1e-6)


def test_value_against_policy_value(table1):
    sol = solve_shock(table1)
    for x in (7e4, 1e5, 3e5):
        v, _, _ = _stop_below_policy_value(table1, sol.threshold_l, x)
        assert eval_shock(sol, x) == pytest.approx(v, rel=1e-8)


def test_threshold_residual_and_single_sign_change(table1):
    c = derive_coefficients(table1)
    K = table1.pricing.K
    sol = solve_shock(table1)
    F = threshold_equation(ShockRegime.P33ii1, c, K)
    assert abs(F(sol.threshold_l)) < 1e-10 * abs(c.delta_l * K)
    grid = np.geomspace(sol.threshold_h * (1 + 1e-12), 1e12, 2000)
    s = np.sign(F(grid))
    assert np.count_nonzero(s[:-1] * s[1:] < 0) == 1


def test_regime_mismatch(table1):
    c = derive_coefficients(table1)
    with pytest.raises(RegimeMismatch):
        threshold_equation(ShockRegime.P32i, c, -1.0)


def test_solve_threshold_linear():
    assert solve_threshold(lambda x: x - 5.0) == pytest.approx(5.0, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.2, 4.0), st.floats(1e-3, 1e3), st.floats(-3, 8))
def test_solve_threshold_against_bisection(p, a, log_root):
    root = 10.0 ** log_root
    F = lambda x: a * (np.power(x / root, p) - 1.0)
    lo, hi = 1e-6, 1e12
    for _ in range(4096):
        mid = math.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        if F(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    got = solve_threshold(F, f_scale=a)
    assert got == pytest.approx(0.5 * (lo + hi), rel=1e-9)


def test_solve_threshold_failures():
    with pytest.raises(NoBracket):
        solve_threshold(lambda x: x + 1.0)
    with pytest.warns(MultipleRootsWarning):
        r = solve_threshold(lambda x: (x - 2.0) * (x - 50.0))
    assert r == pytest.approx(2.0)


def test_no_shock_reduces_to_constant_problem(table1):
    q = table1.mortality
    p = replace(table1, mortality__delta=0.0, pricing__mu_hat=q.mu_l, pricing__rho_hat=table1.prefs.rho)
    sol = solve_shock(p)
    const = solve_constant(p, q.mu_l)
    c = sol.coeffs
    assert c.delta_l == pytest.approx(1.0) and c.delta_h == pytest.approx(1.0)
    assert sol.post_shock.threshold == const.threshold
    x = np.geomspace(1e3, 1e7, 50)
    np.testing.assert_allclose(eval_shock(sol, x, "h"), const.value(x), rtol=1e-14)
    np.testing.assert_allclose(eval_shock(sol, x, "l"), const.value(x), rtol=1e-9)


def test_p32ii_closed_forms(examples):
    p = examples["P32ii"]
    sol = solve_shock(p)
    c, K = sol.coeffs, p.pricing.K
    gm, A, S, Md = c.gamma_minus_l, c.drift - c.r_l, c.annuity_yield, c.M_delta_l
    x1 = gm * S * A * K / ((gm - 1) * c.r_l * Md)
    z1 = -((S * K / ((gm - 1) * c.r_l)) ** (1 - gm)) * (gm * A / Md) ** (-gm)
    assert sol.threshold_l == pytest.approx(x1, rel=1e-14)
    assert sol.constants["zeta1_l"] == pytest.approx(z1, rel=1e-10)
    v_l, v_r = sol.pre_shock.one_sided(0, 0)
    s_l, s_r = sol.pre_shock.one_sided(0, 1)
    assert abs(v_l - v_r) < 1e-9 * (1 + abs(v_l))
    assert abs(s_l - s_r) < 1e-9 * abs(s_l)


def test_p33ii2_interior_breakpoint_is_smooth(examples):
    sol = solve_shock(examples["P33ii2"])
    assert sol.threshold_l < sol.threshold_h
    k = sol.pre_shock.labels.index("x2_h")
    v_l, v_r = sol.pre_shock.one_sided(k, 0)
    s_l, s_r = sol.pre_shock.one_sided(k, 1)
    assert abs(v_l - v_r) < 1e-9 * (1 + abs(v_l))
    assert abs(s_l - s_r) < 1e-6 * max(abs(s_l), abs(s_r))


def test_zero_cost_regimes(examples):
    for tag, kind in (("P36stop", "everywhere"), ("P36never", "zero")):
        p = examples[tag]
        c = derive_coefficients(p)
        sol = solve_shock(p)
        assert (c.M_l <= 0) == (tag == "P36stop")
        assert sol.stopping_region_l.kind == kind
    sol = solve_shock(examples["P36never"])
    c = sol.coeffs
    x = np.array([1.0, 1e3, 1e6])
    np.testing.assert_allclose(eval_shock(sol, x), (c.delta_l + c.M_l / (c.r_l - c.drift)) * x, rtol=1e-13)


def test_never_stop_with_fund_dominating(examples):
    p = examples["P34ii"]
    c = derive_coefficients(p)
    assert p.pricing.K > 0 and c.delta_h <= c.beta_h and c.M_beta_l >= 0
    assert solve_shock(p).stopping_region_l.kind == "never"


def test_cost_to_zero_limit(examples):
    p = examples["P32ii"]
    for x in (1e3, 1e5):
        q = replace(p, pricing__K=-1e-6 * x)
        sol = solve_shock(q)
        c = sol.coeffs
        assert sol.regime is ShockRegime.P32ii
        assert sol.threshold_l < 1e-3 * x
        limit = (c.delta_l + c.M_l / (c.r_l - c.drift)) * x
        assert eval_shock(sol, x) == pytest.approx(limit, rel=1e-4)


def test_branch_exclusivity():
    rng = np.random.default_rng(7)
    hits = {"P33ii": 0, "P35i": 0}
    tries = 0
    while sum(hits.values()) < 1000 and tries < 20000:
        tries += 1
        p = random_params(rng, k_sign=rng.choice([-1, 1]))
        fam = classify(derive_coefficients(p), p.pricing.K)
        if fam not in (ShockRegime.P33ii, ShockRegime.P35i):
            continue
        hits[fam.value] += 1
        with warnings.catch_warnings():
            warnings.simplefilter("error", MultipleRootsWarning)
            sol = solve_shock(p)  # raises BranchInconsistency otherwise
        roots = [v for v in sol.candidates.values() if isinstance(v, float)]
        assert len(roots) == 1
        assert sol.regime.family is fam
    assert sum(hits.values()) == 1000 and all(hits.values())


def test_branch_inconsistency_carries_candidates():
    err = BranchInconsistency("x", {"a": 1.0, "b": "no root"})
    assert err.candidates == {"a": 1.0, "b": "no root"}


@pytest.mark.parametrize("sigma", [0.02, 0.03, 0.05])
def test_small_volatility_is_finite(table1, sigma):
    p = replace(table1, market__sigma=sigma)
    sol = solve_shock(p)
    x = np.geomspace(1.0, 1e8, 200)
    assert np.all(np.isfinite(eval_shock(sol, x))) and np.all(np.isfinite(eval_shock(sol, x, "h")))
    bad = [r for r in structural_checks(sol) if not r.passed]
    assert not bad, bad


def test_eval_shock_state_argument(table1):
    sol = solve_shock(table1)
    with pytest.raises(ValueError):
        eval_shock(sol, 1.0, "x")
    b = sol.threshold_l
    assert eval_shock(sol, 0.5 * b) == pytest.approx(
        sol.coeffs.delta_l * (0.5 * b - table1.pricing.K), rel=1e-15)
