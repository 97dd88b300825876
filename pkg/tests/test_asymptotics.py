"""Closed-form and semi-closed-form asymptotics tests.

Oracles: hand-evaluated closed forms, quadrature of defining integrals,
brute-force tensor quadrature with scipy's independent 2F1, and exact
algebraic collapses (SABR flatness, beta = 0 reductions).
"""

import math

import numpy as np
import pytest
import scipy.special

from vixsmile.asymptotics import (
    AsymptoteResult,
    DegenerateModelError,
    FormulaId,
    evaluate,
    heston_vix_skew_sign,
    rv_atmi_approx,
    rv_atmi_limit,
    rv_skew_constant,
    rv_skew_limit,
    sabr_mixed_vix_skew,
    vix_atmi_approx,
    vix_atmi_limit,
    vix_skew_approx,
    vix_skew_limit,
    window_integrals,
)
from vixsmile.model import HestonParams, ModelParams
from vixsmile.specfun import QuadSpec, integrate

DELTA = 30.0 / 365.0


def mk(v0=0.04, H=0.3, beta=0.0, gamma=1.0, nu=2.0, eta=0.0):
    return ModelParams(v0=v0, H=H, beta=beta, gamma=gamma, nu=nu, eta=eta)


# ---------------------------------------------------------------------------
# window moments
# ---------------------------------------------------------------------------

def test_window_integrals_unit_case():
    wi = window_integrals(mk(H=0.5, beta=0.0), 1.0)
    assert wi.int_kernel == pytest.approx(1.0, abs=1e-14)
    assert wi.int_kernel_sq == pytest.approx(1.0, abs=1e-14)


def test_window_integrals_power_law():
    wi = window_integrals(mk(H=0.3, beta=0.0), DELTA)
    assert wi.int_kernel == pytest.approx(DELTA ** 0.8 / 0.8, rel=1e-14)
    assert wi.int_kernel_sq == pytest.approx(DELTA ** 0.6 / 0.6, rel=1e-14)


def test_window_integrals_damped_vs_quadrature():
    wi = window_integrals(mk(H=0.3, beta=2.0), DELTA)
    spec = QuadSpec(abs_tol=1e-13, rel_tol=1e-12, singular_left=True,
                    singular_exponent=-0.2)
    oracle = integrate(lambda u: u ** -0.2 * np.exp(-2.0 * u), 0.0, DELTA, spec)
    assert wi.int_kernel == pytest.approx(oracle, abs=1e-10)


# ---------------------------------------------------------------------------
# VIX ATM level
# ---------------------------------------------------------------------------

def test_vix_atmi_limit_sabr_is_half_volvol():
    assert vix_atmi_limit(mk(H=0.5, nu=2.0), DELTA) == pytest.approx(1.0, abs=1e-13)
    # The SABR limit does not depend on the window size.
    assert vix_atmi_limit(mk(H=0.5, nu=2.0), 0.25) == pytest.approx(1.0, abs=1e-13)


def test_vix_atmi_limit_zero_volvol():
    assert vix_atmi_limit(mk(nu=0.0, eta=0.0), DELTA) == 0.0


def test_vix_atmi_limit_mixed_plugin():
    value = vix_atmi_limit(mk(gamma=0.5, nu=2.0, eta=1.0, H=0.3), DELTA)
    expected = (1.5 * math.sqrt(0.6) / (2.0 * DELTA)) * DELTA ** 0.8 / 0.8
    assert value == pytest.approx(expected, rel=1e-13)


def test_vix_atmi_limit_v0_invariance():
    values = {vix_atmi_limit(mk(v0=v0), DELTA) for v0 in (0.01, 0.04, 0.25)}
    assert max(values) - min(values) <= 1e-14


def test_vix_atmi_limit_homogeneous_in_volvol():
    base = vix_atmi_limit(mk(gamma=0.4, nu=2.0, eta=0.5), DELTA)
    scaled = vix_atmi_limit(mk(gamma=0.4, nu=6.0, eta=1.5), DELTA)
    assert scaled == pytest.approx(3.0 * base, rel=1e-13)


def test_vix_atmi_limit_nonincreasing_in_beta():
    values = [vix_atmi_limit(mk(beta=b), DELTA) for b in (0.0, 0.5, 1.0, 2.0, 5.0)]
    assert all(b <= a + 1e-14 for a, b in zip(values, values[1:]))


def test_vix_atmi_approx_consistent_with_limit():
    for params in (mk(H=0.3), mk(H=0.3, beta=1.5), mk(H=0.45, gamma=0.5, nu=3.0, eta=1.0)):
        limit = vix_atmi_limit(params, DELTA)
        approx = vix_atmi_approx(params, DELTA, 1e-6)
        assert approx == pytest.approx(limit, rel=1e-3), params


def test_vix_atmi_approx_zero_volvol():
    assert vix_atmi_approx(mk(nu=0.0, eta=0.0), DELTA, 0.25) == 0.0


def test_vix_atmi_approx_rejects_bad_maturity():
    with pytest.raises(ValueError):
        vix_atmi_approx(mk(), DELTA, 0.0)


# ---------------------------------------------------------------------------
# VIX skew
# ---------------------------------------------------------------------------

def test_vix_skew_limit_sabr_flat():
    assert vix_skew_limit(mk(H=0.5, nu=2.0), DELTA) == 0.0


def test_vix_skew_limit_mixed_sabr_quarter():
    value = vix_skew_limit(mk(H=0.5, gamma=0.5, nu=3.0, eta=1.0), DELTA)
    assert value == pytest.approx(0.25, abs=1e-12)


def test_vix_skew_limit_equal_volvols_collapse():
    assert vix_skew_limit(mk(H=0.5, gamma=0.3, nu=1.7, eta=1.7), DELTA) == pytest.approx(
        0.0, abs=1e-13
    )


def test_vix_skew_limit_degenerate_model():
    with pytest.raises(DegenerateModelError):
        vix_skew_limit(mk(nu=0.0, eta=0.0), DELTA)


def test_sabr_mixed_vix_skew_values():
    assert sabr_mixed_vix_skew(0.5, 3.0, 1.0) == pytest.approx(0.25, abs=1e-12)
    assert sabr_mixed_vix_skew(0.0, 3.0, 1.0) == 0.0
    assert sabr_mixed_vix_skew(1.0, 3.0, 1.0) == 0.0
    assert sabr_mixed_vix_skew(0.37, 2.2, 2.2) == pytest.approx(0.0, abs=1e-13)


def test_sabr_mixed_vix_skew_matches_limit_at_sabr_config():
    for gamma, nu, eta in [(0.5, 3.0, 1.0), (0.25, 2.0, 0.5)]:
        direct = sabr_mixed_vix_skew(gamma, nu, eta)
        via_limit = vix_skew_limit(mk(H=0.5, gamma=gamma, nu=nu, eta=eta), DELTA)
        assert direct == pytest.approx(via_limit, abs=1e-12)


def test_sabr_mixed_vix_skew_positive_for_true_mixtures():
    for gamma in np.linspace(0.1, 0.9, 9):
        for nu, eta in [(3.0, 1.0), (2.0, 0.5)]:
            assert sabr_mixed_vix_skew(float(gamma), nu, eta) > 0.0


def test_vix_skew_approx_mixed_sabr_flat_in_maturity():
    params = mk(H=0.5, gamma=0.5, nu=3.0, eta=1.0)
    for maturity in (1.0 / 12.0, 0.25, 0.5):
        assert vix_skew_approx(params, DELTA, maturity) == pytest.approx(
            0.25, abs=1e-9
        )


def test_vix_skew_approx_consistent_with_limit():
    params = mk(H=0.3, gamma=0.5, nu=3.0, eta=1.0)
    limit = vix_skew_limit(params, DELTA)
    assert vix_skew_approx(params, DELTA, 1e-5) == pytest.approx(limit, rel=1e-2)


def test_vix_skew_approx_sabr_collapse_zero():
    params = mk(H=0.5, gamma=0.4, nu=1.3, eta=1.3)
    assert vix_skew_approx(params, DELTA, 0.3) == pytest.approx(0.0, abs=1e-9)


def test_vix_skew_approx_brute_force_oracle_rough_case():
    # Direct tensor quadrature of the nested display
    #   int_0^T Kbar(s) int_s^T Kbar(u) I(s,u) du ds, with
    #   I(s,u) = int_T^(T+delta) k(r-s) k(r-u) dr,
    # against the factorised evaluation inside vix_skew_approx.
    from vixsmile.asymptotics import _skew_numerators, _window_kernel
    from vixsmile.model import kernel

    params = mk(H=0.35, beta=0.7)
    maturity = 0.05
    n = 90
    cross, _, w_int, _ = _skew_numerators(params, DELTA, maturity)
    s_nodes = (np.arange(n) + 0.5) * maturity / n
    total = 0.0
    for s in s_nodes:
        u_nodes = s + (np.arange(n) + 0.5) * (maturity - s) / n
        kb_s = _window_kernel(params, DELTA, maturity, float(s))
        kb_u = _window_kernel(params, DELTA, maturity, u_nodes)
        inner = np.array([
            integrate(
                lambda r: kernel(params, r - float(s)) * kernel(params, r - float(u)),
                maturity, maturity + DELTA,
                QuadSpec(abs_tol=1e-15, rel_tol=1e-9),
            )
            for u in u_nodes
        ])
        total += kb_s * float(kb_u @ inner) * (maturity - s) / n * maturity / n
    assert cross == pytest.approx(total, rel=2e-3)


# ---------------------------------------------------------------------------
# RV ATM level
# ---------------------------------------------------------------------------

def test_rv_atmi_limit_values():
    assert rv_atmi_limit(mk(H=0.5, nu=2.0)) == pytest.approx(2.0 / math.sqrt(3.0), rel=1e-13)
    assert rv_atmi_limit(mk(nu=0.0, eta=0.0)) == 0.0
    expected = 2.0 * math.sqrt(0.2) / (0.6 * math.sqrt(2.2))
    assert rv_atmi_limit(mk(H=0.1, nu=2.0)) == pytest.approx(expected, rel=1e-13)
    assert expected == pytest.approx(1.005038, abs=1e-6)


def test_rv_atmi_limit_independent_of_beta_and_v0():
    base = rv_atmi_limit(mk(H=0.25))
    assert rv_atmi_limit(mk(H=0.25, beta=3.0)) == base
    for v0 in (0.01, 0.09):
        assert rv_atmi_limit(mk(H=0.25, v0=v0)) == pytest.approx(base, rel=1e-14)


def test_rv_atmi_approx_beta_zero_reduction_exact():
    params = mk(H=0.3)
    for maturity in (0.05, 0.25, 1.0):
        expected = rv_atmi_limit(params) * maturity ** (params.H - 0.5)
        assert rv_atmi_approx(params, maturity) == pytest.approx(expected, rel=1e-12)


def test_rv_atmi_approx_beta_positive_consistency():
    params = mk(H=0.3, beta=1.0)
    maturity = 1e-6
    rescaled = maturity ** (0.5 - params.H) * rv_atmi_approx(params, maturity)
    assert rescaled == pytest.approx(rv_atmi_limit(params), rel=1e-3)


def test_rv_atmi_approx_quadrature_oracle_beta_positive():
    # Brute midpoint evaluation of the double integral for beta > 0.
    params = mk(H=0.3, beta=1.0)
    maturity = 0.25
    n = 4000
    s = (np.arange(n) + 0.5) * maturity / n
    inner = np.array([
        integrate(
            lambda u: (u - float(si)) ** (params.H - 0.5) * np.exp(-params.beta * (u - float(si))),
            float(si), maturity,
            QuadSpec(abs_tol=1e-14, rel_tol=1e-11, singular_left=True,
                     singular_exponent=params.H - 0.5),
        )
        for si in s[:: n // 40]
    ])
    # coarse check on a thinned grid: compare the integrand profile
    closed = params.beta ** -(params.H + 0.5) * np.array([
        scipy.special.gammainc(params.H + 0.5, params.beta * (maturity - float(si)))
        * scipy.special.gamma(params.H + 0.5)
        for si in s[:: n // 40]
    ])
    np.testing.assert_allclose(inner, closed, rtol=1e-9)
    value = rv_atmi_approx(params, maturity)
    pref = params.volvol_mean * math.sqrt(2.0 * params.H)
    full_inner = params.beta ** -(params.H + 0.5) * scipy.special.gammainc(
        params.H + 0.5, params.beta * (maturity - s)
    ) * scipy.special.gamma(params.H + 0.5)
    brute = pref / maturity ** 1.5 * math.sqrt(float(np.sum(full_inner ** 2)) * maturity / n)
    assert value == pytest.approx(brute, rel=1e-5)


# ---------------------------------------------------------------------------
# RV skew constant and limit
# ---------------------------------------------------------------------------

def test_rv_skew_constant_classical_case_closed_form():
    # H = 1/2: the hypergeometric factor is 1 and the nested integral
    # evaluates to T^5/15, so the constant is exactly 1/15.
    assert rv_skew_constant(0.5) == pytest.approx(1.0 / 15.0, rel=1e-9)


def test_rv_skew_constant_probe_invariance():
    for hurst in (0.1, 0.3, 0.5):
        a = rv_skew_constant(hurst, 1e-3)
        b = rv_skew_constant(hurst, 1e-4)
        assert abs(a - b) / b <= 5e-3, hurst


def test_rv_skew_constant_positive():
    for hurst in (0.05, 0.1, 0.2, 0.3, 0.4, 0.5):
        assert rv_skew_constant(hurst) > 0.0


def test_rv_skew_constant_brute_force_tensor_oracle():
    # Independent route: raw (s, u) tensor quadrature using scipy's 2F1,
    # with the inner substitution w = (u-s)^(H+1/2).
    hurst, t_probe = 0.3, 1e-4
    q = 1.0 / (hurst + 0.5)
    n = 260
    s = (np.arange(n) + 0.5) * t_probe / n
    xi = ((np.arange(n) + 0.5) / n)[None, :]
    w_max = (t_probe - s)[:, None] ** (hurst + 0.5)
    u = s[:, None] + (w_max * xi) ** q
    z = (t_probe - u) / (s[:, None] - u)
    hyp = scipy.special.hyp2f1(0.5 - hurst, hurst + 0.5, hurst + 1.5, z)
    inner = np.sum((t_probe - u) ** (2.0 * hurst + 1.0) * hyp, axis=1) * (
        w_max[:, 0] / n
    ) / (hurst + 0.5) ** 2
    outer = float(np.sum((t_probe - s) ** (hurst + 0.5) * inner)) * t_probe / n
    oracle = outer / t_probe ** (4.0 * hurst + 3.0)
    assert rv_skew_constant(hurst, t_probe) == pytest.approx(oracle, rel=5e-3)


def test_rv_skew_limit_equal_volvol_collapse():
    hurst, c = 0.3, 1.4
    params = mk(H=hurst, gamma=0.6, nu=c, eta=c)
    overlap = rv_skew_constant(hurst)
    expected = math.sqrt(2.0 * hurst) * c * (
        overlap * (2.0 * hurst + 2.0) ** 1.5 * (hurst + 0.5)
        - 1.0 / ((2.0 * hurst + 1.0) * math.sqrt(2.0 * hurst + 2.0))
    )
    assert rv_skew_limit(params) == pytest.approx(expected, rel=1e-12)


def test_rv_skew_limit_homogeneous_in_volvol():
    base = rv_skew_limit(mk(H=0.2, gamma=0.5, nu=2.0, eta=0.5))
    scaled = rv_skew_limit(mk(H=0.2, gamma=0.5, nu=4.0, eta=1.0))
    assert scaled == pytest.approx(2.0 * base, rel=1e-12)


def test_rv_skew_constant_rejects_bad_inputs():
    with pytest.raises(ValueError):
        rv_skew_constant(0.0)
    with pytest.raises(ValueError):
        rv_skew_constant(0.3, 1.0)


# ---------------------------------------------------------------------------
# Heston skew sign
# ---------------------------------------------------------------------------

def test_heston_small_reversion_limit():
    with pytest.warns(UserWarning, match="Feller"):
        params = HestonParams(k=1e-6, theta=0.04, nu=0.5, v0=0.04)
    value, sign = heston_vix_skew_sign(params, DELTA)
    assert value == pytest.approx(-(0.5 ** 2) / 4.0, rel=1e-4)
    assert sign == -1


def test_heston_market_conditions_negative():
    params = HestonParams(k=1.0, theta=0.09, nu=0.3, v0=0.09)
    value, sign = heston_vix_skew_sign(params, DELTA)
    k_delta = 1.0 * DELTA
    decay = 1.0 - math.exp(-k_delta)
    expected = (0.3 ** 2 * decay / (4.0 * k_delta)) * (1.0 - 2.0 * decay / k_delta)
    assert value == pytest.approx(expected, rel=1e-12)
    assert sign == -1 and value < 0.0


def test_heston_sign_flip_at_large_reversion():
    params = HestonParams(k=100.0, theta=0.09, nu=0.3, v0=0.09)
    value, sign = heston_vix_skew_sign(params, 1.0)
    assert value > 0.0 and sign == 1


# ---------------------------------------------------------------------------
# formula registry
# ---------------------------------------------------------------------------

def test_evaluate_closed_forms():
    params = mk(H=0.5, gamma=0.5, nu=3.0, eta=1.0)
    res = evaluate(FormulaId.SABR_VIX_SKEW, params, delta=DELTA)
    assert res.value == pytest.approx(0.25, abs=1e-12)
    assert res.quad_error_bound == 0.0
    assert res.inputs_echo["gamma"] == 0.5


def test_evaluate_requires_delta_and_maturity():
    with pytest.raises(ValueError):
        evaluate(FormulaId.VIX_ATMI_LIMIT, mk())
    with pytest.raises(ValueError):
        evaluate(FormulaId.VIX_ATMI_APPROX, mk(), delta=DELTA)


def test_evaluate_heston_requires_heston_params():
    with pytest.raises(ValueError):
        evaluate(FormulaId.HESTON_VIX_SKEW_SIGN, mk(), delta=DELTA)
    res = evaluate(
        FormulaId.HESTON_VIX_SKEW_SIGN,
        HestonParams(k=1.0, theta=0.09, nu=0.3, v0=0.09),
        delta=DELTA,
    )
    assert res.inputs_echo["sign"] == -1


def test_asymptote_result_validates_bound():
    with pytest.raises(ValueError):
        AsymptoteResult(FormulaId.VIX_ATMI_LIMIT, 1.0, {}, quad_error_bound=-1.0)
    with pytest.raises(ValueError):
        AsymptoteResult(FormulaId.VIX_ATMI_LIMIT, 1.0, {}, quad_error_bound=1e-3)
