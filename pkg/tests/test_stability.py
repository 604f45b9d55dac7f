import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pirk.engine import linear_update_matrix_numeric
from pirk.schemes import (ERK4_C, PIRK4_COEFFS, PIRK1Custom, PIRK2Custom,
                          PIRK3Custom, SchemeId, explicit_padding, pirk_tableau)
from pirk.stability import (OMEGA_PATTERNS, LinearizedCoefficients,
                            ScaledCoefficients, SystemKind, bisect_boundary,
                            classify_system, det_m, det_m4, det_m4_polynomial,
                            explicit_spectrum, fit_xbar, k_values, m_matrix_closed,
                            optimize_pirk4_coefficients, pirk2_sufficient_conditions,
                            pirk3_sufficient_conditions, scan_stability_region,
                            verdict, verify_pirk4_interval, wave_det,
                            wave_eigenvalues, wave_spectral_radius,
                            wave_stability_predicate, wave_x_max)

FAMILY = {1: lambda C: PIRK1Custom(C[0]), 2: lambda C: PIRK2Custom(*C),
          3: lambda C: PIRK3Custom(*C)}
PIRK2B = pirk_tableau(SchemeId.PIRK2b).coefficients
PIRK3B = pirk_tableau(SchemeId.PIRK3b).coefficients


def numeric_m(order, c, C):
    return linear_update_matrix_numeric(pirk_tableau(FAMILY[order](C)), c, 1.0)


# ---------------------------------------------------------------- classify

def test_classify_oscillator():
    cl = classify_system(LinearizedCoefficients(0, 1, 0, 0, -1))
    assert cl.kind is SystemKind.SEPARABLE
    assert cl.sigma_plus == pytest.approx(1j) and cl.sigma_minus == pytest.approx(-1j)


def test_classify_lambda_zero_not_wave_like():
    assert classify_system(LinearizedCoefficients(0, 1, 0, 0, 0)).kind \
        is SystemKind.NOT_WAVE_LIKE


def test_classify_wrong_sign():
    cl = classify_system(LinearizedCoefficients(0, -1, 0, 0, -1))
    assert cl.kind is SystemKind.NOT_WAVE_LIKE
    assert cl.discriminant == 4


def test_classify_wave_like_not_separable():
    # complex eigenvalues from gamma1 while alpha2*lambda > 0
    cl = classify_system(LinearizedCoefficients(0, 1, -2, 0, 1))
    assert cl.kind is SystemKind.WAVE_LIKE


def test_coefficients_must_be_finite():
    with pytest.raises(ValueError):
        LinearizedCoefficients(0, 1, math.nan, 0, -1)


# ---------------------------------------------------------------- closed forms

def test_m1_by_hand():
    M = m_matrix_closed(1, ScaledCoefficients(0, 1, 0, 0, -1), (1.0,))
    np.testing.assert_array_equal(M, [[1, 1], [-1, 0]])


@pytest.mark.parametrize("c1", [-1.0, 0.0, 0.3, 2.0])
def test_m1_without_lambda_is_explicit(c1):
    c = ScaledCoefficients(0.2, -0.7, 0.4, -0.1, 0.0)
    np.testing.assert_allclose(m_matrix_closed(1, c, (c1,)), c.explicit_matrix(),
                               atol=1e-15)


def test_m2_matches_engine():
    rng = np.random.default_rng(2)
    for _ in range(20):
        c = ScaledCoefficients(*rng.uniform(-2, 2, 5))
        np.testing.assert_allclose(m_matrix_closed(2, c, (0.5, 0.0)),
                                   numeric_m(2, c, (0.5, 0.0)), atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_closed_form_matrices_match_engine(order):
    rng = np.random.default_rng(order)
    for _ in range(200):
        c = ScaledCoefficients(*rng.uniform(-2, 2, 5))
        C = tuple(rng.uniform(-1, 2, 2))[:1 if order == 1 else 2]
        np.testing.assert_allclose(m_matrix_closed(order, c, C), numeric_m(order, c, C),
                                   rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_det_closed_form_matches_engine(order):
    rng = np.random.default_rng(10 + order)
    for _ in range(1000):
        c = ScaledCoefficients(*rng.uniform(-2, 2, 5))
        C = tuple(rng.uniform(-1, 2, 2))[:1 if order == 1 else 2]
        E = c.explicit_matrix()
        ref = np.linalg.det(numeric_m(order, c, C))
        got = det_m(order, np.linalg.det(E), np.trace(E), c.s_param, C)
        assert abs(got - ref) <= 1e-12 * max(1.0, abs(ref))


def test_det2_wave_erk2():
    # product of the ERK2 wave eigenvalues 1 - x/2 +- i sqrt(x) is 1 + x^2/4
    for x in (0.5, 1.0, 3.0):
        assert det_m(2, 1.0, 2.0, -x, (0.0, 0.5)) == pytest.approx(1 + x * x / 4)


def test_det3_wave_specialization():
    C1, C2 = 0.3, -0.2
    for x in (0.5, 2.0, 7.0):
        ref = 1 + x * x / 12 * (C1 - 4 * C2) + x ** 3 / 72 * (
            -1 + 3 * (1 - 2 * C1) * (C1 + 4 * C2))
        assert det_m(3, 1.0, 2.0, -x, (C1, C2)) == pytest.approx(ref, rel=1e-13)


def test_det1_explicit_limit():
    assert det_m(1, 0.37, 1.1, 0.0, (0.8,)) == 0.37


def test_det_orders_out_of_range():
    with pytest.raises(ValueError):
        det_m(4, 1, 2, -1, (0, 0))
    with pytest.raises(ValueError):
        m_matrix_closed(4, ScaledCoefficients(0, 1, 0, 0, -1), (0, 0))


# ---------------------------------------------------------------- fourth order

def test_det_m4_without_lambda_is_erk4():
    c = ScaledCoefficients(-0.3, 0.8, 0.2, -0.5, 0.0)
    ref = np.linalg.det(linear_update_matrix_numeric(explicit_padding(4), c, 1.0))
    assert det_m4(c) == pytest.approx(ref, abs=1e-14)


def test_det_m4_is_quintic():
    c = ScaledCoefficients.for_pattern(1.0, -1.0)
    poly = det_m4_polynomial(c)
    assert poly.degree() == 5
    for s in (-3.0, -12.5, -26.0):
        assert poly(s) == pytest.approx(det_m4(ScaledCoefficients.for_pattern(1.0, -1.0, s)),
                                        abs=1e-9)


def test_erk4_interval():
    erk4 = explicit_padding(4)
    assert verify_pirk4_interval(ERK4_C, (-6.75, 0), tableau=erk4).passed
    res = verify_pirk4_interval(ERK4_C, (-7.0, 0), tableau=erk4)
    assert not res.passed
    assert -7.0 <= res.first_violation[1] < -6.75


def test_erk4_det_exceeds_one_at_minus_seven():
    vals = [abs(det_m4(ScaledCoefficients.for_pattern(w1, w2, -7.0), ERK4_C))
            for w1, w2 in OMEGA_PATTERNS]
    assert max(vals) > 1


def test_verify_degenerate_interval():
    res = verify_pirk4_interval((0.1, 0.2, 0.3, 0.4, 0.5), (0.0, 0.0))
    assert res.passed and res.max_abs_det == pytest.approx(1.0)


@pytest.mark.xfail(strict=True, reason="reference coefficients exceed |det| = 1 near s = -23.6")
def test_reference_pirk4_interval():
    assert verify_pirk4_interval(PIRK4_COEFFS, (-27.0, 0.0)).passed


def test_verify_rejects_bad_input():
    with pytest.raises(ValueError):
        verify_pirk4_interval(PIRK4_COEFFS, (-1.0, 1.0))
    with pytest.raises(ValueError):
        verify_pirk4_interval(PIRK4_COEFFS, (-1.0, 0.0), omega_set=[(0.5, 0.0)])


def test_optimizer_short_schedule():
    opt = optimize_pirk4_coefficients([1, 2, 4])
    assert opt.succeeded
    assert verify_pirk4_interval(opt.coefficients, (-4.0, 0.0)).passed


def test_optimizer_epsilon_zero():
    opt = optimize_pirk4_coefficients([0.0], seed=(0.3, -0.2, 0.1, 0.0, 0.5))
    assert opt.succeeded and opt.epsilon == 0.0


def test_optimizer_rejects_decreasing_schedule():
    with pytest.raises(ValueError):
        optimize_pirk4_coefficients([2, 1])


# ---------------------------------------------------------------- sufficient conditions

def test_pirk2a_conditions():
    for s in (0.0, -1.0, -10.0, -27.0):
        r = pirk2_sufficient_conditions(0.5, 0.0, s)
        assert r.coefficients_ok
        assert r.by_name()["-4 <= s(1-2C1+2C2)"].holds
    assert r.by_name()["1-2C1+2C2 >= 0"].margin == 0.0


def test_pirk2b_q_vanishes():
    C1, C2 = PIRK2B
    assert abs(2 * C2 - C1 - 2 * C1 * C2) <= 1e-15
    assert pirk2_sufficient_conditions(C1, C2, -3.0).coefficients_ok


def test_erk2_violates_conditions():
    r = pirk2_sufficient_conditions(0.0, 0.5, -1.0)
    assert not r.coefficients_ok
    assert r.by_name()["1-2C1+2C2 >= 0"].margin == 2.0


def test_pirk3a_k_vanishes():
    r = pirk3_sufficient_conditions(0.25, 1 / 16, -1.0)
    assert r.coefficients_ok and r.step_ok
    assert 0.25 - 4 / 16 == 0


def test_pirk3b_big_vanishes():
    C1, C2 = PIRK3B
    assert abs(-1 + 3 * (1 - 2 * C1) * (C1 + 4 * C2)) <= 1e-15
    assert pirk3_sufficient_conditions(C1, C2, -1.0).all_hold


def test_pirk3_first_condition_violated():
    r = pirk3_sufficient_conditions(-3.0, 0.0, -1.0)
    assert not r.by_name()["-20/9 <= C1-4C2 <= 0"].holds


@pytest.mark.parametrize("C", [(0.5, 0.0), PIRK2B])
def test_pirk2_sufficient_conditions_bound_det(C):
    # when every condition holds, the det closed form stays in [-1, 1]
    for s in np.linspace(-1.0, 0.0, 21):
        r = pirk2_sufficient_conditions(*C, s)
        if r.all_hold:
            assert all(p.upper_ok and p.lower_ok for p in r.patterns)


# ---------------------------------------------------------------- explicit spectrum

def test_k_range_attained_on_patterns():
    K = np.array([k_values(w1 * w2, w1 + w2) for w1, w2 in OMEGA_PATTERNS])
    assert (K[:, 0].min(), K[:, 0].max()) == (1.0, 4.0)
    assert (K[:, 1].min(), K[:, 1].max()) == (0.0, 2.0)
    assert (K[:, 2].min(), K[:, 2].max()) == (-12.0, 36.0)
    assert (K[:, 3].min(), K[:, 3].max()) == (0.0, 8.0)
    assert k_values(0, 0)[0] == 1 and k_values(1, 2)[1] == 0 and k_values(-1, 0)[1] == 2


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_k_ranges_inside_unit_disc(w1, w2):
    K1, K2, K3, K4 = k_values(w1 * w2, w1 + w2)
    assert 1 - 1e-12 <= K1 <= 4 + 1e-12
    assert -1e-12 <= K2 <= 2 + 1e-12
    assert -12 - 1e-9 <= K3 <= 36 + 1e-9
    assert -1e-12 <= K4 <= 8 + 1e-12


def test_explicit_spectrum_of_pattern():
    sp = explicit_spectrum(ScaledCoefficients.for_pattern(1.0, -1.0, -2.0), cfl=0.5)
    assert sorted([sp.omega1.real, sp.omega2.real]) == [-1.0, 1.0]
    assert sp.dex_signed == pytest.approx(-1) and sp.dex == pytest.approx(1)
    assert sp.x == 2.0 and sp.xbar == pytest.approx(8.0)
    assert sp.explicit_stable


def test_verdict_boundary_counts_stable():
    v = verdict(-np.eye(2))
    assert v.eigen_stable and v.det_bounded and v.spectral_radius == 1.0


# ---------------------------------------------------------------- wave specialization

def test_wave_eig_pirk1_double_root():
    e1, e2 = wave_eigenvalues(1, 4.0, (1.0,))
    assert e1 == pytest.approx(-1) and e2 == pytest.approx(-1)


def test_wave_eig_erk3_boundary():
    for e in wave_eigenvalues(3, 3.0, (0.0, 0.25)):
        assert abs(e) == pytest.approx(1.0, abs=1e-12)


def test_wave_eig_erk2():
    e = np.sort_complex(np.array(wave_eigenvalues(2, 1.0, (0.0, 0.5))))
    np.testing.assert_allclose(e, [0.5 - 1j, 0.5 + 1j], atol=1e-15)
    assert min(abs(e)) > 1


@pytest.mark.parametrize("order", [1, 2, 3])
def test_wave_eigenvalues_match_engine(order):
    rng = np.random.default_rng(order)
    for _ in range(50):
        x = rng.uniform(0, 8)
        C = tuple(rng.uniform(-1, 2, 2))[:1 if order == 1 else 2]
        M = numeric_m(order, ScaledCoefficients(0, 1, 0, 0, -x), C)
        ref = np.sort_complex(np.linalg.eigvals(M).astype(complex))
        got = np.sort_complex(np.array(wave_eigenvalues(order, x, C)))
        np.testing.assert_allclose(got, ref, atol=1e-9)
        assert abs(got[0] * got[1]) == pytest.approx(abs(wave_det(order, x, C)),
                                                     rel=1e-12, abs=1e-12)


def test_predicate_pirk1_at_four():
    assert wave_stability_predicate(1, 4.0, (1.0,)).stable
    assert not wave_stability_predicate(1, 4.0, (1.02,)).stable
    assert not wave_stability_predicate(1, 4.0, (0.98,)).stable
    assert not wave_stability_predicate(1, 4.1, (1.0,)).stable


def test_predicate_erk3_threshold():
    for x in (0.5, 2.0, 3.0):
        assert wave_stability_predicate(3, x, (0.0, 0.25)).stable
    for x in (3.01, 4.0):
        assert not wave_stability_predicate(3, x, (0.0, 0.25)).stable


@pytest.mark.parametrize("order", [1, 2, 3])
def test_predicate_agrees_with_spectral_radius(order):
    rng = np.random.default_rng(30 + order)
    for _ in range(300):
        x = rng.uniform(0.05, 10)
        C = tuple(rng.uniform(-1, 2, 2))[:1 if order == 1 else 2]
        rho = wave_spectral_radius(pirk_tableau(FAMILY[order](C)), x)
        if abs(rho - 1) < 1e-6:
            continue
        assert wave_stability_predicate(order, x, C).stable == (rho <= 1), (x, C)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_region_nesting_with_witness(order):
    rng = np.random.default_rng(40 + order)
    witness = False
    for _ in range(2000):
        x = rng.uniform(0.05, 10)
        C = tuple(rng.uniform(-1, 2, 2))[:1 if order == 1 else 2]
        p = wave_stability_predicate(order, x, C)
        if p.stable:
            assert p.det_bounded
            assert abs(wave_det(order, x, C)) <= 1 + 1e-9
        elif p.det_bounded and abs(wave_det(order, x, C)) < 1 - 1e-6:
            witness = True
    assert witness


def test_wave_x_max_pirk1():
    assert wave_x_max(pirk_tableau(SchemeId.PIRK1)) == pytest.approx(4.0, abs=1e-8)


def test_wave_x_max_erk2_tiny():
    # rho^2 = 1 + x^2/4 exceeds the 1e-10 tolerance beyond x ~ 3e-5
    assert wave_x_max(pirk_tableau(PIRK2Custom(0.0, 0.5))) < 1e-4


def test_predicate_rejects_negative_x():
    with pytest.raises(ValueError):
        wave_stability_predicate(1, -1.0, (1.0,))


# ---------------------------------------------------------------- scans and fits

def test_scan_records_failures_as_unstable():
    def run(C, cfl):
        if C[0] > 1.5:
            raise FloatingPointError("overflow")
        return C[0] * cfl

    table = scan_stability_region(run, [(0.5,), (1.0,), (2.0,)], [0.5, 1.5])
    stable = {(p.coefficients[0], p.cfl): p.stable for p in table.points}
    assert stable == {(0.5, 0.5): True, (1.0, 0.5): True, (2.0, 0.5): False,
                      (0.5, 1.5): True, (1.0, 1.5): False, (2.0, 1.5): False}
    assert table.boundaries() == {0.5: (0.5, 1.0), 1.5: (0.5, 0.5)}


def test_scan_single_point():
    table = scan_stability_region(lambda C, cfl: 0.1, [(0.29, 0.2)], [0.5])
    assert len(table.points) == 1 and table.points[0].stable


def test_bisect_boundary_grid():
    lo, hi = bisect_boundary(lambda c: c <= 1.71, 1.0, 1.0, 0.02)
    assert lo == pytest.approx(1.7) and hi == pytest.approx(1.72)
    lo, hi = bisect_boundary(lambda c: c >= 0.93, 1.0, -1.0, 0.02)
    assert lo == pytest.approx(0.94) and hi == pytest.approx(0.92)


def test_fit_xbar_round_trip():
    xbar = 5.340
    pts = [(cfl, 0.5 + 2 / (xbar * cfl ** 2)) for cfl in (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)]
    fit = fit_xbar(pts)
    assert fit.xbar == pytest.approx(xbar, abs=1e-6)
    assert fit.params[0] == pytest.approx(0.5, abs=1e-9)


def test_fit_xbar_order3_round_trip():
    # ERK3 boundary x = 3 sits at cfl = sqrt(3/xbar)
    xbar = 5.322
    fit = fit_xbar([(math.sqrt(3 / xbar), 0.0, 0.25)], order=3)
    assert fit.xbar == pytest.approx(xbar, rel=1e-4)


def test_fit_xbar_degenerate():
    with pytest.raises(ValueError):
        fit_xbar([(0.5, 1.9), (0.5, 1.9)])
    with pytest.raises(ValueError):
        fit_xbar([(0.5, 1.9)], order=4)
