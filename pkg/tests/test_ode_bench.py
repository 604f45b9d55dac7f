import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pirk.engine import SystemState, evolve
from pirk.ode_bench import (OdeProblem, applicability, ode_analytic, ode_coeffs_from,
                            ode_convergence, ode_error_norm, ode_params_from,
                            ode_rms_error, ode_system, run_ode_experiment)
from pirk.schemes import SchemeId, pirk_tableau


def test_coeffs_undamped_quarter_phase():
    assert ode_coeffs_from(0.0, math.pi / 2, 1.0) == pytest.approx((1, 0, 0, -1), abs=1e-15)


def test_coeffs_damped():
    assert ode_coeffs_from(-1.0, math.pi / 2, 1.0) == pytest.approx((1, -1, -1, -1),
                                                                    abs=1e-15)


def test_coeffs_eighth_phase():
    r2 = math.sqrt(2)
    assert ode_coeffs_from(0.0, math.pi / 4, 1.0) == pytest.approx((r2, -1, 1, -r2))


def test_coeffs_reject_zero_phase():
    with pytest.raises(ValueError):
        ode_coeffs_from(0.0, 0.0)
    with pytest.raises(ValueError):
        ode_coeffs_from(0.5, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 0), st.floats(0.05, math.pi / 2), st.floats(0.1, 5))
def test_parameter_round_trip(sigma, phi, omega):
    a, b, c, d = ode_coeffs_from(sigma, phi, omega)
    assert a == -d and a > 0
    w, s, p = ode_params_from(a, b, c, d)
    assert w == pytest.approx(omega, rel=1e-12)
    assert s == pytest.approx(sigma, abs=1e-12)
    assert p == pytest.approx(phi, abs=1e-12)


def test_analytic_initial_values():
    u, v = ode_analytic(OdeProblem(), 0.0)
    assert (float(u), float(v)) == pytest.approx((0.0, 1.0), abs=1e-16)
    u, v = ode_analytic(OdeProblem(), math.pi / 2)
    assert (float(u), float(v)) == pytest.approx((-1.0, 0.0), abs=1e-15)


@pytest.mark.parametrize("sigma,phi", [(0.0, math.pi / 2), (-0.3, math.pi / 4),
                                       (-1.0, math.pi / 10)])
def test_analytic_solves_the_system(sigma, phi):
    prob = OdeProblem(sigma, phi)
    a, b, c, d = prob.coeffs
    t = np.random.default_rng(0).uniform(0, 10, 100)
    h = 1e-5
    (up, vp), (um, vm), (u, v) = (ode_analytic(prob, t + h), ode_analytic(prob, t - h),
                                  ode_analytic(prob, t))
    np.testing.assert_allclose((up - um) / (2 * h), c * u + d * v, atol=1e-9)
    np.testing.assert_allclose((vp - vm) / (2 * h), a * u + b * v, atol=1e-9)


def test_error_norm_exact_samples():
    prob = OdeProblem()
    t = np.arange(0, 11) * 0.1
    norm = ode_error_norm(t, ode_analytic(prob, t)[0], prob, 0.1)
    np.testing.assert_array_equal(norm, 0.0)


def test_error_norm_constant_offset():
    prob, dt, delta = OdeProblem(), 0.1, 1e-3
    t = np.arange(0, 101) * dt
    norm = ode_error_norm(t, ode_analytic(prob, t)[0] + delta, prob, dt)
    N = np.floor(t[1:] / dt + 1e-9)
    np.testing.assert_allclose(norm, delta * dt * np.sqrt(N) / t[1:], rtol=1e-12)


def test_rms_error_relation():
    prob, dt, delta = OdeProblem(), 0.1, 1e-3
    t = np.arange(0, 1001) * dt
    assert ode_rms_error(t, ode_analytic(prob, t)[0] + delta, prob, 100.0) \
        == pytest.approx(delta, rel=1e-12)


def test_pirk1_reference_run_stable():
    rep = run_ode_experiment(SchemeId.PIRK1, 0.0, math.pi / 2, 0.1)
    assert rep.stable and rep.extras["l2_at_verdict"] < 1


def test_pirk1_tracks_its_invariant_at_dt_1_9():
    # u^2 + v^2 - h u v is conserved by the PIRK1 map, whose max |u| is
    # 1/sqrt(1 - h^2/4); the last sample follows a shorter remainder step
    h = 1.9
    rep = run_ode_experiment(SchemeId.PIRK1, 0.0, math.pi / 2, h, 1000.0)
    u, v = rep.extras["samples"][:-1].T
    q = u * u + v * v - h * u * v
    np.testing.assert_allclose(q, q[0], rtol=1e-9)
    assert rep.stable
    assert rep.extras["max_abs_u"] <= 1 / math.sqrt(1 - h * h / 4) * (1 + 1e-12)
    assert rep.extras["max_abs_u"] > 3.1


def test_pirk1_diverges_above_two():
    rep = run_ode_experiment(SchemeId.PIRK1, 0.0, math.pi / 2, 2.1, 1000.0)
    assert not rep.stable
    assert rep.failed or rep.extras["max_abs_u"] > 1e6


@pytest.mark.parametrize("dt", [1e-2, 1e-1])
def test_erk1_amplitude_grows_exactly(dt):
    # forward Euler on a rotation multiplies |(u, v)|^2 by 1 + dt^2 a step
    rec = evolve(ode_system(OdeProblem()), pirk_tableau(SchemeId.ERK1),
                 SystemState(0.0, [0.0], [1.0]), dt, 50.0)
    r2 = np.sum(rec.samples ** 2, axis=1)
    n = np.round(rec.times / dt)
    np.testing.assert_allclose(r2, (1 + dt * dt) ** n, rtol=1e-10)


def test_applicability_predicates():
    assert applicability(OdeProblem(), 1.0) == {"separable": True, "trex_bounded": True,
                                                "dex_bounded": True}
    app = applicability(OdeProblem(-1.0), 3.0)
    assert not app["trex_bounded"]
    assert applicability(OdeProblem(-1.0), 1.5)["trex_bounded"]


def test_cost_is_stages_per_time():
    rep = run_ode_experiment(SchemeId.PIRK3a, dt=0.2, t_end=10.0)
    stages = pirk_tableau(SchemeId.PIRK3a).stages
    assert rep.cost["L2"] == pytest.approx(stages / 0.2, rel=1e-12)


def test_pirk2b_convergence_order():
    res = ode_convergence(SchemeId.PIRK2b, [1e-3, 2e-3, 5e-3, 1e-2])
    assert res["slope_rms"] == pytest.approx(2.0, abs=0.3)
    # the time-averaged norm carries an extra sqrt(dt)
    assert res["slope_l2"] - res["slope_rms"] == pytest.approx(0.5, abs=1e-3)


def _max_stable_dt(scheme, sigma, phi):
    best = None
    for dt in np.round(np.arange(0.05, 4.0, 0.05), 3):
        if not run_ode_experiment(scheme, sigma, phi, float(dt)).stable:
            break
        best = float(dt)
    return best


def test_stiff_limit_thirds_agree():
    a = _max_stable_dt(SchemeId.PIRK3a, -1.0, math.pi / 2)
    b = _max_stable_dt(SchemeId.ERK3, -1.0, math.pi / 2)
    assert max(a, b) / min(a, b) <= 1.5


def test_small_phase_favors_erk3():
    assert _max_stable_dt(SchemeId.PIRK3a, 0.0, math.pi / 10) < \
        _max_stable_dt(SchemeId.ERK3, 0.0, math.pi / 10)
