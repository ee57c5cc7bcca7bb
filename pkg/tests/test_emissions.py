# tests/test_emissions.py
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from meanfield_lab.emissions import (
    EmissionsModel,
    Regime,
    classify_regime,
    hopf_cole,
    optimal_feedback,
    prob_exceed_cap,
    simulate_emissions,
    value_function,
)


def make(**kw):
    params = dict(lam=1.0, cap=0.0, sigma=1.0, T=1.0, x0=2.0)
    params.update(kw)
    return EmissionsModel(**params)


def test_lambda_alias():
    model = EmissionsModel.model_validate(
        {"lambda": 2.0, "cap": 1.0, "sigma": 0.5, "T": 2.0, "x0": 4.0}
    )
    assert model.lam == 2.0
    assert model.delta == pytest.approx(4.0 - 1.0 - 2.0)


def test_probability_is_half_on_the_critical_line():
    model = make(x0=0.5)
    assert model.delta == 0.0
    assert prob_exceed_cap(model) == pytest.approx(0.5, abs=1e-12)


def test_probability_tends_to_half_for_large_noise():
    base = make()
    sigma = 1e3 * max(base.lam * base.T, abs(base.delta))
    assert abs(prob_exceed_cap(make(sigma=sigma)) - 0.5) < 0.01


@pytest.mark.parametrize("x0", [-100.0, -3.0, 0.0, 0.7, 2.0, 10.0, 30.0, 100.0])
def test_probability_strictly_inside_unit_interval(x0):
    p = prob_exceed_cap(make(x0=x0, sigma=0.3))
    assert 0.0 < p < 1.0


def test_value_function_matches_direct_quadrature():
    model = make(lam=1.5, cap=0.5, sigma=0.8, T=2.0)
    for t, x in [(0.0, 0.0), (0.5, 1.0), (1.0, 3.0), (1.9, 0.4), (0.2, -1.0)]:
        s = model.sigma * math.sqrt(model.T - t)

        def weight(y, tilt):
            return norm.pdf(y, loc=x, scale=s) * math.exp(-tilt * (y - model.cap))

        lo, hi = x - 12 * s, x + 12 * s
        split = min(max(model.cap, lo), hi)
        tilt = model.lam / model.sigma**2
        below, _ = quad(weight, lo, split, args=(0.0,), epsabs=1e-15, epsrel=1e-13)
        above, _ = quad(weight, split, hi, args=(tilt,), epsabs=1e-15, epsrel=1e-13)
        expected = -(model.sigma**2) * math.log(below + above)
        assert value_function(model, t, x) == pytest.approx(expected, abs=1e-8)


def test_value_function_terminal_and_limits():
    model = make()
    x = np.linspace(-2.0, 3.0, 11)
    assert np.allclose(value_function(model, 1.0, x), np.maximum(x, 0.0))
    assert value_function(model, 0.99, -5.0) == pytest.approx(0.0, abs=1e-10)
    far = value_function(model, 0.5, 20.0)
    assert far == pytest.approx(20.0 - 0.5 * 0.5, abs=1e-8)
    with pytest.raises(ValueError):
        value_function(model, 1.5, 0.0)


def test_value_function_is_monotone():
    model = make(sigma=0.5)
    v = value_function(model, 0.3, np.linspace(-3.0, 4.0, 100))
    assert np.all(np.diff(v) >= -1e-14)


def test_feedback_bounds():
    model = make(lam=2.0, sigma=0.7)
    rng = np.random.default_rng(1)
    t = rng.uniform(0.0, model.T, 10_000)
    x = rng.uniform(-5.0, 8.0, 10_000)
    alpha = optimal_feedback(model, t, x)
    assert np.all(alpha >= 0.0) and np.all(alpha <= model.lam)
    assert optimal_feedback(model, 0.0, -50.0) == pytest.approx(0.0, abs=1e-12)
    assert optimal_feedback(model, 0.0, 50.0) == pytest.approx(model.lam, abs=1e-12)


def test_feedback_matches_finite_differences():
    model = make(lam=1.2, cap=0.3, sigma=0.9)
    rng = np.random.default_rng(2)
    h = 1e-5
    for t, x in zip(rng.uniform(0.0, 0.95, 50), rng.uniform(-2.0, 3.0, 50)):
        upper, lower = value_function(model, t, x + h), value_function(model, t, x - h)
        fd = (upper - lower) / (2 * h)
        assert optimal_feedback(model, t, x) == pytest.approx(fd, abs=1e-6)
    inner = optimal_feedback(model, 0.0, model.cap + 0.5 * model.lam * model.T)
    assert 0.0 < inner < model.lam


def test_value_function_solves_hjb():
    model = make(lam=1.0, cap=0.0, sigma=1.0)
    h = 1e-3
    for t in (0.1, 0.4, 0.8):
        for x in np.linspace(-1.5, 2.5, 9):

            def v(s, y):
                return value_function(model, s, y)

            v_t = (v(t + h, x) - v(t - h, x)) / (2 * h)
            v_x = (v(t, x + h) - v(t, x - h)) / (2 * h)
            v_xx = (v(t, x + h) - 2 * v(t, x) + v(t, x - h)) / h**2
            assert abs(v_t + 0.5 * model.sigma**2 * v_xx - 0.5 * v_x**2) < 1e-4

            u_t = (hopf_cole(model, t + h, x) - hopf_cole(model, t - h, x)) / (2 * h)
            u = [hopf_cole(model, t, x + k * h) for k in (-1, 0, 1)]
            u_xx = (u[2] - 2 * u[1] + u[0]) / h**2
            assert abs(u_t + 0.5 * model.sigma**2 * u_xx) < 1e-4


def test_regimes():
    bau = classify_regime(make(x0=-1.0))
    assert bau.regime is Regime.BAU
    assert bau.mean_T == -1.0 and bau.fixed_point_ok

    abatement = classify_regime(make(x0=2.0))
    assert abatement.regime is Regime.ABATEMENT
    assert abatement.fixed_point_ok
    assert abatement.mean_T == pytest.approx(2.0 - prob_exceed_cap(make(x0=2.0)))

    critical = classify_regime(make(x0=0.25, sigma=1000.0))
    assert critical.regime is Regime.CRITICAL
    assert not critical.fixed_point_ok


def test_singular_cap_is_flagged():
    report = classify_regime(make(x0=0.0))
    assert report.regime is Regime.CRITICAL
    assert report.singular
    assert not report.fixed_point_ok


def test_monte_carlo_agrees_with_formula():
    model = make()
    est = simulate_emissions(model, n_paths=20_000, seed=11)
    p = prob_exceed_cap(model)
    assert abs(est.prob_exceed - p) < 3 * est.prob_exceed_se
    assert abs(est.mean_T - (model.x0 - model.T * model.lam * p)) < 3 * est.mean_T_se


def test_driftless_paths_are_symmetric():
    est = simulate_emissions(make(x0=0.0), n_paths=20_000, seed=3, feedback="zero")
    assert abs(est.prob_exceed - 0.5) < 3 * est.prob_exceed_se


def test_driftless_moments_match_brownian_motion():
    model = make(x0=1.0, sigma=0.8, T=1.5)
    est = simulate_emissions(model, n_paths=20_000, seed=5, feedback="zero")
    assert abs(est.mean_T - model.x0) < 4 * est.mean_T_se
    assert abs(est.var_T - model.sigma**2 * model.T) < 4 * est.var_T_se


def test_simulation_is_deterministic():
    model = make(x0=1.0)
    first = simulate_emissions(model, n_paths=5000, seed=42, n_steps=50)
    again = simulate_emissions(model, n_paths=5000, seed=42, n_steps=50)
    threaded = simulate_emissions(model, n_paths=5000, seed=42, n_steps=50, threads=4)
    assert first == again == threaded


def test_simulation_rejects_bad_input():
    with pytest.raises(ValueError, match="at least 1000"):
        simulate_emissions(make(), n_paths=10, seed=0)
    with pytest.raises(ValueError, match="unknown feedback"):
        simulate_emissions(make(), n_paths=1000, seed=0, feedback="bang-bang")
