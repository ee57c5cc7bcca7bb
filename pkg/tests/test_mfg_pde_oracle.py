# tests/test_mfg_pde_oracle.py
import numpy as np
import pytest
from scipy.integrate import trapezoid

from meanfield_lab.emissions import EmissionsModel, value_function
from meanfield_lab.errors import CFLError, ModelValidationError, NonConvergenceError
from meanfield_lab.lqmodel import MeanFlow, make_grid, simple_model
from meanfield_lab.mfg_lq import solve_mfg
from meanfield_lab.mfg_pde_oracle import (
    OracleModel,
    additive_running,
    apply_map,
    centered_space_grid,
    from_emissions,
    from_lq,
    gaussian_initial,
    make_space_grid,
    picard_solve,
    solve_hjb,
    solve_kolmogorov,
)
from meanfield_lab.scalar_examples import Mode, additive_running_mean


def _zero(t, x, mu):
    return np.zeros_like(x)


def test_space_grid_validation():
    with pytest.raises(ModelValidationError, match="at least 50"):
        make_space_grid(-1.0, 1.0, 20)
    with pytest.raises(ModelValidationError, match="x_max"):
        make_space_grid(1.0, 1.0, 100)
    with pytest.raises(ModelValidationError, match="sigma > 0"):
        from_lq(simple_model(sigma=0.0))


def test_centered_grid_covers_six_deviations():
    desc = from_lq(simple_model(sigma=2.0, x0=1.0))
    sgrid = centered_space_grid(desc, 200)
    assert sgrid.x_min <= 1.0 - 12.0 and sgrid.x_max >= 1.0 + 12.0
    assert np.sum(sgrid.central()) > 90


def test_hjb_without_costs_is_zero():
    desc = OracleModel(
        sigma=1.0,
        x0=0.0,
        T=1.0,
        drift=_zero,
        gain=lambda t: 1.0,
        control_cost=lambda t: 1.0,
        running=_zero,
        terminal=lambda x, mu: np.zeros_like(x),
    )
    tgrid = make_grid(1.0, 50)
    sgrid = make_space_grid(-5.0, 5.0, 100)
    value = solve_hjb(MeanFlow.constant(tgrid, 0.0), desc, tgrid, sgrid)
    assert np.all(value.values == 0.0)


def test_hjb_gradient_matches_riccati():
    model = simple_model(q=1.0, qbar=1.0)
    sol = solve_mfg(model)
    desc = from_lq(model)
    sgrid = centered_space_grid(desc, 400)
    value = solve_hjb(sol.mean_flow, desc, model.grid, sgrid)
    expected = 0.5 * (sgrid.x + sol.mean_flow.terminal) ** 2
    assert np.allclose(value.values[-1], expected, rtol=0, atol=1e-14)

    mask = sgrid.central()
    exact = np.outer(sol.eta, sgrid.x) + sol.chi[:, None]
    assert np.max(np.abs(value.gradient() - exact)[:, mask]) < 1e-3


def test_hjb_matches_emissions_value_function():
    model = EmissionsModel(lam=1.0, cap=0.0, sigma=1.0, T=1.0, x0=2.0)
    desc = from_emissions(model)
    tgrid = make_grid(model.T, 400)
    sgrid = centered_space_grid(desc, 800)
    value = solve_hjb(MeanFlow.constant(tgrid, model.x0), desc, tgrid, sgrid)
    mask = sgrid.central()
    for k in (0, 200):
        exact = value_function(model, tgrid.times[k], sgrid.x[mask])
        assert np.max(np.abs(value.values[k, mask] - exact)) < 1e-3


def test_heat_kernel():
    tgrid = make_grid(1.0, 800)
    sgrid = make_space_grid(-7.0, 7.0, 400)
    initial = gaussian_initial(sgrid, 0.0)
    still = np.zeros((tgrid.n_nodes, 399))
    density = solve_kolmogorov(still, tgrid, sgrid, initial, 1.0)

    width_sq = (2.0 * sgrid.dx) ** 2
    var = width_sq + tgrid.times
    assert np.allclose(density.variances(), var, atol=1e-8)
    assert np.allclose(density.means(), 0.0, atol=1e-12)

    x = sgrid.x
    exact = np.exp(-0.5 * x**2 / var[-1]) / np.sqrt(2 * np.pi * var[-1])
    l1 = trapezoid(np.abs(density.values[-1] - exact), x)
    assert l1 < 1e-3


def test_constant_drift_translates_the_mean():
    tgrid = make_grid(1.0, 400)
    sgrid = make_space_grid(-8.0, 8.0, 400)
    density = solve_kolmogorov(
        lambda t, faces: np.full_like(faces, 0.5),
        tgrid, sgrid, gaussian_initial(sgrid, 0.0), 1.0,
    )
    assert np.max(np.abs(density.means() - 0.5 * tgrid.times)) < 1e-3
    assert np.allclose(density.mass(), 1.0, atol=1e-6)
    assert density.values.min() >= -1e-12


def test_equilibrium_drift_reproduces_lq_mean():
    model = simple_model(q=1.0, qbar=1.0)
    sol = solve_mfg(model)
    sgrid = centered_space_grid(from_lq(model), 400)
    faces = sgrid.faces
    drift = np.outer(sol.feedback.slope, faces) + sol.feedback.intercept[:, None]
    initial = gaussian_initial(sgrid, 1.0)
    density = solve_kolmogorov(drift, model.grid, sgrid, initial, 1.0)
    assert np.max(np.abs(density.means() - sol.moments.mean)) < 1e-3
    assert np.allclose(density.mass(), 1.0, atol=1e-6)


def test_kolmogorov_refuses_cfl_violation():
    tgrid = make_grid(1.0, 100)
    sgrid = make_space_grid(-5.0, 5.0, 200)
    with pytest.raises(CFLError) as exc:
        solve_kolmogorov(
            lambda t, faces: np.full_like(faces, 1000.0),
            tgrid, sgrid, gaussian_initial(sgrid, 0.0), 1.0,
        )
    assert exc.value.required_dt == pytest.approx(sgrid.dx / 1000.0)


def test_picard_lq_simple_example():
    model = simple_model(q=1.0, qbar=1.0)
    desc = from_lq(model)
    sgrid = centered_space_grid(desc, 400)
    result = picard_solve(desc, model.grid, sgrid, damping=0.5, tol=1e-6, max_iter=50)
    assert result.converged
    assert result.iterations <= 50
    assert abs(result.mean_flow.terminal - 1.0 / 3.0) < 1e-3
    for k in range(model.grid.n_nodes):
        assert result.density.values[k].min() >= -1e-12
    assert np.allclose(result.density.mass(), 1.0, atol=1e-6)

    _, _, image = apply_map(result.mean_flow, desc, model.grid, sgrid)
    assert np.max(np.abs(image.values - result.mean_flow.values)) < 2e-6


def test_picard_without_interaction_stops_at_once():
    model = simple_model(q=1.0, qbar=0.0)
    desc = from_lq(model)
    assert not desc.interacts
    result = picard_solve(desc, model.grid, centered_space_grid(desc, 200))
    assert result.converged and result.iterations == 1
    assert result.mean_flow.terminal == pytest.approx(0.5, abs=1e-3)


def test_picard_additive_running_cost():
    desc = additive_running(T=1.0, x0=1.0, sigma=1.0)
    tgrid = make_grid(1.0, 400)
    result = picard_solve(desc, tgrid, centered_space_grid(desc, 400), damping=0.5)
    assert result.converged and result.iterations <= 50
    exact = additive_running_mean(1.0, 1.0, Mode.MFG, tgrid.times)
    assert np.max(np.abs(result.mean_flow.values - exact)) < 1e-3


def test_picard_refinement_reduces_the_gap():
    desc = additive_running(T=1.0, x0=1.0, sigma=1.0)

    def gap(n):
        tgrid = make_grid(1.0, n)
        result = picard_solve(desc, tgrid, centered_space_grid(desc, n))
        exact = additive_running_mean(1.0, 1.0, Mode.MFG, tgrid.times)
        return np.max(np.abs(result.mean_flow.values - exact))

    assert gap(200) / gap(400) >= 1.8


def test_picard_reports_non_convergence():
    model = simple_model(q=1.0, qbar=1.0, n_steps=100)
    desc = from_lq(model)
    result = picard_solve(desc, model.grid, centered_space_grid(desc, 100), max_iter=1)
    assert not result.converged
    with pytest.raises(NonConvergenceError) as exc:
        result.raise_for_convergence()
    assert exc.value.residuals == result.residuals
    columns = result.columns()
    assert columns["t"].shape == (101 * 100,)
    with pytest.raises(ModelValidationError, match="damping"):
        picard_solve(desc, model.grid, centered_space_grid(desc, 100), damping=1.5)
