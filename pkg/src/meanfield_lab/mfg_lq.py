# src/meanfield_lab/mfg_lq.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import BlowUpError, ModelValidationError, NoFixedPointError
from .lqmodel import (
    FeedbackPolicy,
    LQModel,
    MeanFlow,
    ReducedCoefficients,
    TimeGrid,
    reduce_mfg,
)
from .quadrature import cumulative_integral, integrate
from .riccati import (
    MomentPaths,
    RiccatiSolution,
    forward_moments,
    policy_moments,
    solve_riccati,
)

logger = logging.getLogger(__name__)

TOL_FP = 1e-6


@dataclass(frozen=True, eq=False)
class MFGSolution:
    mean_flow: MeanFlow
    eta: np.ndarray
    chi: np.ndarray
    eta_bar: np.ndarray
    chi_bar: np.ndarray
    feedback: FeedbackPolicy
    moments: MomentPaths
    riccati: RiccatiSolution
    fixed_point_residual: float

    @property
    def z(self) -> np.ndarray:
        return self.riccati.z_scale

    def columns(self) -> Dict[str, np.ndarray]:
        return {
            "t": self.mean_flow.grid.times,
            "mu_bar": self.mean_flow.values,
            "eta": self.eta,
            "chi": self.chi,
            "feedback_slope": self.feedback.slope,
            "feedback_intercept": self.feedback.intercept,
            "mean": self.moments.mean,
            "variance": self.moments.variance,
        }


def satisfies_existence_hypotheses(model: LQModel) -> bool:
    """q(q + qbar) >= 0 and m(m + mbar) >= 0 at every node."""
    return bool(
        model.q * (model.q + model.qbar) >= 0
        and np.min(model.m * (model.m + model.mbar)) >= 0
    )


def fixed_point_denominator(model: LQModel) -> float:
    """
    1 + q(q + qbar) T: the terminal mean is x0 divided by this in the
    terminal-cost-only game.
    """
    return 1.0 + model.q * (model.q + model.qbar) * model.T


def _discount(model: LQModel) -> Tuple[np.ndarray, np.ndarray]:
    """e_t = exp(-int_0^t abar) at nodes and midpoints, exact for linear abar."""
    dt = model.grid.dt
    abar, abar_mid = model.abar, model.mid("abar")
    nodes = cumulative_integral(abar, dt, "trapezoid")
    mids = nodes[:-1] + 0.25 * dt * (abar[:-1] + abar_mid)
    return np.exp(-nodes), np.exp(-mids)


def averaged_coefficients(model: LQModel) -> Tuple[ReducedCoefficients, np.ndarray]:
    """
    Streamlined form of the averaged system after the change of variable
    zeta = e ybar, which turns the adjoint drift a into a + abar.
    """
    e, e_mid = _discount(model)
    mm = model.m * (model.m + model.mbar)
    mm_mid = model.mid("m") * (model.mid("m") + model.mid("mbar"))
    rc = ReducedCoefficients(
        grid=model.grid,
        a=model.a + model.abar,
        b=-(model.b**2) / (model.n * e),
        c=model.beta,
        m=-e * mm,
        d=0.0,
        q=e[-1] * model.q * (model.q + model.qbar),
        r=0.0,
        sigma=0.0,
        mids={
            "a": model.mid("a") + model.mid("abar"),
            "b": -(model.mid("b") ** 2) / (model.mid("n") * e_mid),
            "c": model.mid("beta"),
            "m": -e_mid * mm_mid,
        },
    )
    return rc, e


def solve_mean_fixed_point(
    model: LQModel, grid: Optional[TimeGrid] = None, short_horizon: bool = False
) -> Tuple[MeanFlow, np.ndarray, np.ndarray]:
    """
    Fixed point of the mean flow, with the averaged adjoint decoupled as
    ybar = eta_bar mu_bar + chi_bar.
    """
    grid = grid or model.grid
    model.grid.check_same(grid, "requested grid")
    if not short_horizon and not satisfies_existence_hypotheses(model):
        raise ModelValidationError(
            "q(q+qbar) >= 0 and m(m+mbar) >= 0 are required for a guaranteed MFG "
            "fixed point; enable short_horizon mode to attempt the solve anyway"
        )

    rc, e = averaged_coefficients(model)
    ric = solve_riccati(rc, grid)
    if not ric.ok:
        raise NoFixedPointError("no MFG fixed point on this horizon", ric.blow_up)
    moments = forward_moments(rc, ric, 0.0, model.x0, grid)
    return MeanFlow(moments.mean, grid), ric.eta / e, ric.chi / e


def solve_mfg(
    model: LQModel,
    grid: Optional[TimeGrid] = None,
    short_horizon: bool = False,
    tol_fp: float = TOL_FP,
) -> MFGSolution:
    grid = grid or model.grid
    mean_flow, eta_bar, chi_bar = solve_mean_fixed_point(model, grid, short_horizon)

    rc = reduce_mfg(model, mean_flow)
    ric = solve_riccati(rc, grid)
    if not ric.ok:
        raise BlowUpError("individual Riccati equation blows up", ric.blow_up)
    moments = forward_moments(rc, ric, model.sigma, model.x0, grid)

    gain = model.b / model.n
    feedback = FeedbackPolicy(-gain * ric.eta, -gain * ric.chi, grid)
    residual = float(np.max(np.abs(moments.mean - mean_flow.values)))
    if residual > tol_fp:
        logger.warning(
            "MFG fixed-point residual %.3e exceeds tolerance %.1e", residual, tol_fp
        )
    return MFGSolution(
        mean_flow=mean_flow,
        eta=ric.eta,
        chi=ric.chi,
        eta_bar=eta_bar,
        chi_bar=chi_bar,
        feedback=feedback,
        moments=moments,
        riccati=ric,
        fixed_point_residual=residual,
    )


def mfg_cost(
    model: LQModel, sol: MFGSolution, policy: Optional[FeedbackPolicy] = None
) -> float:
    """
    Expected cost of one player using ``policy`` (the equilibrium feedback by
    default) against the frozen equilibrium mean flow.
    """
    policy = policy or sol.feedback
    mu = sol.mean_flow.values
    mom = policy_moments(model, policy, sol.mean_flow)
    mean, var = mom.mean, mom.variance
    s, i = policy.slope, policy.intercept

    alpha_sq = s**2 * (var + mean**2) + 2 * s * i * mean + i**2
    state_sq = model.m**2 * var + (model.m * mean + model.mbar * mu) ** 2
    running = 0.5 * model.n * alpha_sq + 0.5 * state_sq
    terminal = 0.5 * (
        model.q**2 * var[-1] + (model.q * mean[-1] + model.qbar * mu[-1]) ** 2
    )
    return integrate(running, model.grid.dt) + float(terminal)
