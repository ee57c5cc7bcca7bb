# src/meanfield_lab/mkv_lq.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from .errors import BlowUpError
from .lqmodel import (
    FeedbackPolicy,
    LQModel,
    MeanFlow,
    ReducedCoefficients,
    TimeGrid,
    reduce_mkv,
)
from .mfg_lq import TOL_FP, solve_mfg
from .quadrature import integrate
from .riccati import (
    MomentPaths,
    RiccatiSolution,
    forward_moments,
    policy_moments,
    solve_riccati,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MKVSolution:
    xbar: MeanFlow
    ybar: MeanFlow
    eta: np.ndarray
    chi: np.ndarray
    eta_bar: np.ndarray
    chi_bar: np.ndarray
    feedback: FeedbackPolicy
    moments: MomentPaths
    riccati: RiccatiSolution
    consistency_residual: float

    def columns(self) -> Dict[str, np.ndarray]:
        return {
            "t": self.xbar.grid.times,
            "x_bar": self.xbar.values,
            "y_bar": self.ybar.values,
            "eta": self.eta,
            "chi": self.chi,
            "feedback_slope": self.feedback.slope,
            "feedback_intercept": self.feedback.intercept,
            "mean": self.moments.mean,
            "variance": self.moments.variance,
        }


class ComparisonReport(BaseModel):
    mfg_mean_T: float
    mkv_mean_T: float
    sup_mean_gap: float
    mfg_cost_under_mkv_objective: float
    mkv_cost: float


def mean_system_coefficients(model: LQModel) -> ReducedCoefficients:
    """
    Expectations of the controlled McKean-Vlasov system, in streamlined form:
    eta_bar' = (b^2/n) eta_bar^2 - 2(a+abar) eta_bar - (m+mbar)^2 is the
    canonical Riccati equation with b -> -b^2/n, a -> a+abar, m -> -(m+mbar)^2.
    """
    mid = model.mid
    return ReducedCoefficients(
        grid=model.grid,
        a=model.a + model.abar,
        b=-(model.b**2) / model.n,
        c=model.beta,
        m=-((model.m + model.mbar) ** 2),
        d=0.0,
        q=(model.q + model.qbar) ** 2,
        r=0.0,
        sigma=0.0,
        mids={
            "a": mid("a") + mid("abar"),
            "b": -(mid("b") ** 2) / mid("n"),
            "c": mid("beta"),
            "m": -((mid("m") + mid("mbar")) ** 2),
        },
    )


def solve_mean_system(
    model: LQModel, grid: Optional[TimeGrid] = None
) -> Tuple[MeanFlow, MeanFlow, np.ndarray, np.ndarray]:
    grid = grid or model.grid
    model.grid.check_same(grid, "requested grid")
    rc = mean_system_coefficients(model)
    ric = solve_riccati(rc, grid)
    ric.raise_for_blow_up("McKean-Vlasov mean Riccati equation blows up")
    xbar = forward_moments(rc, ric, 0.0, model.x0, grid).mean
    ybar = ric.eta * xbar + ric.chi
    return MeanFlow(xbar, grid), MeanFlow(ybar, grid), ric.eta, ric.chi


def solve_mkv(
    model: LQModel, grid: Optional[TimeGrid] = None, tol_fp: float = TOL_FP
) -> MKVSolution:
    grid = grid or model.grid
    xbar, ybar, eta_bar, chi_bar = solve_mean_system(model, grid)
    rc = reduce_mkv(model, xbar, ybar)
    ric = solve_riccati(rc, grid)
    if not ric.ok:
        raise BlowUpError("McKean-Vlasov Riccati equation blows up", ric.blow_up)
    moments = forward_moments(rc, ric, model.sigma, model.x0, grid)

    gain = model.b / model.n
    feedback = FeedbackPolicy(-gain * ric.eta, -gain * ric.chi, grid)
    residual = float(np.max(np.abs(moments.mean - xbar.values)))
    if residual > tol_fp:
        logger.warning(
            "MKV mean consistency residual %.3e exceeds tolerance %.1e",
            residual,
            tol_fp,
        )
    return MKVSolution(
        xbar=xbar,
        ybar=ybar,
        eta=ric.eta,
        chi=ric.chi,
        eta_bar=eta_bar,
        chi_bar=chi_bar,
        feedback=feedback,
        moments=moments,
        riccati=ric,
        consistency_residual=residual,
    )


def mkv_cost(model: LQModel, policy: FeedbackPolicy) -> float:
    """Cost of the McKean-Vlasov objective when the state follows ``policy``."""
    mom = policy_moments(model, policy)
    mean, var = mom.mean, mom.variance
    s, i = policy.slope, policy.intercept

    alpha_sq = s**2 * (var + mean**2) + 2 * s * i * mean + i**2
    state_sq = model.m**2 * var + ((model.m + model.mbar) * mean) ** 2
    running = 0.5 * model.n * alpha_sq + 0.5 * state_sq
    terminal = 0.5 * (model.q**2 * var[-1] + ((model.q + model.qbar) * mean[-1]) ** 2)
    return integrate(running, model.grid.dt) + float(terminal)


def compare(
    model: LQModel, grid: Optional[TimeGrid] = None, short_horizon: bool = False
) -> ComparisonReport:
    mfg = solve_mfg(model, grid, short_horizon=short_horizon)
    mkv = solve_mkv(model, grid)
    return ComparisonReport(
        mfg_mean_T=mfg.mean_flow.terminal,
        mkv_mean_T=mkv.xbar.terminal,
        sup_mean_gap=float(np.max(np.abs(mfg.mean_flow.values - mkv.xbar.values))),
        mfg_cost_under_mkv_objective=mkv_cost(model, mfg.feedback),
        mkv_cost=mkv_cost(model, mkv.feedback),
    )
