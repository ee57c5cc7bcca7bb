# src/meanfield_lab/riccati.py
"""
Decoupling of the streamlined linear forward-backward system.

With the ansatz y = eta x + chi, eta solves the Riccati equation

    eta' = -b eta^2 - 2 a eta + m,            eta_T = q

and chi the linear offset equation

    chi' + (a + b eta) chi = d - c eta,       chi_T = r

both integrated backward with classical RK4 at the grid step. The closed-loop
state is Gaussian; ``forward_moments`` returns its mean and variance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import BlowUpError
from .lqmodel import FeedbackPolicy, LQModel, MeanFlow, ReducedCoefficients, TimeGrid
from .quadrature import cumulative_integral

logger = logging.getLogger(__name__)

BLOW_UP_THRESHOLD = 1e10
RESOLVE_TOL = 1e-2
REFINE_LEVELS = 4
CROSS_CHECK_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    eta: np.ndarray
    chi: np.ndarray
    grid: TimeGrid
    sigma: float = 0.0
    blow_up: Optional[float] = None

    @property
    def z_scale(self) -> np.ndarray:
        return self.sigma * self.eta

    @property
    def ok(self) -> bool:
        return self.blow_up is None

    def raise_for_blow_up(self, message: str = "Riccati equation blows up") -> None:
        if self.blow_up is not None:
            raise BlowUpError(message, self.blow_up)


@dataclass(frozen=True, eq=False)
class MomentPaths:
    mean: np.ndarray
    variance: np.ndarray
    grid: TimeGrid


# ---------- cell-local coefficient evaluation ----------
def _cell_interpolant(
    nodes: np.ndarray, mids: np.ndarray, k: int
) -> Callable[[float], float]:
    """Quadratic through (t_k, t_k + dt/2, t_{k+1}) as a function of s in [0, 1]."""
    f0, fm, f1 = nodes[k], mids[k], nodes[k + 1]

    def at(s: float) -> float:
        if s == 0.0:
            return f0
        if s == 0.5:
            return fm
        if s == 1.0:
            return f1
        return (
            2 * (s - 0.5) * (s - 1) * f0
            - 4 * s * (s - 1) * fm
            + 2 * s * (s - 0.5) * f1
        )

    return at


def _coeff_funcs(rc: ReducedCoefficients, k: int, names: str):
    return [_cell_interpolant(getattr(rc, n), rc.mids[n], k) for n in names]


def _rk4_back(rhs, y, s: float, hs: float, dt: float):
    """One RK4 step from cell fraction s down to s - hs."""
    h = hs * dt
    k1 = rhs(y, s)
    k2 = rhs(y - 0.5 * h * k1, s - 0.5 * hs)
    k3 = rhs(y - 0.5 * h * k2, s - 0.5 * hs)
    k4 = rhs(y - h * k3, s - hs)
    return y - h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _resolved(coarse: float, fine: float) -> bool:
    if not (np.isfinite(coarse) and np.isfinite(fine)):
        return False
    if abs(fine) > BLOW_UP_THRESHOLD:
        return False
    return abs(coarse - fine) <= RESOLVE_TOL * max(1.0, abs(fine))


def _checked_substep(
    rhs, y: float, s: float, hs: float, dt: float
) -> Tuple[float, bool]:
    coarse = _rk4_back(rhs, y, s, hs, dt)
    half = _rk4_back(rhs, y, s, hs / 2, dt)
    fine = _rk4_back(rhs, half, s - hs / 2, hs / 2, dt)
    return coarse, _resolved(coarse, fine)


def _step_cell(rhs, y: float, dt: float) -> Tuple[float, Optional[float]]:
    """
    Advance eta across one cell from s=1 to s=0. Returns the new value and,
    when the cell cannot be resolved at dt/16, the cell fraction of the last
    resolved time.
    """
    value, ok = _checked_substep(rhs, y, 1.0, 1.0, dt)
    if ok:
        return value, None
    for level in range(1, REFINE_LEVELS + 1):
        n_sub = 2**level
        hs = 1.0 / n_sub
        cur = y
        for j in range(n_sub):
            s = 1.0 - j * hs
            nxt, ok = _checked_substep(rhs, cur, s, hs, dt)
            if not ok:
                if level == REFINE_LEVELS:
                    return cur, s
                break
            cur = nxt
        else:
            return cur, None
    raise AssertionError("unreachable")


# ---------- public API ----------
def solve_riccati(rc: ReducedCoefficients, grid: TimeGrid) -> RiccatiSolution:
    grid.check_same(rc.grid, "reduced coefficients")
    n, dt = grid.n_steps, grid.dt
    eta = np.full(grid.n_nodes, np.nan)
    eta[-1] = rc.q
    blow_up: Optional[float] = None

    for k in range(n - 1, -1, -1):
        fa, fb, fm = _coeff_funcs(rc, k, "abm")

        def rhs(e, s, fa=fa, fb=fb, fm=fm):
            return -fb(s) * e * e - 2.0 * fa(s) * e + fm(s)

        value, failed_at = _step_cell(rhs, eta[k + 1], dt)
        if failed_at is not None:
            blow_up = grid.times[k] + failed_at * dt
            logger.debug("Riccati blow-up detected near t=%.6g", blow_up)
            break
        eta[k] = value

    chi = np.full(grid.n_nodes, np.nan)
    if blow_up is None:
        chi = solve_chi(rc, eta, grid)
    return RiccatiSolution(eta=eta, chi=chi, grid=grid, sigma=rc.sigma, blow_up=blow_up)


def chi_quadrature(
    rc: ReducedCoefficients, eta: np.ndarray, grid: TimeGrid, rule: str = "cubic"
) -> np.ndarray:
    """
    chi_t = r E(t,T) - int_t^T (d - c eta)_s E(t,s) ds
    with E(t,s) = exp(int_t^s (a + b eta)).
    """
    kappa = rc.a + rc.b * eta
    A = cumulative_integral(kappa, grid.dt, rule)
    A = A - A[-1]
    source = (rc.d - rc.c * eta) * np.exp(A)
    G = cumulative_integral(source, grid.dt, rule)
    tail = G[-1] - G
    return np.exp(-A) * (rc.r - tail)


def chi_backward_ode(rc: ReducedCoefficients, grid: TimeGrid) -> np.ndarray:
    """Backward RK4 on the joint (eta, chi) system."""
    n, dt = grid.n_steps, grid.dt
    out = np.empty(grid.n_nodes)
    y = np.array([rc.q, rc.r])
    out[-1] = rc.r
    for k in range(n - 1, -1, -1):
        fa, fb, fc, fm, fd = _coeff_funcs(rc, k, "abcmd")

        def rhs(v, s, fa=fa, fb=fb, fc=fc, fm=fm, fd=fd):
            e, x = v
            a_s, b_s = fa(s), fb(s)
            return np.array(
                [
                    -b_s * e * e - 2.0 * a_s * e + fm(s),
                    -(a_s + b_s * e) * x + fd(s) - fc(s) * e,
                ]
            )

        y = _rk4_back(rhs, y, 1.0, 1.0, dt)
        out[k] = y[1]
    return out


def solve_chi(
    rc: ReducedCoefficients,
    eta: np.ndarray,
    grid: TimeGrid,
    method: str = "ode",
    cross_check: bool = True,
) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (grid.n_nodes,) or not np.all(np.isfinite(eta)):
        raise BlowUpError("chi needs a finite eta on every grid node")
    if method not in ("ode", "quadrature"):
        raise ValueError(f"unknown chi method {method!r}")

    quad = chi_quadrature(rc, eta, grid)
    if method == "quadrature" and not cross_check:
        return quad
    ode = chi_backward_ode(rc, grid)
    if cross_check:
        gap = chi_gap(quad, ode)
        if gap > CROSS_CHECK_RTOL:
            logger.warning(
                "chi quadrature and backward ODE disagree: relative gap %.3e", gap
            )
    return ode if method == "ode" else quad


def chi_gap(first: np.ndarray, second: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(second))), 1.0)
    return float(np.max(np.abs(first - second))) / scale


def linear_moments(
    kappa_mean: np.ndarray,
    forcing: np.ndarray,
    kappa_var: np.ndarray,
    sigma: float,
    x0: float,
    grid: TimeGrid,
    rule: str = "cubic",
) -> MomentPaths:
    """
    Moments of dx = (kappa_mean E[x] + (kappa_var)(x - E[x]) + forcing) dt + sigma dW:
    mean' = kappa_mean mean + forcing, var' = 2 kappa_var var + sigma^2.
    """
    dt = grid.dt
    A = cumulative_integral(kappa_mean, dt, rule)
    mean = np.exp(A) * (x0 + cumulative_integral(forcing * np.exp(-A), dt, rule))
    Av = cumulative_integral(kappa_var, dt, rule)
    var = sigma**2 * np.exp(2 * Av) * cumulative_integral(np.exp(-2 * Av), dt, rule)
    mean[0] = x0
    var[0] = 0.0
    return MomentPaths(mean=mean, variance=np.maximum(var, 0.0), grid=grid)


def forward_moments(
    rc: ReducedCoefficients,
    ric: RiccatiSolution,
    sigma: float,
    x0: float,
    grid: TimeGrid,
    rule: str = "cubic",
) -> MomentPaths:
    ric.raise_for_blow_up("cannot propagate moments past a Riccati blow-up")
    kappa = rc.a + rc.b * ric.eta
    return linear_moments(kappa, rc.b * ric.chi + rc.c, kappa, sigma, x0, grid, rule)


def policy_moments(
    model: LQModel, policy: FeedbackPolicy, mean_flow: Optional[MeanFlow] = None
) -> MomentPaths:
    """
    Gaussian moments of the state under an affine feedback. With ``mean_flow``
    the interaction is frozen (game view); without it the drift couples to the
    state's own mean (McKean-Vlasov view).
    """
    model.grid.check_same(policy.grid, "policy")
    kappa_var = model.a + model.b * policy.slope
    if mean_flow is None:
        kappa_mean = kappa_var + model.abar
        forcing = model.b * policy.intercept + model.beta
    else:
        model.grid.check_same(mean_flow.grid, "mean flow")
        kappa_mean = kappa_var
        forcing = (
            model.abar * mean_flow.values + model.b * policy.intercept + model.beta
        )
    return linear_moments(
        kappa_mean, forcing, kappa_var, model.sigma, model.x0, model.grid
    )


def policy_mean_flow(model: LQModel, policy: FeedbackPolicy) -> MeanFlow:
    """Mean of the McKean-Vlasov limit under the Euler scheme on the model grid."""
    dt = model.grid.dt
    out: List[float] = [model.x0]
    for k in range(model.grid.n_steps):
        mu = out[-1]
        drift = (
            (model.a[k] + model.abar[k] + model.b[k] * policy.slope[k]) * mu
            + model.b[k] * policy.intercept[k]
            + model.beta[k]
        )
        out.append(mu + dt * drift)
    return MeanFlow(np.array(out), model.grid)
