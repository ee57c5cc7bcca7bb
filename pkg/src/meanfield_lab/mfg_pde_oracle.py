# src/meanfield_lab/mfg_pde_oracle.py
"""
Finite-difference realization of the MFG fixed-point map for models whose
control enters linearly in the drift with a quadratic cost, and whose
interaction goes through the mean only.

Given a frozen mean flow the HJB equation

    v_t + sigma^2/2 v_xx + H(t, x, v_x, mean) = 0,   v(T) = g(x, mean_T)

is swept backward; the optimal drift is pushed through the Kolmogorov
equation forward, and the mean of the resulting density is fed back with
damping until the update is below tolerance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve_banded

from .emissions import EmissionsModel
from .errors import CFLError, ModelValidationError, NonConvergenceError
from .lqmodel import LQModel, MeanFlow, TimeGrid

logger = logging.getLogger(__name__)

MIN_NX = 50
STD_WIDTHS = 6.0
STARTUP_STEPS = 2
PECLET_LIMIT = 2.0

FieldFn = Callable[[float, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SpaceGrid:
    x_min: float
    x_max: float
    n_x: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ModelValidationError("x_max must exceed x_min")
        if self.n_x < MIN_NX:
            raise ModelValidationError(f"n_x must be at least {MIN_NX}, got {self.n_x}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_x - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_x)

    @property
    def faces(self) -> np.ndarray:
        x = self.x
        return 0.5 * (x[:-1] + x[1:])

    def central(self, fraction: float = 0.5) -> np.ndarray:
        """Mask of nodes within ``fraction`` of the half-width around the centre."""
        centre = 0.5 * (self.x_min + self.x_max)
        half = 0.5 * (self.x_max - self.x_min)
        return np.abs(self.x - centre) <= fraction * half


@dataclass(frozen=True, eq=False)
class OracleModel:
    """
    dx = (drift(t, x, mean) + gain(t) alpha) dt + sigma dW with running cost
    control_cost(t) alpha^2 / 2 + running(t, x, mean) and terminal cost
    terminal(x, mean_T). The minimizing control is -(gain / control_cost) v_x.
    """

    sigma: float
    x0: float
    T: float
    drift: FieldFn
    gain: Callable[[float], float]
    control_cost: Callable[[float], float]
    running: FieldFn
    terminal: Callable[[np.ndarray, float], np.ndarray]
    interacts: bool = True
    drift_hint: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ModelValidationError("the PDE oracle needs sigma > 0")

    def control(self, t: float, p: np.ndarray) -> np.ndarray:
        return -(self.gain(t) / self.control_cost(t)) * p

    def controlled_drift(
        self, t: float, x: np.ndarray, p: np.ndarray, mean: float
    ) -> np.ndarray:
        return self.drift(t, x, mean) + self.gain(t) * self.control(t, p)

    def hamiltonian(
        self, t: float, x: np.ndarray, p: np.ndarray, mean: float
    ) -> np.ndarray:
        k = self.gain(t) ** 2 / self.control_cost(t)
        return self.drift(t, x, mean) * p - 0.5 * k * p**2 + self.running(t, x, mean)


def _zero(t, x, mean):
    return np.zeros_like(x)


def from_lq(model: LQModel) -> OracleModel:
    times = model.grid.times

    def coef(name):
        values = getattr(model, name)
        return lambda t: float(np.interp(t, times, values))

    a, abar, beta, b, n, m, mbar = (
        coef(k) for k in ("a", "abar", "beta", "b", "n", "m", "mbar")
    )
    q, qbar = model.q, model.qbar
    drift_hint = float(
        np.max(np.abs(model.beta)) + np.max(np.abs(model.abar)) * abs(model.x0)
    )
    return OracleModel(
        sigma=model.sigma,
        x0=model.x0,
        T=model.T,
        drift=lambda t, x, mu: a(t) * x + abar(t) * mu + beta(t),
        gain=b,
        control_cost=n,
        running=lambda t, x, mu: 0.5 * (m(t) * x + mbar(t) * mu) ** 2,
        terminal=lambda x, mu: 0.5 * (q * x + qbar * mu) ** 2,
        interacts=not model.is_decoupled(),
        drift_hint=drift_hint,
        name="lq",
    )


def additive_running(T: float, x0: float, sigma: float) -> OracleModel:
    """dx = alpha dt + sigma dW, f = alpha^2/2 + x mean, g = 0."""
    return OracleModel(
        sigma=sigma,
        x0=x0,
        T=T,
        drift=_zero,
        gain=lambda t: 1.0,
        control_cost=lambda t: 1.0,
        running=lambda t, x, mu: x * mu,
        terminal=lambda x, mu: np.zeros_like(x),
        name="additive_running",
    )


def from_emissions(model: EmissionsModel) -> OracleModel:
    """
    Abatement enters as dx = -alpha dt; the penalty applies only if the mean
    ends above the cap.
    """
    lam, cap = model.lam, model.cap
    return OracleModel(
        sigma=model.sigma,
        x0=model.x0,
        T=model.T,
        drift=_zero,
        gain=lambda t: -1.0,
        control_cost=lambda t: 1.0,
        running=_zero,
        terminal=lambda x, mu: lam * np.maximum(x - cap, 0.0) * float(mu > cap),
        drift_hint=lam,
        name="emissions",
    )


def make_space_grid(x_min: float, x_max: float, n_x: int) -> SpaceGrid:
    return SpaceGrid(float(x_min), float(x_max), int(n_x))


def centered_space_grid(
    desc: OracleModel, n_x: int, margin: Optional[float] = None
) -> SpaceGrid:
    """Grid centred at x0 covering six driftless standard deviations plus ``margin``."""
    if margin is None:
        margin = max(1.0, abs(desc.x0)) + desc.drift_hint * desc.T
    half = STD_WIDTHS * desc.sigma * np.sqrt(desc.T) + margin
    return make_space_grid(desc.x0 - half, desc.x0 + half, n_x)


@dataclass(frozen=True, eq=False)
class ValueSurface:
    values: np.ndarray
    tgrid: TimeGrid
    sgrid: SpaceGrid

    def gradient(self) -> np.ndarray:
        return np.gradient(self.values, self.sgrid.dx, axis=1, edge_order=2)

    def face_gradient(self) -> np.ndarray:
        return np.diff(self.values, axis=1) / self.sgrid.dx


@dataclass(frozen=True, eq=False)
class DensityPath:
    values: np.ndarray
    tgrid: TimeGrid
    sgrid: SpaceGrid

    def mass(self) -> np.ndarray:
        return trapezoid(self.values, self.sgrid.x, axis=1)

    def means(self) -> np.ndarray:
        x = self.sgrid.x
        return (self.values @ x) / self.values.sum(axis=1)

    def variances(self) -> np.ndarray:
        x = self.sgrid.x
        mean = self.means()
        second = (self.values @ x**2) / self.values.sum(axis=1)
        return second - mean**2


@dataclass(frozen=True, eq=False)
class PicardResult:
    mean_flow: MeanFlow
    value: ValueSurface
    density: DensityPath
    residuals: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def raise_for_convergence(self) -> None:
        if not self.converged:
            raise NonConvergenceError(
                f"Picard iteration did not converge in {self.iterations} iterations "
                f"(last residual {self.residuals[-1]:.3e})",
                self.residuals,
            )

    def columns(self) -> Dict[str, np.ndarray]:
        """Long-format (t, x, v, density) table."""
        t = self.value.tgrid.times
        x = self.value.sgrid.x
        tt, xx = np.meshgrid(t, x, indexing="ij")
        return {
            "t": tt.ravel(),
            "x": xx.ravel(),
            "v": self.value.values.ravel(),
            "density": self.density.values.ravel(),
        }


# ---------- linear algebra ----------
def _second_difference_system(n_x: int, weight: float) -> np.ndarray:
    """Banded form of I - weight * D2 with D2 = 0 on the boundary rows."""
    ab = np.zeros((3, n_x))
    ab[1, :] = 1.0
    ab[1, 1:-1] += 2.0 * weight
    ab[0, 2:] = -weight
    ab[2, :-2] = -weight
    return ab


def _apply_second_difference(v: np.ndarray, weight: float) -> np.ndarray:
    out = np.zeros_like(v)
    out[1:-1] = weight * (v[2:] - 2.0 * v[1:-1] + v[:-2])
    return out


def _check_cfl(
    drift: np.ndarray, dt: float, dx: float, sigma: Optional[float] = None
) -> None:
    peak = float(np.max(np.abs(drift))) if drift.size else 0.0
    if peak == 0.0:
        return
    if dt * peak > dx:
        raise CFLError(f"drift {peak:.4g} violates dt*|drift| <= dx", dx / peak)
    if sigma is not None and dt * peak**2 > sigma**2:
        raise CFLError(
            f"drift {peak:.4g} violates dt*|drift|^2 <= sigma^2", sigma**2 / peak**2
        )


# ---------- HJB ----------
def solve_hjb(
    mean_flow: MeanFlow, desc: OracleModel, tgrid: TimeGrid, sgrid: SpaceGrid
) -> ValueSurface:
    """
    Backward sweep: Crank-Nicolson diffusion with a Heun predictor-corrector
    for the explicit Hamiltonian, after two implicit-Euler start-up steps.
    """
    tgrid.check_same(mean_flow.grid, "mean flow")
    x, dx, dt = sgrid.x, sgrid.dx, tgrid.dt
    times, mu = tgrid.times, mean_flow.values
    diff = 0.5 * desc.sigma**2 / dx**2

    implicit = _second_difference_system(sgrid.n_x, dt * diff)
    crank = _second_difference_system(sgrid.n_x, 0.5 * dt * diff)

    def hamiltonian(k: int, v: np.ndarray) -> np.ndarray:
        p = np.gradient(v, dx, edge_order=2)
        drift = desc.controlled_drift(times[k], x, p, mu[k])
        _check_cfl(drift, dt, dx, desc.sigma)
        return desc.hamiltonian(times[k], x, p, mu[k])

    values = np.empty((tgrid.n_nodes, sgrid.n_x))
    values[-1] = desc.terminal(x, mu[-1])
    for k in range(tgrid.n_steps - 1, -1, -1):
        upper = values[k + 1]
        h_upper = hamiltonian(k + 1, upper)
        predictor = solve_banded((1, 1), implicit, upper + dt * h_upper)
        if k >= tgrid.n_steps - STARTUP_STEPS:
            values[k] = predictor
            continue
        h_lower = hamiltonian(k, predictor)
        rhs = upper + _apply_second_difference(upper, 0.5 * dt * diff)
        rhs += 0.5 * dt * (h_upper + h_lower)
        values[k] = solve_banded((1, 1), crank, rhs)
    return ValueSurface(values, tgrid, sgrid)


# ---------- Kolmogorov ----------
def gaussian_initial(sgrid: SpaceGrid, x0: float) -> np.ndarray:
    """Dirac mass at x0 mollified to a Gaussian of width 2 dx, unit mass."""
    width = 2.0 * sgrid.dx
    m = np.exp(-0.5 * ((sgrid.x - x0) / width) ** 2)
    return m / (m.sum() * sgrid.dx)


def _face_drifts(drift, k: int, t: float, faces: np.ndarray) -> np.ndarray:
    if callable(drift):
        return np.broadcast_to(np.asarray(drift(t, faces), dtype=float), faces.shape)
    return np.asarray(drift[k], dtype=float)


def solve_kolmogorov(
    drift: Union[np.ndarray, Callable[[float, np.ndarray], np.ndarray]],
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    initial: np.ndarray,
    sigma: float,
) -> DensityPath:
    """
    Implicit finite-volume sweep of m_t = sigma^2/2 m_xx - (drift m)_x with
    zero flux at the walls. ``drift`` gives face values, either as an array
    (n_nodes, n_x - 1) or as a callable of (t, x_faces).
    """
    dx, dt, n_x = sgrid.dx, tgrid.dt, sgrid.n_x
    faces, times = sgrid.faces, tgrid.times
    D = 0.5 * sigma**2
    ratio = dt / dx

    m = np.asarray(initial, dtype=float).copy()
    if m.shape != (n_x,) or np.any(m < 0):
        raise ModelValidationError(
            "initial density must be nonnegative on the space grid"
        )
    out = np.empty((tgrid.n_nodes, n_x))
    out[0] = m
    for k in range(tgrid.n_steps):
        beta = _face_drifts(drift, k + 1, times[k + 1], faces)
        _check_cfl(beta, dt, dx)
        central = np.abs(beta) * dx <= PECLET_LIMIT * D
        w_left = np.where(central, 0.5, (beta > 0).astype(float))
        w_right = 1.0 - w_left
        # face flux = alpha * m_left + gamma * m_right
        alpha = beta * w_left + D / dx
        gamma = beta * w_right - D / dx

        ab = np.zeros((3, n_x))
        ab[1, :] = 1.0
        ab[1, :-1] += ratio * alpha
        ab[1, 1:] -= ratio * gamma
        ab[0, 1:] = ratio * gamma
        ab[2, :-1] = -ratio * alpha
        m = solve_banded((1, 1), ab, m)
        out[k + 1] = m
    return DensityPath(out, tgrid, sgrid)


# ---------- fixed point ----------
def apply_map(
    mean_flow: MeanFlow, desc: OracleModel, tgrid: TimeGrid, sgrid: SpaceGrid
):
    """One application of the fixed-point map: value, density and the new mean."""
    value = solve_hjb(mean_flow, desc, tgrid, sgrid)
    p_faces = value.face_gradient()
    faces, times, mu = sgrid.faces, tgrid.times, mean_flow.values
    drift = np.stack(
        [
            desc.controlled_drift(times[k], faces, p_faces[k], mu[k])
            for k in range(tgrid.n_nodes)
        ]
    )
    initial = gaussian_initial(sgrid, desc.x0)
    density = solve_kolmogorov(drift, tgrid, sgrid, initial, desc.sigma)
    return value, density, MeanFlow(density.means(), tgrid)


def picard_solve(
    desc: OracleModel,
    tgrid: TimeGrid,
    sgrid: SpaceGrid,
    damping: float = 0.5,
    tol: float = 1e-6,
    max_iter: int = 50,
    initial: Optional[MeanFlow] = None,
) -> PicardResult:
    if not 0 < damping <= 1:
        raise ModelValidationError(f"damping must lie in (0, 1], got {damping}")
    if max_iter < 1:
        raise ModelValidationError("max_iter must be at least 1")
    current = initial or MeanFlow.constant(tgrid, desc.x0)
    residuals: List[float] = []

    for it in range(max_iter):
        value, density, image = apply_map(current, desc, tgrid, sgrid)
        residual = float(np.max(np.abs(image.values - current.values)))
        residuals.append(residual)
        logger.debug("picard iteration %d residual %.3e", it + 1, residual)
        if not desc.interacts:
            return PicardResult(image, value, density, residuals, True)
        if residual < tol:
            return PicardResult(current, value, density, residuals, True)
        relaxed = damping * image.values + (1 - damping) * current.values
        current = MeanFlow(relaxed, tgrid)

    logger.warning(
        "Picard iteration stopped after %d iterations, residual %.3e",
        max_iter,
        residuals[-1],
    )
    return PicardResult(current, value, density, residuals, False)
