# src/meanfield_lab/emissions.py
"""
Emissions regulation game: firms abate at rate alpha with quadratic cost,
perceived emissions follow dx = -alpha dt + sigma dW, and at maturity each
firm pays lambda per ton above the cap. When the aggregate is expected to
exceed the cap the value function solves

    v_t + sigma^2/2 v_xx - (v_x)^2/2 = 0,     v(T, x) = lambda (x - cap)^+

which the substitution u = exp(-v / sigma^2) turns into a backward heat
equation with a closed-form Gaussian solution.

Under cooperation the forward-backward system is the same as long as the
expected terminal emissions differ from the cap, so only the game view is
modelled here.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import log_ndtr, ndtr

from .rng import normal_block

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-6
EULER_STEPS = 400
CHUNK_PATHS = 4096

ArrayLike = Union[float, np.ndarray]


class EmissionsModel(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lam: float = Field(alias="lambda", gt=0)
    cap: float
    sigma: float = Field(gt=0)
    T: float = Field(gt=0)
    x0: float

    @property
    def delta(self) -> float:
        return self.x0 - self.cap - 0.5 * self.lam * self.T


class Regime(str, Enum):
    BAU = "BAU"
    ABATEMENT = "Abatement"
    CRITICAL = "Critical"


class RegimeReport(BaseModel):
    regime: Regime
    prob_exceed: float
    mean_T: float
    fixed_point_ok: bool
    delta: float
    singular: bool = False
    note: str = ""


class SimulationEstimate(BaseModel):
    n_paths: int
    seed: int
    prob_exceed: float
    prob_exceed_se: float
    mean_T: float
    mean_T_se: float
    var_T: float
    var_T_se: float


def _log_terms(model: EmissionsModel, t: ArrayLike, x: ArrayLike):
    """
    log u = logaddexp(log Phi(A), E + log Phi(B)) where u = exp(-v/sigma^2),
    A = (cap - x)/s, B = (x - cap - lam tau)/s, s = sigma sqrt(tau) and
    E = lam (lam tau / 2 - (x - cap)) / sigma^2.
    """
    tau = model.T - np.asarray(t, dtype=float)
    gap = np.asarray(x, dtype=float) - model.cap
    s = model.sigma * np.sqrt(tau)
    log_a = log_ndtr(-gap / s)
    log_b = log_ndtr((gap - model.lam * tau) / s) + model.lam * (
        0.5 * model.lam * tau - gap
    ) / model.sigma**2
    return log_a, log_b


def _split_terminal(model: EmissionsModel, t: ArrayLike, x: ArrayLike):
    t_arr, x_arr = np.broadcast_arrays(
        np.asarray(t, dtype=float), np.asarray(x, dtype=float)
    )
    if np.any(t_arr < 0) or np.any(t_arr > model.T):
        raise ValueError(f"t must lie in [0, {model.T}]")
    return t_arr, x_arr, t_arr >= model.T


def _scalar_or_array(out: np.ndarray) -> ArrayLike:
    return float(out) if out.ndim == 0 else out


def value_function(model: EmissionsModel, t: ArrayLike, x: ArrayLike) -> ArrayLike:
    t_arr, x_arr, at_T = _split_terminal(model, t, x)
    out = np.array(model.lam * np.maximum(x_arr - model.cap, 0.0), dtype=float)
    inner = ~at_T
    if np.any(inner):
        log_a, log_b = _log_terms(model, t_arr[inner], x_arr[inner])
        out[inner] = -(model.sigma**2) * np.logaddexp(log_a, log_b)
    return _scalar_or_array(out)


def hopf_cole(model: EmissionsModel, t: ArrayLike, x: ArrayLike) -> ArrayLike:
    """u = exp(-v / sigma^2), the solution of the backward heat equation."""
    v = np.asarray(value_function(model, t, x))
    return _scalar_or_array(np.exp(-v / model.sigma**2))


def optimal_feedback(model: EmissionsModel, t: ArrayLike, x: ArrayLike) -> ArrayLike:
    """Abatement rate v_x = lam Phi(B) e^E / u, which lies in [0, lam]."""
    t_arr, x_arr, at_T = _split_terminal(model, t, x)
    out = np.array(np.where(x_arr > model.cap, model.lam, 0.0), dtype=float)
    inner = ~at_T
    if np.any(inner):
        log_a, log_b = _log_terms(model, t_arr[inner], x_arr[inner])
        out[inner] = model.lam * np.exp(log_b - np.logaddexp(log_a, log_b))
    return _scalar_or_array(out)


def prob_exceed_cap(model: EmissionsModel) -> float:
    """P(x_T > cap) under the abatement feedback; delta = x0 - cap - lam T/2."""
    s = model.sigma * math.sqrt(model.T)
    half = 0.5 * model.lam * model.T
    delta = model.delta
    log_up = -model.lam * delta / model.sigma**2 + float(log_ndtr((delta - half) / s))
    log_down = float(log_ndtr((-half - delta) / s))
    log_total = np.logaddexp(log_up, log_down)
    if log_up <= log_down:
        p = math.exp(log_up - log_total)
    else:
        p = -math.expm1(log_down - log_total)
    return float(np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0)))


def classify_regime(model: EmissionsModel) -> RegimeReport:
    delta = model.delta
    if model.x0 <= model.cap and abs(model.x0 - model.cap) > SINGULAR_TOL:
        prob = float(ndtr((model.x0 - model.cap) / (model.sigma * math.sqrt(model.T))))
        return RegimeReport(
            regime=Regime.BAU,
            prob_exceed=prob,
            mean_T=model.x0,
            fixed_point_ok=True,
            delta=delta,
            note="no abatement: expected emissions stay below the cap",
        )

    prob = prob_exceed_cap(model)
    mean_T = model.x0 - model.T * model.lam * prob
    singular = (
        abs(mean_T - model.cap) <= SINGULAR_TOL
        or abs(model.x0 - model.cap) <= SINGULAR_TOL
    )
    if model.x0 > model.cap + model.lam * model.T and not singular:
        return RegimeReport(
            regime=Regime.ABATEMENT,
            prob_exceed=prob,
            mean_T=mean_T,
            fixed_point_ok=True,
            delta=delta,
            note="cap exceeded whatever the noise: x_T > cap + sigma W_T",
        )

    ok = mean_T > model.cap and not singular
    if singular:
        note = (
            "expected terminal emissions sit on the cap; "
            "the equilibrium is undefined there"
        )
    elif ok:
        note = "abatement equilibrium is self-consistent"
    else:
        note = (
            "abatement would push expected emissions below the cap: "
            "no fixed point of this type"
        )
    if singular or not ok:
        logger.warning("critical emissions regime: %s", note)
    return RegimeReport(
        regime=Regime.CRITICAL,
        prob_exceed=prob,
        mean_T=mean_T,
        fixed_point_ok=ok,
        delta=delta,
        singular=singular,
        note=note,
    )


def _simulate_chunk(
    model: EmissionsModel,
    seed: int,
    start: int,
    stop: int,
    n_steps: int,
    controlled: bool,
) -> np.ndarray:
    dt = model.T / n_steps
    noise = normal_block(seed, (), range(start, stop), n_steps)
    x = np.full(stop - start, model.x0)
    for k in range(n_steps):
        if controlled:
            x = x - optimal_feedback(model, k * dt, x) * dt
        x = x + model.sigma * math.sqrt(dt) * noise[:, k]
    return x


def simulate_emissions(
    model: EmissionsModel,
    n_paths: int,
    seed: int,
    n_steps: int = EULER_STEPS,
    feedback: str = "optimal",
    threads: Optional[int] = None,
) -> SimulationEstimate:
    """
    Euler-Maruyama paths driven by -v_x (``feedback="optimal"``) or by noise
    alone (``feedback="zero"``). Path p always uses the stream keyed by
    (seed, p), and chunks are reduced in path order.
    """
    if n_paths < 1000:
        raise ValueError("n_paths must be at least 1000")
    if feedback not in ("optimal", "zero"):
        raise ValueError(f"unknown feedback {feedback!r}")
    controlled = feedback == "optimal"
    bounds = [
        (s, min(s + CHUNK_PATHS, n_paths)) for s in range(0, n_paths, CHUNK_PATHS)
    ]

    def run(bound):
        return _simulate_chunk(model, seed, bound[0], bound[1], n_steps, controlled)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks: List[np.ndarray] = list(pool.map(run, bounds))
    else:
        chunks = [run(b) for b in bounds]
    x_T = np.concatenate(chunks)

    above = (x_T > model.cap).astype(float)
    p = float(above.mean())
    centred = x_T - x_T.mean()
    var = float(centred.var(ddof=1))
    m4 = float(np.mean(centred**4))
    return SimulationEstimate(
        n_paths=n_paths,
        seed=seed,
        prob_exceed=p,
        prob_exceed_se=math.sqrt(max(p * (1 - p), 0.0) / n_paths),
        mean_T=float(x_T.mean()),
        mean_T_se=float(x_T.std(ddof=1) / math.sqrt(n_paths)),
        var_T=var,
        var_T_se=math.sqrt(max(m4 - var**2, 0.0) / n_paths),
    )
