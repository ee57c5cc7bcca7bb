# src/meanfield_lab/nplayer_sim.py
"""
Monte Carlo harness for the N-player LQ game.

Every player uses a feedback from ``lqmodel.FeedbackPolicy``; the drift and
the running cost see the empirical mean of the population, recomputed at each
Euler-Maruyama step on the model grid. Player j of repeat r always draws its
noise from the stream keyed (seed, r, j), so policy comparisons share common
random numbers and results do not depend on thread scheduling.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .lqmodel import FeedbackPolicy, LQModel, MeanFlow
from .rng import MAX_SEED, normal_block, stream
from .riccati import policy_mean_flow

logger = logging.getLogger(__name__)

DEVIATION_KEY = 2**32
Result = TypeVar("Result")


class SimulationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    N: int = Field(ge=2)
    n_steps: Optional[int] = Field(default=None, ge=2)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    n_repeats: int = Field(default=1, ge=1)
    threads: Optional[int] = Field(default=None, ge=0)


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    empirical_mean_flow: MeanFlow
    chaos_error: float
    chaos_error_se: float
    per_player_cost: float
    per_player_cost_se: float
    chaos_errors: np.ndarray
    repeat_costs: np.ndarray

    def summary(self) -> Dict[str, float]:
        return {
            "mean_T": self.empirical_mean_flow.terminal,
            "chaos_error": self.chaos_error,
            "chaos_error_se": self.chaos_error_se,
            "per_player_cost": self.per_player_cost,
            "per_player_cost_se": self.per_player_cost_se,
        }


class NashGapReport(BaseModel):
    gap: float
    se: float
    best_deviation: int
    gains: List[float]
    gain_ses: List[float]
    chaos_error: float
    epsilon_bound: float


class SocialCostReport(BaseModel):
    cost_mfg: float
    cost_mkv: float
    difference: float
    se: float


def _check_grid(
    model: LQModel, cfg: SimulationConfig, *policies: FeedbackPolicy
) -> None:
    if cfg.n_steps is not None and cfg.n_steps != model.grid.n_steps:
        raise ValueError(
            f"simulation steps ({cfg.n_steps}) must match the model grid "
            f"({model.grid.n_steps})"
        )
    for policy in policies:
        model.grid.check_same(policy.grid, "policy")


def _standard_error(
    samples: np.ndarray, fallback: Optional[np.ndarray] = None
) -> float:
    samples = np.asarray(samples, dtype=float)
    if samples.size >= 2:
        return float(samples.std(ddof=1) / math.sqrt(samples.size))
    if fallback is not None and np.asarray(fallback).size >= 2:
        return _standard_error(fallback)
    return 0.0


def _run_repeat(
    model: LQModel,
    policy: FeedbackPolicy,
    seed: int,
    repeat: int,
    keys: Sequence[int],
    deviation: Optional[FeedbackPolicy] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    One replication of the game. Returns the empirical mean path and the
    realized cost of every player. With ``deviation`` player 0 follows it.
    """
    grid = model.grid
    dt, n_steps, n_players = grid.dt, grid.n_steps, len(keys)
    noise = normal_block(seed, (repeat,), keys, n_steps)
    scale = model.sigma * math.sqrt(dt)

    x = np.full(n_players, model.x0)
    cost = np.zeros(n_players)
    means = np.empty(grid.n_nodes)

    def running(k: int, alpha: np.ndarray, xbar: float) -> np.ndarray:
        state = model.m[k] * x + model.mbar[k] * xbar
        return 0.5 * model.n[k] * alpha**2 + 0.5 * state**2

    def controls(k: int) -> np.ndarray:
        alpha = policy.at_node(k, x)
        if deviation is not None:
            alpha[0] = deviation.at_node(k, x[0])
        return alpha

    for k in range(n_steps):
        xbar = float(np.sort(x).mean())
        means[k] = xbar
        alpha = controls(k)
        weight = 0.5 * dt if k == 0 else dt
        cost += weight * running(k, alpha, xbar)
        drift = (
            model.a[k] * x + model.abar[k] * xbar + model.b[k] * alpha + model.beta[k]
        )
        x = x + drift * dt + scale * noise[:, k]

    xbar = float(np.sort(x).mean())
    means[-1] = xbar
    cost += 0.5 * dt * running(n_steps, controls(n_steps), xbar)
    cost += 0.5 * (model.q * x + model.qbar * xbar) ** 2
    return means, cost


def _map_repeats(
    func: Callable[[int], Result], n_repeats: int, threads: Optional[int]
) -> List[Result]:
    if threads and threads > 1 and n_repeats > 1:
        with ThreadPoolExecutor(max_workers=min(threads, n_repeats)) as pool:
            return list(pool.map(func, range(n_repeats)))
    return [func(r) for r in range(n_repeats)]


def simulate_game(
    model: LQModel,
    policy: FeedbackPolicy,
    cfg: SimulationConfig,
    player_order: Optional[Sequence[int]] = None,
) -> EnsembleStats:
    """
    All players follow ``policy``. ``player_order`` relabels the per-player
    streams (a permutation of range(N)); the empirical mean does not depend on it.
    """
    _check_grid(model, cfg, policy)
    if player_order is None:
        keys = list(range(cfg.N))
    else:
        keys = [int(k) for k in player_order]
    if sorted(keys) != list(range(cfg.N)):
        raise ValueError("player_order must be a permutation of range(N)")

    reference = policy_mean_flow(model, policy).values
    runs = _map_repeats(
        lambda r: _run_repeat(model, policy, cfg.seed, r, keys),
        cfg.n_repeats,
        cfg.threads,
    )
    paths = np.stack([means for means, _ in runs])
    costs = np.stack([cost for _, cost in runs])
    chaos = np.max(np.abs(paths - reference), axis=1)
    repeat_costs = costs.mean(axis=1)
    logger.debug(
        "simulated N=%d over %d repeats: chaos error %.4g",
        cfg.N,
        cfg.n_repeats,
        chaos.mean(),
    )
    return EnsembleStats(
        empirical_mean_flow=MeanFlow(paths.mean(axis=0), model.grid),
        chaos_error=float(chaos.mean()),
        chaos_error_se=_standard_error(chaos),
        per_player_cost=float(repeat_costs.mean()),
        per_player_cost_se=_standard_error(repeat_costs, costs.ravel()),
        chaos_errors=chaos,
        repeat_costs=repeat_costs,
    )


def random_affine_deviations(
    policy: FeedbackPolicy, count: int, seed: int, scale: float = 0.5
) -> List[FeedbackPolicy]:
    """Constant shifts of slope and intercept drawn uniformly from [-scale, scale]."""
    out = []
    for j in range(count):
        rng = stream(seed, DEVIATION_KEY, j)
        d_slope, d_intercept = rng.uniform(-scale, scale, size=2)
        out.append(policy.perturbed(float(d_slope), float(d_intercept)))
    return out


def nash_gap(
    model: LQModel,
    equilibrium_policy: FeedbackPolicy,
    deviation_policies: Sequence[FeedbackPolicy],
    cfg: SimulationConfig,
) -> NashGapReport:
    """
    Player 0 tries each deviation while the others keep the equilibrium
    policy. The gain of a deviation is the baseline cost of player 0 minus its
    cost after deviating, on the same noise; the gap is the largest mean gain.
    """
    if not deviation_policies:
        raise ValueError("nash_gap needs at least one deviation policy")
    _check_grid(model, cfg, equilibrium_policy, *deviation_policies)
    keys = list(range(cfg.N))
    reference = policy_mean_flow(model, equilibrium_policy).values

    def deviated(r: int, dev: FeedbackPolicy) -> float:
        _, cost = _run_repeat(model, equilibrium_policy, cfg.seed, r, keys, dev)
        return float(cost[0])

    def repeat(r: int) -> Tuple[float, np.ndarray]:
        means, base = _run_repeat(model, equilibrium_policy, cfg.seed, r, keys)
        gains = np.array([base[0] - deviated(r, dev) for dev in deviation_policies])
        return float(np.max(np.abs(means - reference))), gains

    runs = _map_repeats(repeat, cfg.n_repeats, cfg.threads)
    chaos = np.array([c for c, _ in runs])
    gains = np.stack([g for _, g in runs])
    mean_gains = gains.mean(axis=0)
    ses = [_standard_error(gains[:, j]) for j in range(gains.shape[1])]
    best = int(np.argmax(mean_gains))
    if cfg.n_repeats < 2:
        logger.warning("nash_gap with a single repeat reports a zero standard error")
    chaos_error = float(chaos.mean())
    return NashGapReport(
        gap=float(mean_gains[best]),
        se=ses[best],
        best_deviation=best,
        gains=[float(g) for g in mean_gains],
        gain_ses=ses,
        chaos_error=chaos_error,
        epsilon_bound=5.0 * (chaos_error + 3.0 * ses[best]),
    )


def social_cost_comparison(
    model: LQModel,
    mfg_policy: FeedbackPolicy,
    mkv_policy: FeedbackPolicy,
    cfg: SimulationConfig,
) -> SocialCostReport:
    """Average player cost when everybody adopts one policy or the other, same noise."""
    _check_grid(model, cfg, mfg_policy, mkv_policy)
    keys = list(range(cfg.N))

    def repeat(r: int) -> Tuple[np.ndarray, np.ndarray]:
        _, first = _run_repeat(model, mfg_policy, cfg.seed, r, keys)
        _, second = _run_repeat(model, mkv_policy, cfg.seed, r, keys)
        return first, second

    runs = _map_repeats(repeat, cfg.n_repeats, cfg.threads)
    first = np.stack([a for a, _ in runs])
    second = np.stack([b for _, b in runs])
    cost_mfg = float(first.mean(axis=1).mean())
    cost_mkv = float(second.mean(axis=1).mean())
    paired = first.mean(axis=1) - second.mean(axis=1)
    return SocialCostReport(
        cost_mfg=cost_mfg,
        cost_mkv=cost_mkv,
        difference=cost_mfg - cost_mkv,
        se=_standard_error(paired, (first - second).ravel()),
    )
