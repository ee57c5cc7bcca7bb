# src/meanfield_lab/quadrature.py
"""
Integration and interpolation of node-sampled functions on uniform grids.

The default rule integrates the cubic through four neighbouring nodes over
each cell, which is fourth-order accurate; one-sided stencils are used on the
first and last cells. Grids with fewer than four nodes fall back to the
trapezoid rule.
"""
from __future__ import annotations

import numpy as np

RULES = ("cubic", "trapezoid")


def _check_rule(rule: str) -> None:
    if rule not in RULES:
        raise ValueError(f"Unknown quadrature rule {rule!r}; expected one of {RULES}")


def cell_integrals(values: np.ndarray, dt: float, rule: str = "cubic") -> np.ndarray:
    """Integral of the sampled function over each cell [t_k, t_{k+1}]."""
    _check_rule(rule)
    f = np.asarray(values, dtype=float)
    n = f.size - 1
    if n < 1:
        raise ValueError("need at least two nodes to integrate")
    if rule == "trapezoid" or n < 3:
        return 0.5 * dt * (f[:-1] + f[1:])

    out = np.empty(n)
    out[0] = 9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]
    out[1:-1] = -f[:-3] + 13.0 * f[1:-2] + 13.0 * f[2:-1] - f[3:]
    out[-1] = f[-4] - 5.0 * f[-3] + 19.0 * f[-2] + 9.0 * f[-1]
    return out * (dt / 24.0)


def cumulative_integral(
    values: np.ndarray, dt: float, rule: str = "cubic"
) -> np.ndarray:
    """Running integral from t_0, same length as `values`, starting at 0."""
    cells = cell_integrals(values, dt, rule)
    return np.concatenate(([0.0], np.cumsum(cells)))


def integrate(values: np.ndarray, dt: float, rule: str = "cubic") -> float:
    return float(np.sum(cell_integrals(values, dt, rule)))


def midpoints(values: np.ndarray, kind: str = "cubic") -> np.ndarray:
    """Values at cell midpoints t_k + dt/2, length n_nodes - 1."""
    f = np.asarray(values, dtype=float)
    n = f.size - 1
    if kind == "linear" or n < 3:
        return 0.5 * (f[:-1] + f[1:])
    if kind != "cubic":
        raise ValueError(f"Unknown midpoint interpolation {kind!r}")
    out = np.empty(n)
    out[0] = 5.0 * f[0] + 15.0 * f[1] - 5.0 * f[2] + f[3]
    out[1:-1] = -f[:-3] + 9.0 * f[1:-2] + 9.0 * f[2:-1] - f[3:]
    out[-1] = f[-4] - 5.0 * f[-3] + 15.0 * f[-2] + 5.0 * f[-1]
    return out / 16.0
