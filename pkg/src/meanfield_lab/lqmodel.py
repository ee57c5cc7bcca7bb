# src/meanfield_lab/lqmodel.py
"""
Model data for the scalar linear-quadratic game and its reductions.

Coefficient functions of time are stored as samples on a ``TimeGrid`` and are
understood as the piecewise-linear interpolant of those samples. Everything
here is immutable once built: arrays are flagged read-only.

The streamlined forward-backward system shared by both limits is::

    dx = [a x + b y + c] dt + sigma dW
    dy = [m x - a y + d] dt + z dW,      y_T = q x_T + r

``reduce_mfg`` and ``reduce_mkv`` map raw LQ coefficients onto (a, b, c, m, d,
q, r) for the two limits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from .errors import GridMismatchError, ModelValidationError
from .quadrature import midpoints

ArrayLike = Union[float, int, np.ndarray, list, tuple]

TIME_COEFFICIENTS = ("a", "abar", "b", "beta", "m", "mbar", "n")
SCALAR_COEFFICIENTS = ("q", "qbar", "sigma", "x0")


def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if not (isinstance(self.T, (int, float)) and math.isfinite(self.T)):
            raise ModelValidationError(
                f"horizon T must be a finite number, got {self.T!r}"
            )
        if self.T <= 0:
            raise ModelValidationError(f"horizon T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ModelValidationError(
                f"n_steps must be an integer >= 2, got {self.n_steps!r}"
            )
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def check_same(self, other: "TimeGrid", what: str = "flow") -> None:
        if self != other:
            raise GridMismatchError(
                f"{what} lives on grid (T={other.T}, n_steps={other.n_steps}) "
                f"but the model uses (T={self.T}, n_steps={self.n_steps})"
            )


def make_grid(T: float, n_steps: int) -> TimeGrid:
    return TimeGrid(T=T, n_steps=n_steps)


def broadcast(
    grid: TimeGrid, value: ArrayLike, name: str = "coefficient"
) -> np.ndarray:
    """Turn a constant or a list of node samples into a node array."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(grid.n_nodes, float(arr))
    if arr.shape != (grid.n_nodes,):
        raise ModelValidationError(
            f"{name} must be a scalar or have {grid.n_nodes} samples, "
            f"got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ModelValidationError(f"{name} has non-finite samples")
    return arr


@dataclass(frozen=True, eq=False)
class MeanFlow:
    """Deterministic flow t -> mu_t sampled at every grid node."""

    values: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != (self.grid.n_nodes,):
            raise ModelValidationError(
                f"mean flow needs {self.grid.n_nodes} values, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ModelValidationError("mean flow has non-finite entries")
        object.__setattr__(self, "values", _frozen(arr))

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "MeanFlow":
        return cls(np.full(grid.n_nodes, float(value)), grid)

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def mid(self) -> np.ndarray:
        return midpoints(self.values, "cubic")

    def at(self, t: ArrayLike) -> np.ndarray:
        return np.interp(t, self.grid.times, self.values)


@dataclass(frozen=True, eq=False)
class LQModel:
    """
    Scalar LQ game: drift a x + abar mean + b alpha + beta, running cost
    (n alpha^2 + (m x + mbar mean)^2) / 2, terminal cost (q x + qbar mean)^2 / 2.
    """

    grid: TimeGrid
    a: np.ndarray
    abar: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    m: np.ndarray
    mbar: np.ndarray
    n: np.ndarray
    q: float = 0.0
    qbar: float = 0.0
    sigma: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        for name in TIME_COEFFICIENTS:
            object.__setattr__(
                self, name, _frozen(broadcast(self.grid, getattr(self, name), name))
            )
        for name in SCALAR_COEFFICIENTS:
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ModelValidationError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if np.min(self.b) <= 0:
            raise ModelValidationError("b must be strictly positive at every grid node")
        if np.min(self.n) <= 0:
            raise ModelValidationError("n must be strictly positive at every grid node")
        if self.sigma < 0:
            raise ModelValidationError(f"sigma must be non-negative, got {self.sigma}")

    @property
    def T(self) -> float:
        return self.grid.T

    def mid(self, name: str) -> np.ndarray:
        return midpoints(getattr(self, name), "linear")

    def with_updates(self, **changes: Any) -> "LQModel":
        data: Dict[str, Any] = {k: getattr(self, k) for k in TIME_COEFFICIENTS}
        data.update({k: getattr(self, k) for k in SCALAR_COEFFICIENTS})
        grid = changes.pop("grid", self.grid)
        data.update(changes)
        return LQModel(grid=grid, **data)

    def is_decoupled(self) -> bool:
        """True when no coefficient couples a player to the mean."""
        return bool(
            np.all(self.abar == 0) and np.all(self.mbar == 0) and self.qbar == 0
        )

    def to_mapping(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"T": self.grid.T, "n_steps": self.grid.n_steps}
        for name in TIME_COEFFICIENTS:
            arr = getattr(self, name)
            out[name] = float(arr[0]) if np.all(arr == arr[0]) else arr.tolist()
        for name in SCALAR_COEFFICIENTS:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_mapping(
        cls, data: Mapping[str, Any], grid: Optional[TimeGrid] = None
    ) -> "LQModel":
        missing = [k for k in ("T", "n_steps") if k not in data and grid is None]
        if missing:
            raise ModelValidationError(f"model file is missing keys: {missing}")
        unknown = set(data) - {"T", "n_steps", *TIME_COEFFICIENTS, *SCALAR_COEFFICIENTS}
        if unknown:
            raise ModelValidationError(f"unknown model keys: {sorted(unknown)}")
        grid = grid or make_grid(data["T"], data["n_steps"])
        names = (*TIME_COEFFICIENTS, *SCALAR_COEFFICIENTS)
        kwargs = {k: data[k] for k in names if k in data}
        return lq_model(grid, **kwargs)


def lq_model(
    grid: TimeGrid,
    *,
    a: ArrayLike = 0.0,
    abar: ArrayLike = 0.0,
    b: ArrayLike = 1.0,
    beta: ArrayLike = 0.0,
    m: ArrayLike = 0.0,
    mbar: ArrayLike = 0.0,
    n: ArrayLike = 1.0,
    q: float = 0.0,
    qbar: float = 0.0,
    sigma: float = 1.0,
    x0: float = 0.0,
) -> LQModel:
    return LQModel(
        grid=grid, a=a, abar=abar, b=b, beta=beta, m=m, mbar=mbar, n=n,
        q=q, qbar=qbar, sigma=sigma, x0=x0,
    )


def simple_model(
    q: float = 1.0,
    qbar: float = 0.0,
    x0: float = 1.0,
    T: float = 1.0,
    n_steps: int = 400,
    sigma: float = 1.0,
) -> LQModel:
    """Only a terminal cost: a = abar = beta = m = mbar = 0, b = n = 1."""
    return lq_model(make_grid(T, n_steps), q=q, qbar=qbar, x0=x0, sigma=sigma)


def load_model(path: Union[str, Path]) -> LQModel:
    text = Path(path).read_text(encoding="utf-8")
    return LQModel.from_mapping(json.loads(text))


@dataclass(frozen=True, eq=False)
class FeedbackPolicy:
    """Affine feedback alpha(t, x) = slope(t) x + intercept(t) on grid nodes."""

    slope: np.ndarray
    intercept: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        object.__setattr__(
            self, "slope", _frozen(broadcast(self.grid, self.slope, "slope"))
        )
        object.__setattr__(
            self,
            "intercept",
            _frozen(broadcast(self.grid, self.intercept, "intercept")),
        )

    @classmethod
    def zero(cls, grid: TimeGrid) -> "FeedbackPolicy":
        return cls(0.0, 0.0, grid)

    def perturbed(
        self, d_slope: ArrayLike = 0.0, d_intercept: ArrayLike = 0.0
    ) -> "FeedbackPolicy":
        return FeedbackPolicy(
            self.slope + broadcast(self.grid, d_slope, "slope perturbation"),
            self.intercept
            + broadcast(self.grid, d_intercept, "intercept perturbation"),
            self.grid,
        )

    def at_node(self, k: int, x: ArrayLike) -> np.ndarray:
        return self.slope[k] * np.asarray(x, dtype=float) + self.intercept[k]


@dataclass(frozen=True, eq=False)
class ReducedCoefficients:
    """
    Coefficients (a, b, c, m, d) of the streamlined system on grid nodes, their
    values at cell midpoints in ``mids``, and the terminal pair (q, r).
    """

    grid: TimeGrid
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    m: np.ndarray
    d: np.ndarray
    q: float
    r: float
    sigma: float = 0.0
    mids: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        mids: Dict[str, np.ndarray] = {}
        for name in ("a", "b", "c", "m", "d"):
            nodes = _frozen(broadcast(self.grid, getattr(self, name), name))
            object.__setattr__(self, name, nodes)
            given = self.mids.get(name)
            if given is None:
                given = midpoints(nodes, "linear")
            given = np.asarray(given, dtype=float)
            if given.shape != (self.grid.n_steps,):
                raise ModelValidationError(
                    f"midpoint samples of {name} need {self.grid.n_steps} values"
                )
            mids[name] = _frozen(given)
        object.__setattr__(self, "mids", mids)
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "sigma", float(self.sigma))

    def has_right_signs(self) -> bool:
        return bool(np.all(self.b < 0) and np.all(self.m <= 0) and self.q >= 0)


def _shared_terms(model: LQModel) -> Dict[str, Any]:
    b_nodes = -(model.b**2) / model.n
    b_mid = -(model.mid("b") ** 2) / model.mid("n")
    m_nodes = -(model.m**2)
    m_mid = -(model.mid("m") ** 2)
    return {
        "a": (model.a, model.mid("a")),
        "b": (b_nodes, b_mid),
        "m": (m_nodes, m_mid),
    }


def _assemble(
    model: LQModel, terms: Dict[str, Any], q: float, r: float
) -> ReducedCoefficients:
    rc = ReducedCoefficients(
        grid=model.grid,
        a=terms["a"][0],
        b=terms["b"][0],
        c=terms["c"][0],
        m=terms["m"][0],
        d=terms["d"][0],
        q=q,
        r=r,
        sigma=model.sigma,
        mids={k: v[1] for k, v in terms.items()},
    )
    if not rc.has_right_signs():
        raise ModelValidationError(
            "reduction produced coefficients with the wrong signs"
        )
    return rc


def reduce_mfg(model: LQModel, mean_flow: MeanFlow) -> ReducedCoefficients:
    model.grid.check_same(mean_flow.grid, "mean flow")
    mu, mu_mid = mean_flow.values, mean_flow.mid()
    terms = _shared_terms(model)
    terms["c"] = (
        model.beta + model.abar * mu,
        model.mid("beta") + model.mid("abar") * mu_mid,
    )
    terms["d"] = (
        -model.m * model.mbar * mu,
        -model.mid("m") * model.mid("mbar") * mu_mid,
    )
    r = model.q * model.qbar * mean_flow.terminal
    return _assemble(model, terms, q=model.q**2, r=r)


def reduce_mkv(model: LQModel, xbar: MeanFlow, ybar: MeanFlow) -> ReducedCoefficients:
    model.grid.check_same(xbar.grid, "xbar")
    model.grid.check_same(ybar.grid, "ybar")
    x, x_mid = xbar.values, xbar.mid()
    y, y_mid = ybar.values, ybar.mid()
    m, mbar, abar = model.m, model.mbar, model.abar
    m_mid, mbar_mid, abar_mid = model.mid("m"), model.mid("mbar"), model.mid("abar")
    terms = _shared_terms(model)
    terms["c"] = (model.beta + abar * x, model.mid("beta") + abar_mid * x_mid)
    terms["d"] = (
        -mbar * (2 * m + mbar) * x - abar * y,
        -mbar_mid * (2 * m_mid + mbar_mid) * x_mid - abar_mid * y_mid,
    )
    r = model.qbar * (2 * model.q + model.qbar) * xbar.terminal
    return _assemble(model, terms, q=model.q**2, r=r)
