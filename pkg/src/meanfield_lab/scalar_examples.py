# src/meanfield_lab/scalar_examples.py
"""
Closed forms and root searches for the one-dimensional fixed-point problems
obtained when the state dynamics are dx = -alpha dt + sigma dW and only the
mean of the population enters the costs. Every function answers for both the
game (MFG) and the cooperative (MKV) limit.
"""
from __future__ import annotations

import math
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel
from scipy.optimize import brentq, minimize_scalar

from .errors import ModelValidationError, UnsupportedModeError
from .lqmodel import LQModel, MeanFlow, lq_model, make_grid

EPS = np.finfo(float).eps
SCAN_CELLS = 4000
MAX_DOUBLINGS = 20
ROOT_XTOL = 1e-12
TANGENT_XTOL = 1e-10
TANGENT_RESIDUAL = 1e-10

Scalar = Callable[[float], float]


class Mode(str, Enum):
    MFG = "MFG"
    MKV = "MKV"


class Existence(str, Enum):
    UNIQUE = "unique"
    MULTIPLE = "multiple"
    NONE = "none"
    CONTINUUM = "continuum"


class FixedPointReport(BaseModel):
    mode: Mode
    roots: List[float]
    existence: Existence
    solvability_margin: Optional[float] = None
    double_root: bool = False


def _mode(mode: Union[Mode, str]) -> Mode:
    return mode if isinstance(mode, Mode) else Mode(str(mode).upper())


def _check_horizon(T: float) -> None:
    if not T > 0:
        raise ModelValidationError(f"horizon T must be positive, got {T}")


def _classify(roots: Sequence[float]) -> Existence:
    if not roots:
        return Existence.NONE
    return Existence.UNIQUE if len(roots) == 1 else Existence.MULTIPLE


def linear_terminal(
    r: float, T: float, x0: float, mode: Union[Mode, str]
) -> FixedPointReport:
    """Terminal cost r x mean: (1 + rT) mean_T = x0 for MFG, (1 + 2rT) for MKV."""
    _check_horizon(T)
    mode = _mode(mode)
    k = 1.0 if mode is Mode.MFG else 2.0
    denom = 1.0 + k * r * T
    if abs(denom) <= 4 * EPS * max(1.0, abs(k * r * T)):
        existence = Existence.CONTINUUM if x0 == 0 else Existence.NONE
        return FixedPointReport(
            mode=mode, roots=[], existence=existence, solvability_margin=denom
        )
    return FixedPointReport(
        mode=mode,
        roots=[x0 / denom],
        existence=Existence.UNIQUE,
        solvability_margin=denom,
    )


def _quadratic_coefficient(r: float, T: float, mode: Mode) -> float:
    return r * T if mode is Mode.MFG else 3.0 * r * T


def solvability_margin(r: float, T: float, x0: float, mode: Union[Mode, str]) -> float:
    """Discriminant 1 + 4rTx0 (MFG) or 1 + 12rTx0 (MKV) of the quadratic case."""
    return 1.0 + 4.0 * _quadratic_coefficient(r, T, _mode(mode)) * x0


def in_solvability_set(r: float, T: float, x0: float, mode: Union[Mode, str]) -> bool:
    return solvability_margin(r, T, x0, mode) >= 0


def quadratic_terminal(
    r: float, T: float, x0: float, mode: Union[Mode, str]
) -> FixedPointReport:
    """
    Terminal cost r x mean^2: c mean^2 + mean - x0 = 0 with c = rT (MFG)
    or 3rT (MKV).
    """
    _check_horizon(T)
    mode = _mode(mode)
    c = _quadratic_coefficient(r, T, mode)
    disc = 1.0 + 4.0 * c * x0
    if c == 0:
        return FixedPointReport(
            mode=mode, roots=[x0], existence=Existence.UNIQUE, solvability_margin=disc
        )
    if abs(disc) <= 64 * EPS * (1.0 + abs(4.0 * c * x0)):
        return FixedPointReport(
            mode=mode,
            roots=[-1.0 / (2.0 * c)],
            existence=Existence.UNIQUE,
            solvability_margin=0.0,
            double_root=True,
        )
    if disc < 0:
        return FixedPointReport(
            mode=mode, roots=[], existence=Existence.NONE, solvability_margin=disc
        )
    half = -0.5 * (1.0 + math.sqrt(disc))
    roots = sorted([half / c, -x0 / half])
    return FixedPointReport(
        mode=mode, roots=roots, existence=Existence.MULTIPLE, solvability_margin=disc
    )


# ---------- root search ----------
def _evaluate(func: Scalar, xs: np.ndarray) -> np.ndarray:
    out = np.empty(xs.size)
    for i, x in enumerate(xs):
        try:
            out[i] = float(func(float(x)))
        except (ArithmeticError, ValueError):
            out[i] = np.nan
    return out


def _touches_zero(func: Scalar, lo: float, hi: float) -> Optional[float]:
    found = minimize_scalar(
        lambda u: abs(func(u)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": TANGENT_XTOL},
    )
    if found.success and abs(func(float(found.x))) < TANGENT_RESIDUAL:
        return float(found.x)
    return None


def _scan(
    func: Scalar, lo: float, hi: float, cells: int = SCAN_CELLS
) -> Tuple[List[float], List[float]]:
    xs = np.linspace(lo, hi, cells + 1)
    vals = _evaluate(func, xs)
    roots: List[float] = [float(x) for x, v in zip(xs, vals) if v == 0.0]
    tangent: List[float] = []
    for i in range(cells):
        a, b = vals[i], vals[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)) or a == 0.0 or b == 0.0:
            continue
        if (a < 0) != (b < 0):
            root = brentq(func, xs[i], xs[i + 1], xtol=ROOT_XTOL, rtol=4 * EPS)
            roots.append(float(root))
    # |f| dipping without a sign change: candidate tangent root
    for i in range(1, cells):
        left, mid, right = vals[i - 1], vals[i], vals[i + 1]
        if not np.all(np.isfinite((left, mid, right))) or left == 0.0 or right == 0.0:
            continue
        if (left < 0) != (right < 0) or (mid != 0.0 and (mid < 0) != (left < 0)):
            continue
        if mid == 0.0:
            tangent.append(float(xs[i]))
        elif abs(mid) < abs(left) and abs(mid) <= abs(right):
            root = _touches_zero(func, xs[i - 1], xs[i + 1])
            if root is not None:
                roots.append(root)
                tangent.append(root)
    roots.sort()
    unique: List[float] = []
    for x in roots:
        if not unique or abs(x - unique[-1]) > 10 * ROOT_XTOL:
            unique.append(x)
    return unique, tangent


def find_roots(
    func: Scalar, x0: float, bracket: Optional[Tuple[float, float]] = None
) -> Tuple[List[float], bool]:
    """
    Roots of ``func`` in ``bracket`` and whether any of them is a tangent
    (double) root. Sign changes are bracketed with Brent's method; a dip of
    |func| that does not cross zero is minimised and kept when it reaches
    zero. Without a bracket the search starts on [-|x0|-1, |x0|+1] and doubles
    until a root appears.
    """
    if bracket is not None:
        lo, hi = bracket
        if not hi > lo:
            raise ValueError(f"invalid bracket {bracket}")
        roots, tangent = _scan(func, lo, hi)
        return roots, bool(tangent)
    half_width = abs(x0) + 1.0
    for _ in range(MAX_DOUBLINGS + 1):
        roots, tangent = _scan(func, -half_width, half_width)
        if roots:
            return roots, bool(tangent)
        half_width *= 2.0
    return [], False


def general_linear_terminal(
    gamma: Scalar,
    T: float,
    x0: float,
    mode: Union[Mode, str],
    gamma_prime: Optional[Scalar] = None,
    bracket: Optional[Tuple[float, float]] = None,
) -> FixedPointReport:
    """Terminal cost x gamma(mean)."""
    _check_horizon(T)
    mode = _mode(mode)
    if mode is Mode.MFG:

        def residual(mu: float) -> float:
            return mu - x0 + T * gamma(mu)

    else:
        if gamma_prime is None:
            raise ValueError("the MKV fixed point needs the derivative gamma_prime")

        def residual(mu: float) -> float:
            return mu - x0 + T * (gamma_prime(mu) * mu + gamma(mu))

    roots, double = find_roots(residual, x0, bracket)
    return FixedPointReport(
        mode=mode, roots=roots, existence=_classify(roots), double_root=double
    )


def quadratic_cost_mfg(
    gamma: Scalar,
    T: float,
    x0: float,
    mode: Union[Mode, str] = Mode.MFG,
    bracket: Optional[Tuple[float, float]] = None,
) -> FixedPointReport:
    """Terminal cost x^2 gamma(mean): mean_T (1 + 2T gamma(mean_T)) = x0."""
    _check_horizon(T)
    if _mode(mode) is Mode.MKV:
        raise UnsupportedModeError(
            "the cooperative problem with terminal cost x^2 gamma(mean) does not "
            "reduce to an equation for the mean"
        )

    def residual(mu: float) -> float:
        return mu * (1.0 + 2.0 * T * gamma(mu)) - x0

    roots, double = find_roots(residual, x0, bracket)
    return FixedPointReport(
        mode=Mode.MFG, roots=roots, existence=_classify(roots), double_root=double
    )


# ---------- running-cost examples ----------
def additive_running_mean(
    T: float, x0: float, mode: Union[Mode, str], t: Union[float, np.ndarray]
) -> Union[float, np.ndarray]:
    """
    Running cost alpha^2/2 + x mean and no terminal cost: cosh profiles of
    rate 1 (MFG) or sqrt(2) (MKV).
    """
    _check_horizon(T)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > T):
        raise ModelValidationError(f"t must lie in [0, {T}]")
    rate = 1.0 if _mode(mode) is Mode.MFG else math.sqrt(2.0)
    out = x0 * np.cosh(rate * (T - t_arr)) / np.cosh(rate * T)
    return float(out) if out.ndim == 0 else out


def lq_zero_terminal_model(
    T: float, x0: float, n_steps: int = 400, sigma: float = 1.0
) -> LQModel:
    """f = alpha^2/2 + (x - mean)^2/2, g = 0 as an LQ model."""
    return lq_model(make_grid(T, n_steps), m=1.0, mbar=-1.0, x0=x0, sigma=sigma)


def lq_zero_terminal_mean(
    T: float, x0: float, mode: Union[Mode, str], n_steps: int = 400
) -> MeanFlow:
    _mode(mode)
    return MeanFlow.constant(make_grid(T, n_steps), x0)


def _row(example: str, mode: Mode, index: int, value: float, existence: str):
    return {
        "example": example,
        "mode": mode.value,
        "index": index,
        "value": value,
        "existence": existence,
    }


def comparison_table(r: float, T: float, x0: float) -> List[Dict[str, object]]:
    """Rows (example, mode, index, value) for every closed-form example."""
    rows: List[Dict[str, object]] = []
    for mode in Mode:
        for name, report in (
            ("linear_terminal", linear_terminal(r, T, x0, mode)),
            ("quadratic_terminal", quadratic_terminal(r, T, x0, mode)),
        ):
            existence = report.existence.value
            if not report.roots:
                rows.append(_row(name, mode, 0, float("nan"), existence))
            for i, root in enumerate(report.roots):
                rows.append(_row(name, mode, i, root, existence))
        mean_T = additive_running_mean(T, x0, mode, T)
        rows.append(_row("additive_running_mean_T", mode, 0, mean_T, "unique"))
        mean_T = lq_zero_terminal_mean(T, x0, mode).terminal
        rows.append(_row("lq_zero_terminal_mean_T", mode, 0, mean_T, "unique"))
    return rows
