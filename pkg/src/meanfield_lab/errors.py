# src/meanfield_lab/errors.py
from __future__ import annotations

from typing import List, Optional, Sequence


class MeanFieldError(Exception):
    pass


class ModelValidationError(MeanFieldError, ValueError):
    pass


class GridMismatchError(ModelValidationError):
    pass


class CFLError(ModelValidationError):
    def __init__(self, message: str, required_dt: float):
        super().__init__(f"{message} (required dt <= {required_dt:.6g})")
        self.required_dt = required_dt


class UnsupportedModeError(MeanFieldError, ValueError):
    pass


class BlowUpError(MeanFieldError):
    def __init__(self, message: str, blow_up: Optional[float] = None):
        if blow_up is not None:
            message = f"{message} (blow-up near t={blow_up:.6g})"
        super().__init__(message)
        self.blow_up = blow_up


class NoFixedPointError(BlowUpError):
    pass


class NonConvergenceError(MeanFieldError):
    def __init__(self, message: str, residuals: Sequence[float] = ()):
        super().__init__(message)
        self.residuals: List[float] = list(residuals)
