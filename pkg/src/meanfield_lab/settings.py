# src/meanfield_lab/settings.py
"""Typed runtime settings and experiment files."""
from __future__ import annotations

from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from .emissions import EmissionsModel
from .lqmodel import LQModel, lq_model, make_grid
from .rng import MAX_SEED

Coefficient = Union[float, List[float]]

COMMANDS = (
    "solve-mfg",
    "solve-mkv",
    "compare",
    "examples",
    "emissions",
    "simulate",
    "oracle",
)


class NumericsConfig(BaseModel):
    n_steps: int = Field(400, ge=2, description="time steps on [0, T]")
    n_x: int = Field(400, ge=50, description="space nodes of the PDE oracle")
    tol: float = Field(1e-6, gt=0, description="fixed-point and Picard tolerance")
    damping: float = Field(0.5, gt=0, le=1, description="Picard damping")
    max_iter: int = Field(50, ge=1)
    seed: int = Field(0, ge=0, le=MAX_SEED)
    N: int = Field(1000, ge=2, description="players in the N-player game")
    n_repeats: int = Field(20, ge=1)
    paths: int = Field(100_000, ge=1000, description="Monte Carlo paths (emissions)")
    short_horizon: bool = Field(
        False, description="solve the MFG even when the existence hypotheses fail"
    )


class OutputConfig(BaseModel):
    path: Optional[str] = None
    format: Literal["csv", "json"] = "json"


class LQModelSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["lq"] = "lq"
    T: float = Field(1.0, gt=0)
    a: Coefficient = 0.0
    abar: Coefficient = 0.0
    b: Coefficient = 1.0
    beta: Coefficient = 0.0
    m: Coefficient = 0.0
    mbar: Coefficient = 0.0
    n: Coefficient = 1.0
    q: float = 0.0
    qbar: float = 0.0
    sigma: float = Field(1.0, ge=0)
    x0: float = 0.0

    def build(self, n_steps: int) -> LQModel:
        coefficients = self.model_dump(exclude={"kind", "T"})
        return lq_model(make_grid(self.T, n_steps), **coefficients)


class EmissionsSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    kind: Literal["emissions"] = "emissions"
    lam: float = Field(alias="lambda", gt=0)
    cap: float
    sigma: float = Field(gt=0)
    T: float = Field(gt=0)
    x0: float

    def build(self) -> EmissionsModel:
        return EmissionsModel(**self.model_dump(exclude={"kind"}))


class AdditiveRunningSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["additive_running"] = "additive_running"
    T: float = Field(1.0, gt=0)
    x0: float = 1.0
    sigma: float = Field(1.0, gt=0)


class ScalarExampleSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["scalar"] = "scalar"
    r: float
    T: float = Field(1.0, gt=0)
    x0: float = 1.0


ModelSpec = Union[LQModelSpec, EmissionsSpec, AdditiveRunningSpec, ScalarExampleSpec]
MODEL_SPECS = {
    "lq": LQModelSpec,
    "emissions": EmissionsSpec,
    "additive_running": AdditiveRunningSpec,
    "scalar": ScalarExampleSpec,
}


def model_spec(data: Dict[str, Any]) -> ModelSpec:
    """Validate the model block of an experiment; ``kind`` defaults to ``lq``."""
    kind = data.get("kind", "lq")
    if kind not in MODEL_SPECS:
        raise ValueError(
            f"unknown model kind {kind!r}; expected one of {sorted(MODEL_SPECS)}"
        )
    return MODEL_SPECS[kind].model_validate(data)


class SimulationSpec(BaseModel):
    mode: Literal["ensemble", "chaos", "nash", "social"] = "ensemble"
    policy: Literal["mfg", "mkv", "zero"] = "mfg"
    N_values: List[int] = Field(default_factory=lambda: [10, 100, 1000])
    n_deviations: int = Field(20, ge=1)
    deviation_scale: float = Field(0.5, gt=0)


class ExperimentConfig(BaseModel):
    """One run of the lab: a command, the model it acts on and its numerics."""

    command: Optional[Literal[COMMANDS]] = None  # type: ignore[valid-type]
    description: str = ""
    model: Dict[str, Any] = Field(default_factory=dict)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    simulation: SimulationSpec = Field(default_factory=SimulationSpec)
    output: OutputConfig = Field(default_factory=OutputConfig)


class LabSettings(BaseModel):
    threads: int = Field(
        0, ge=0, description="worker cap for Monte Carlo runs; 0 = serial"
    )
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
