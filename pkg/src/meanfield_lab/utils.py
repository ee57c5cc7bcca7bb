# src/meanfield_lab/utils.py
import json
import math
from pathlib import Path
from typing import Any, Dict, Mapping

import numpy as np
import pandas as pd
from pydantic import BaseModel

FLOAT_FORMAT = "%.12g"


def model_to_mapping(m: BaseModel) -> Dict[str, Any]:
    return m.model_dump(mode="json", by_alias=True)


def model_schema(model_cls: type[BaseModel]) -> Dict[str, Any]:
    return model_cls.model_json_schema()


def to_plain(value: Any) -> Any:
    """numpy scalars and arrays, enums and pydantic models as JSON-ready values."""
    if isinstance(value, BaseModel):
        return to_plain(model_to_mapping(value))
    if isinstance(value, Mapping):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if hasattr(value, "value") and not isinstance(value, (int, float, str, bool)):
        return value.value
    return value


def write_csv(path: str | Path, columns: Mapping[str, Any]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({k: np.asarray(v) for k, v in columns.items()})
    frame.to_csv(p, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return p


def write_json(path: str | Path, payload: Mapping[str, Any]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(
        json.dumps(to_plain(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return p


def format_value(value: Any) -> str:
    value = to_plain(value)
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6f}"
    return str(value)


def format_summary(summary: Mapping[str, Any]) -> str:
    """Space-separated key=value pairs, floats at six decimals."""
    return " ".join(f"{k}={format_value(v)}" for k, v in summary.items())
