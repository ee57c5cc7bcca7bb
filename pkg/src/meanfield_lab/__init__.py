"""meanfield-lab: mean field games vs controlled McKean-Vlasov dynamics"""

try:
    from ._version import version as __version__
except ImportError:  # not installed from a checkout with setuptools_scm
    __version__ = "0.0.0"

from .lqmodel import (
    FeedbackPolicy,
    LQModel,
    MeanFlow,
    TimeGrid,
    make_grid,
    simple_model,
)
from .mfg_lq import solve_mfg
from .mkv_lq import compare, solve_mkv

__all__ = [
    "FeedbackPolicy",
    "LQModel",
    "MeanFlow",
    "TimeGrid",
    "compare",
    "make_grid",
    "simple_model",
    "solve_mfg",
    "solve_mkv",
]
