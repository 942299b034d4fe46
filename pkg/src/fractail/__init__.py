"""Spectral solvers and late-time reconstruction for fractional diffusion-wave problems."""

from .errors import (
    AsymptoticDivergence,
    DegeneratePoint,
    ExponentCollision,
    FracTailError,
    GridTooCoarse,
    IllConditioned,
    IndexSearchExhausted,
    InadmissibleAlpha,
    NonConvergence,
    QuadratureNotConverged,
)
from .mlfun import MLBranch, MLEvaluation, MLOrderPair, gamma_recip, ml_asym_neg, ml_eval
from .orders import FractionalOrder, as_order

__all__ = [
    "AsymptoticDivergence",
    "DegeneratePoint",
    "ExponentCollision",
    "FracTailError",
    "FractionalOrder",
    "GridTooCoarse",
    "IllConditioned",
    "IndexSearchExhausted",
    "InadmissibleAlpha",
    "MLBranch",
    "MLEvaluation",
    "MLOrderPair",
    "NonConvergence",
    "QuadratureNotConverged",
    "as_order",
    "gamma_recip",
    "ml_asym_neg",
    "ml_eval",
]
