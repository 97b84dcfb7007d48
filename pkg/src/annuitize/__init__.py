"""Optimal annuitization timing under a one-shot mortality shock."""

from .core_model import (
    AssumptionViolation,
    DerivedCoefficients,
    MarketParams,
    ModelParams,
    MortalityParams,
    NearDegenerateShock,
    PreferenceParams,
    PricingParams,
    annuity_rate,
    derive_coefficients,
    table1_params,
    validate,
)
from .constant_solver import ConstantRegime, ConstantSolution, eval_constant, solve_constant
from .piecewise import Piece, PiecewiseValueFunction
from .shock_solver import ShockRegime, ShockSolution, eval_shock, solve_shock

__version__ = "0.1.0"
