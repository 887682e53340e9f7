"""Kelly-optimal investing under a price process with mispricing-proportional crashes."""

from .harness import ErrorSpec, ExperimentPlan, Family, SignMode, SignTestSpec, SweepResult, run
from .kelly import (
    BOUNDED,
    UNBOUNDED,
    LambdaBounds,
    LambdaInterpolant,
    expected_log_growth,
    optimal_lambda_approx,
    optimal_lambda_numeric,
)
from .metrics import MetricsReport, max_fee, metrics_report
from .model import ModelParams, PricePath, expected_return, generate_ensemble, generate_path, generate_paths
from .strategies import StrategySpec, simulate_portfolio, standard_strategies

__all__ = [
    "BOUNDED",
    "UNBOUNDED",
    "ErrorSpec",
    "ExperimentPlan",
    "Family",
    "LambdaBounds",
    "LambdaInterpolant",
    "MetricsReport",
    "ModelParams",
    "PricePath",
    "SignMode",
    "SignTestSpec",
    "StrategySpec",
    "SweepResult",
    "expected_log_growth",
    "expected_return",
    "generate_ensemble",
    "generate_path",
    "generate_paths",
    "max_fee",
    "metrics_report",
    "optimal_lambda_approx",
    "optimal_lambda_numeric",
    "run",
    "simulate_portfolio",
    "standard_strategies",
]
