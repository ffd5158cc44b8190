"""Survival-vs-budget curves and the forest that predicts their decay rate."""

from .curves import (
    DEFAULT_BUDGET_GRID,
    SurvivalCurve,
    boundary_parameters,
    fit_beta,
    fit_component,
    fit_curve,
    read_curves_csv,
    survival_points,
    write_curves_csv,
)
from .forest import ForestConfig, ForestModel, RegressionTree, fit_tree, predict_beta, r_squared, train_forest

__all__ = [
    "DEFAULT_BUDGET_GRID",
    "ForestConfig",
    "ForestModel",
    "RegressionTree",
    "SurvivalCurve",
    "boundary_parameters",
    "fit_beta",
    "fit_component",
    "fit_curve",
    "fit_tree",
    "predict_beta",
    "r_squared",
    "read_curves_csv",
    "survival_points",
    "train_forest",
    "write_curves_csv",
]
