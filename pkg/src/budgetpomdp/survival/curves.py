"""Exponential survival-vs-budget curves: T(b) = alpha * exp(beta * b) + gamma."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import DataError, ParameterError, SchemaError
from ..model import ComponentSpec
from ..oracle import OracleCache

BETA_LO = -1.0
# 11 levels over 0..5000: zero plus 10 geometrically spaced levels from 25, so
# cheap components (which saturate after a few repairs) still get several points
# on the rising part of their curve
DEFAULT_BUDGET_GRID = (0,) + tuple(int(round(x)) for x in np.geomspace(25, 5000, 10))
CURVE_CSV_COLUMNS = ("component_id", "alpha", "beta", "gamma", "source")


@dataclass(frozen=True)
class SurvivalCurve:
    alpha: float
    beta: float
    gamma: float
    component_id: str = ""
    source: str = "fitted"

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta) and math.isfinite(self.gamma)):
            raise ParameterError("curve parameters must be finite")
        if self.alpha > 0:
            raise ParameterError(f"alpha must be <= 0, got {self.alpha}")
        if self.beta > 0:
            raise ParameterError(f"beta must be <= 0, got {self.beta}")

    def evaluate(self, budget):
        return self.alpha * np.exp(self.beta * np.asarray(budget, dtype=float)) + self.gamma

    def marginal(self, budget):
        """dT/db; nonnegative and nonincreasing in the budget."""
        return self.alpha * self.beta * np.exp(self.beta * np.asarray(budget, dtype=float))

    @property
    def flat(self) -> bool:
        return self.alpha * self.beta == 0


def boundary_parameters(t_at_zero_budget: float, horizon: int) -> tuple[float, float]:
    """``(alpha, gamma)`` pinned by T(0) = t_at_zero_budget and T(inf) = horizon."""
    if horizon < 1:
        raise ParameterError("horizon must be >= 1")
    if not t_at_zero_budget > 0:
        raise DataError(f"zero-budget survival must be positive, got {t_at_zero_budget}")
    if t_at_zero_budget > horizon * (1 + 1e-9):
        raise DataError(f"zero-budget survival {t_at_zero_budget} exceeds the horizon {horizon}")
    gamma = float(horizon)
    # value-table sums can overshoot H by rounding; such a component never fails
    return min(float(t_at_zero_budget) - gamma, 0.0), gamma


def _sse(beta: float, b: np.ndarray, t: np.ndarray, alpha: float, gamma: float) -> float:
    r = alpha * np.exp(beta * b) + gamma - t
    return float(r @ r)


def fit_beta(pairs: Sequence[tuple[float, float]], alpha: float, gamma: float, beta_lo: float = BETA_LO, grid: int = 400) -> float:
    """Least-squares beta on [beta_lo, 0] with alpha and gamma held fixed.

    A log-spaced coarse grid brackets the minimum, then bounded Brent search
    refines it between the neighbouring grid points.
    """
    if len(pairs) == 0:
        raise ParameterError("fit_beta needs data")
    if len(pairs) < 2:
        raise ParameterError("fit_beta needs at least two (budget, survival) pairs")
    if alpha > 0:
        raise ParameterError("alpha must be <= 0")
    if not beta_lo < 0:
        raise ParameterError("beta_lo must be negative")
    if alpha == 0:
        return 0.0
    # sort so the result does not depend on input order (float summation)
    data = np.array(sorted((float(b), float(t)) for b, t in pairs))
    b, t = data[:, 0], data[:, 1]
    candidates = np.concatenate([-np.logspace(math.log10(-beta_lo), -10, grid), [0.0]])
    sse = np.array([_sse(c, b, t, alpha, gamma) for c in candidates])
    i = int(np.argmin(sse))
    lo = candidates[max(i - 1, 0)]
    hi = candidates[min(i + 1, len(candidates) - 1)]
    if lo == hi:
        return float(min(candidates[i], 0.0))
    res = minimize_scalar(_sse, bounds=(lo, hi), args=(b, t, alpha, gamma), method="bounded", options={"xatol": 1e-14})
    best = float(res.x) if res.fun <= sse[i] else float(candidates[i])
    return min(best, 0.0)


def fit_curve(spec_id: str, pairs: Sequence[tuple[float, float]], horizon: int) -> SurvivalCurve:
    """Boundary parameters from the zero-budget point, then beta by least squares."""
    zero = [t for b, t in pairs if b == 0]
    if not zero:
        raise DataError(f"{spec_id}: the data need a zero-budget point")
    alpha, gamma = boundary_parameters(float(np.mean(zero)), horizon)
    beta = fit_beta(pairs, alpha, gamma)
    return SurvivalCurve(alpha, beta, gamma, spec_id, "fitted")


def survival_points(
    spec: ComponentSpec,
    horizon: int,
    budgets: Sequence[int] = DEFAULT_BUDGET_GRID,
    cache: OracleCache | None = None,
) -> list[tuple[int, float]]:
    """Expected survival from full condition under the budget-``b`` oracle, for each ``b``.

    One table at the largest budget serves every smaller one: the repairs-left
    axis of a larger budget's table contains the smaller budgets' tables.
    """
    if not budgets:
        raise ParameterError("budget grid is empty")
    if any(b < 0 for b in budgets):
        raise ParameterError("budgets must be nonnegative")
    cache = cache or OracleCache()
    table = cache.get(spec, max(budgets), horizon)
    m = spec.max_condition
    return [(int(b), float(table.value_table[0, m, min(b // spec.repair_cost, table.max_repairs)])) for b in budgets]


def fit_component(spec: ComponentSpec, horizon: int, budgets: Sequence[int] = DEFAULT_BUDGET_GRID, cache: OracleCache | None = None) -> SurvivalCurve:
    return fit_curve(spec.id, survival_points(spec, horizon, budgets, cache), horizon)


def write_curves_csv(path: str | Path, curves: Iterable[SurvivalCurve]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_CSV_COLUMNS)
        for c in curves:
            writer.writerow([c.component_id, repr(c.alpha), repr(c.beta), repr(c.gamma), c.source])


def read_curves_csv(path: str | Path) -> list[SurvivalCurve]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_CSV_COLUMNS:
            raise SchemaError(f"{path}: expected columns {CURVE_CSV_COLUMNS}, got {reader.fieldnames}")
        try:
            return [
                SurvivalCurve(float(r["alpha"]), float(r["beta"]), float(r["gamma"]), r["component_id"], r["source"])
                for r in reader
            ]
        except (ValueError, TypeError) as exc:
            raise DataError(f"{path}: malformed curve row: {exc}") from exc
