"""Splitting a fleet budget across components to maximize total expected survival."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, ResourceError, SchemaError
from .model import AllocationResult, ComponentSpec
from .survival.curves import SurvivalCurve

DEFAULT_DP_CAP = 5_000_000
ALLOCATION_CSV_COLUMNS = ("component_id", "budget", "marginal_at_allocation", "method")
_GAIN_EPS = 1e-12


def objective(curves: Sequence[SurvivalCurve], budgets: Sequence[float]) -> float:
    """Total modelled survival, summed in a fixed order."""
    return float(sum(float(c.evaluate(b)) for c, b in zip(curves, budgets)))


def _check(curves: Sequence[SurvivalCurve], total_budget: int) -> None:
    if total_budget < 0 or int(total_budget) != total_budget:
        raise ParameterError(f"total_budget must be a nonnegative integer, got {total_budget}")
    for c in curves:
        if c.alpha > 0 or c.beta > 0:
            raise ParameterError(f"curve {c.component_id!r} is not nondecreasing-concave")


def water_fill(curves: Sequence[SurvivalCurve], total_budget: float, tolerance: float = 1e-9, max_iter: int = 500):
    """Continuous optimum: ``(budgets, lambda)`` with equal marginals on funded components.

    ``b_i(lam) = max(0, ln(lam / (alpha_i beta_i)) / beta_i)``; lam is bisected in
    log space until the spend is within ``tolerance`` of the budget.
    """
    n = len(curves)
    scale = np.array([c.alpha * c.beta for c in curves], dtype=float)  # marginal at 0
    beta = np.array([c.beta for c in curves], dtype=float)
    active = scale > 0
    if total_budget <= 0 or not active.any():
        return np.zeros(n), None

    def spend(log_lam: float) -> np.ndarray:
        out = np.zeros(n)
        out[active] = np.maximum(0.0, (log_lam - np.log(scale[active])) / beta[active])
        return out

    hi = float(np.log(scale[active].max()))  # spend(hi) == 0
    lo = hi - 1.0
    while spend(lo).sum() < total_budget:
        lo = hi - 2.0 * (hi - lo)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s = spend(mid).sum()
        if abs(s - total_budget) <= tolerance:
            lo = hi = mid
            break
        if s > total_budget:
            lo = mid
        else:
            hi = mid
    log_lam = 0.5 * (lo + hi)
    return spend(log_lam), float(np.exp(log_lam))


def _gain(c: SurvivalCurve, b: float, step: float) -> float:
    """T(b + step) - T(b) without cancellation: alpha e^{beta b} (e^{beta step} - 1)."""
    return float(c.alpha * math.exp(c.beta * b) * math.expm1(c.beta * step))


def integerize(curves: Sequence[SurvivalCurve], continuous: np.ndarray, total_budget: int, quantum: int = 1) -> np.ndarray:
    """Best allocation in multiples of ``quantum`` near the continuous optimum.

    Floors the continuous solution to the grid, spends the remaining quanta
    greedily by marginal gain, then applies improving one-quantum exchanges.
    For separable concave objectives the result is optimal on the grid.
    """
    if quantum < 1:
        raise ParameterError("quantum must be >= 1")
    n = len(curves)
    active = [c.alpha * c.beta > 0 for c in curves]
    units = np.array([int(math.floor(b / quantum + 1e-9)) if a else 0 for b, a in zip(continuous, active)], dtype=np.int64)
    cap = total_budget // quantum
    while units.sum() > cap:  # guard against float overshoot
        units[int(np.argmax(units))] -= 1
    idx = [i for i in range(n) if active[i]]
    if not idx:
        return np.zeros(n, dtype=np.int64)
    q = quantum
    left = cap - int(units.sum())
    while left > 0:
        gains = [_gain(curves[i], units[i] * q, q) for i in idx]
        best = idx[int(np.argmax(gains))]
        units[best] += 1
        left -= 1
    # exchanges: move one quantum from j to i while that strictly helps
    for _ in range(10 * cap + 10):
        up = [_gain(curves[i], units[i] * q, q) for i in idx]
        down = [(-_gain(curves[j], (units[j] - 1) * q, q) if units[j] > 0 else -math.inf) for j in idx]
        i_best = int(np.argmax(up))
        j_best = int(np.argmax(down))  # least negative loss
        if i_best == j_best or up[i_best] + down[j_best] <= _GAIN_EPS * max(1.0, up[i_best]):
            break
        units[idx[i_best]] += 1
        units[idx[j_best]] -= 1
    return units * q


def integerize_quanta(curves: Sequence[SurvivalCurve], continuous: np.ndarray, total_budget: int, quanta: Sequence[int]) -> np.ndarray:
    """Allocation in per-component multiples ``quanta[i]`` plus an even share of the remainder.

    Each component is floored to its own grid; leftover money buys further
    quanta greedily by modelled gain per unit spent.  What no quantum fits in
    is split evenly (largest remainder) across funded components, so it still
    pays for cheaper actions.
    """
    q = np.asarray(quanta, dtype=np.int64)
    if q.shape != (len(curves),) or np.any(q < 1):
        raise ParameterError("need one quantum >= 1 per curve")
    active = np.array([c.alpha * c.beta > 0 for c in curves])
    units = np.where(active, np.floor(np.asarray(continuous) / q + 1e-9), 0).astype(np.int64)
    while int((units * q).sum()) > total_budget:
        units[int(np.argmax(units * q))] -= 1
    left = total_budget - int((units * q).sum())
    while True:
        best, best_rate = -1, 0.0
        for i in np.flatnonzero(active & (q <= left)):
            rate = _gain(curves[i], units[i] * q[i], q[i]) / q[i]
            if rate > best_rate * (1 + _GAIN_EPS):
                best, best_rate = i, rate
        if best < 0:
            break
        units[best] += 1
        left -= q[best]
    budgets = units * q
    funded = np.flatnonzero(budgets > 0) if np.any(budgets > 0) else np.flatnonzero(active)
    if left > 0 and funded.size:
        budgets[funded] += largest_remainder(np.ones(funded.size), left)
    return budgets


def allocate_kkt(
    curves: Sequence[SurvivalCurve],
    total_budget: int,
    tolerance: float = 1e-9,
    quantum: int = 1,
    quanta: Sequence[int] | None = None,
) -> AllocationResult:
    """Water-filling on the continuous relaxation, then integerization.

    With a single ``quantum`` the integer solution is optimal on that grid.
    ``quanta`` (one per curve, e.g. repair costs) instead rounds each
    component to its own spending unit.  Flat curves (alpha * beta == 0) get
    nothing; when every curve is flat the whole budget is reported unspent.
    """
    _check(curves, total_budget)
    cont, lam = water_fill(curves, float(total_budget), tolerance)
    if quanta is None:
        budgets = integerize(curves, cont, int(total_budget), quantum)
        method = "kkt"
    else:
        budgets = integerize_quanta(curves, cont, int(total_budget), quanta)
        method = "kkt-quanta"
    return AllocationResult(
        tuple(int(b) for b in budgets),
        int(total_budget),
        multiplier=lam,
        objective_estimate=objective(curves, budgets),
        method=method,
        continuous=tuple(float(b) for b in cont),
    )


def kkt_certificate(curves: Sequence[SurvivalCurve], result: AllocationResult, rel_tol: float = 1e-6, quantum: int = 1) -> bool:
    """Check optimality conditions of ``result`` directly from the curves.

    The continuous solution must have equal marginals (within ``rel_tol``) on
    funded components and no larger marginal at 0 elsewhere.  The integer
    budgets must admit no improving one-quantum exchange and leave less than a
    quantum unspent unless every curve is flat.
    """
    if sum(result.budgets) > result.total_budget or any(b < 0 for b in result.budgets):
        return False
    active = [c.alpha * c.beta > 0 for c in curves]
    if not any(active):
        return all(b == 0 for b in result.budgets)
    if result.continuous is not None and result.multiplier is not None:
        lam = result.multiplier
        for c, b in zip(curves, result.continuous):
            m = float(c.marginal(b))
            if b > 0 and abs(m - lam) > rel_tol * lam:
                return False
            if b == 0 and m > lam * (1 + rel_tol):
                return False
    q = quantum
    if result.unspent >= q:
        return False
    ups = [(_gain(c, b, q) if a else 0.0) for c, b, a in zip(curves, result.budgets, active)]
    downs = [(-_gain(c, b - q, q) if b >= q else -math.inf) for c, b in zip(curves, result.budgets)]
    for i, up in enumerate(ups):
        for j, down in enumerate(downs):
            if i != j and up + down > 1e-9 * max(1.0, up):
                return False
    return True


def allocate_bruteforce(curves: Sequence[SurvivalCurve], total_budget: int, grid: int, max_cells: int = DEFAULT_DP_CAP) -> AllocationResult:
    """Exact maximizer over allocations in multiples of ``grid`` by stage-wise dynamic programming."""
    _check(curves, total_budget)
    if grid < 1:
        raise ParameterError("grid must be >= 1")
    n = len(curves)
    units = int(total_budget) // grid
    cells = n * (units + 1) ** 2
    if cells > max_cells:
        raise ResourceError(f"DP would touch {cells} cells (cap {max_cells}); use a coarser grid")
    u = np.arange(units + 1)
    best = np.zeros(units + 1)  # best value with at most u units over the stages so far
    choices = []
    for c in curves:
        gain = c.evaluate(u * grid)
        # cand[u, x] = best[u - x] + gain[x] for x <= u
        diff = u[:, None] - u[None, :]
        cand = np.where(diff >= 0, best[np.clip(diff, 0, None)] + gain[None, :], -np.inf)
        pick = np.argmax(cand, axis=1)  # ties -> fewest units
        choices.append(pick)
        best = cand[u, pick]
    alloc = np.zeros(n, dtype=np.int64)
    rem = units
    for i in range(n - 1, -1, -1):
        x = int(choices[i][rem])
        alloc[i] = x * grid
        rem -= x
    return AllocationResult(tuple(alloc), int(total_budget), None, objective(curves, alloc), "bruteforce")


def largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integers proportional to ``weights`` summing to ``total`` (ties to the lower index)."""
    w = np.asarray(weights, dtype=float)
    share = total * w / w.sum()
    base = np.floor(share).astype(np.int64)
    left = total - int(base.sum())
    order = np.argsort(-(share - base), kind="stable")
    base[order[:left]] += 1
    return base


def allocate_proportional(specs: Sequence[ComponentSpec], lifetimes: Sequence[float], total_budget: int) -> AllocationResult:
    """Budget proportional to repair_cost / E[T]; uniform when every weight is zero."""
    if total_budget < 0 or int(total_budget) != total_budget:
        raise ParameterError("total_budget must be a nonnegative integer")
    if len(specs) != len(lifetimes) or not specs:
        raise ParameterError("need one lifetime per component")
    life = np.asarray(lifetimes, dtype=float)
    if np.any(~(life > 0)):
        raise ParameterError("lifetimes must be positive")
    w = np.array([s.repair_cost for s in specs], dtype=float) / life
    if not np.any(w > 0) or not np.all(np.isfinite(w)):
        w = np.ones(len(specs))
    budgets = largest_remainder(w, int(total_budget))
    return AllocationResult(tuple(budgets), int(total_budget), None, float("nan"), "proportional")


def write_allocation_csv(path: str | Path, ids: Sequence[str], result: AllocationResult, curves: Sequence[SurvivalCurve] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ALLOCATION_CSV_COLUMNS)
        for k, (cid, b) in enumerate(zip(ids, result.budgets)):
            marginal = repr(float(curves[k].marginal(b))) if curves is not None else ""
            writer.writerow([cid, b, marginal, result.method])


def read_allocation_csv(path: str | Path) -> dict[str, int]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ALLOCATION_CSV_COLUMNS:
            raise SchemaError(f"{path}: expected columns {ALLOCATION_CSV_COLUMNS}, got {reader.fieldnames}")
        return {r["component_id"]: int(r["budget"]) for r in reader}
