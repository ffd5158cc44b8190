"""Finite-horizon value iteration on the fully observable repair MDP.

The MDP state is (step, condition, repairs still affordable).  Only Repair costs
money in the MDP, so the accrued-cost axis collapses to the number of repairs
the remaining budget can pay for; inspection spending in the POMDP is absorbed
by flooring the remaining budget at lookup time.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, ParameterError, ResourceError
from .model import ActionKind, ComponentSpec, DecayKernel

DEFAULT_MAX_CELLS = 20_000_000
_FLOAT_TIE = 1e-12


@dataclass(frozen=True, eq=False)
class OraclePolicy:
    """Action and value tables indexed ``[step, condition, repairs_left]``.

    ``value_table`` holds expected surviving steps from that state onward
    (the current step counts if its condition is positive).
    """

    spec: ComponentSpec
    budget: int
    horizon: int
    action_table: np.ndarray  # bool, True = Repair
    value_table: np.ndarray

    @property
    def max_repairs(self) -> int:
        return self.action_table.shape[2] - 1

    def repairs_left(self, accrued_cost: int) -> int:
        if accrued_cost < 0 or accrued_cost > self.budget:
            raise ContractViolation(f"accrued cost {accrued_cost} outside [0, {self.budget}]")
        return min((self.budget - accrued_cost) // self.spec.repair_cost, self.max_repairs)

    def _index(self, step: int, condition: int, accrued_cost: int) -> tuple[int, int, int]:
        if not 0 <= step < self.horizon:
            raise ContractViolation(f"step {step} outside [0, {self.horizon})")
        if not 0 <= condition <= self.spec.max_condition:
            raise ContractViolation(f"condition {condition} outside [0, {self.spec.max_condition}]")
        return step, condition, self.repairs_left(accrued_cost)

    def value(self, step: int, condition: int, accrued_cost: int):
        return self.value_table[self._index(step, condition, accrued_cost)]

    @property
    def expected_survival(self):
        """Expected survival from full condition at step 0 with the whole budget unspent."""
        return self.value_table[0, self.spec.max_condition, self.max_repairs]

    def save(self, path: str | Path) -> None:
        np.savez_compressed(
            path,
            action_table=self.action_table,
            value_table=self.value_table.astype(float),
            meta=np.array([self.budget, self.horizon], dtype=np.int64),
        )

    @classmethod
    def load(cls, path: str | Path, spec: ComponentSpec) -> OraclePolicy:
        with np.load(path) as data:
            budget, horizon = (int(x) for x in data["meta"])
            return cls(spec, budget, horizon, data["action_table"], data["value_table"])


def build_oracle(
    spec: ComponentSpec,
    budget: int,
    horizon: int,
    kernel: DecayKernel | None = None,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> OraclePolicy:
    """Backward induction with reward 1 for every step spent at a positive condition.

    An exact (Fraction) kernel yields exact tables; ties go to Degrade.
    """
    if budget < 0:
        raise ParameterError("budget must be >= 0")
    if horizon < 1:
        raise ParameterError("horizon must be >= 1")
    kernel = kernel if kernel is not None else spec.kernel
    if kernel.max_condition != spec.max_condition:
        raise ParameterError("kernel and spec disagree on max_condition")
    n_cond = spec.max_condition + 1
    n_rep = budget // spec.repair_cost + 1
    cells = n_cond * n_rep * horizon
    if cells > max_cells:
        raise ResourceError(
            f"oracle table would hold {cells} cells (cap {max_cells}); lower the budget/horizon or raise max_cells"
        )
    trans = kernel.transition_matrix()
    exact = kernel.exact
    dtype = object if exact else float
    zero = trans[0, 0] - trans[0, 0]

    alive = np.array([0] + [1] * (n_cond - 1), dtype=dtype)
    values = np.empty((horizon, n_cond, n_rep), dtype=dtype)
    actions = np.zeros((horizon, n_cond, n_rep), dtype=bool)
    nxt = np.full((n_cond, n_rep), zero, dtype=dtype)
    for k in range(horizon - 1, -1, -1):
        q_degrade = trans @ nxt
        q_repair = np.full((n_cond, n_rep), zero, dtype=dtype)
        q_repair[:, 1:] = nxt[spec.max_condition, :-1]
        if exact:
            better = q_repair > q_degrade
        else:
            better = q_repair > q_degrade + _FLOAT_TIE * np.maximum(1.0, np.abs(q_degrade))
        better[0, :] = False
        better[:, 0] = False
        actions[k] = better
        values[k] = alive[:, None] + np.where(better, q_repair, q_degrade)
        nxt = values[k]
    return OraclePolicy(spec, int(budget), int(horizon), actions, values)


def oracle_action(policy: OraclePolicy, step: int, condition: int, accrued_cost: int) -> ActionKind:
    idx = policy._index(step, condition, accrued_cost)
    return ActionKind.REPAIR if policy.action_table[idx] else ActionKind.DEGRADE


class OracleCache:
    """Memoizes oracle tables in memory and, optionally, as ``.npz`` files on disk."""

    def __init__(self, directory: str | Path | None = None, max_cells: int = DEFAULT_MAX_CELLS):
        self.directory = Path(directory) if directory is not None else None
        self.max_cells = max_cells
        self._mem: dict[tuple[str, int, int], OraclePolicy] = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def get(self, spec: ComponentSpec, budget: int, horizon: int) -> OraclePolicy:
        key = (spec.digest(), int(budget), int(horizon))
        hit = self._mem.get(key)
        if hit is not None:
            return hit
        path = None
        if self.directory is not None:
            path = self.directory / f"{key[0]}_{key[1]}_{key[2]}.npz"
            if path.exists():
                policy = OraclePolicy.load(path, spec)
                self._mem[key] = policy
                return policy
        policy = build_oracle(spec, budget, horizon, max_cells=self.max_cells)
        if path is not None:
            policy.save(path)
        self._mem[key] = policy
        return policy

    def put(self, table: OraclePolicy) -> None:
        """Register an already built table."""
        self._mem[(table.spec.digest(), table.budget, table.horizon)] = table

    def clear(self) -> None:
        self._mem.clear()
