"""Domain types: components, their deterioration law, fleets and allocations."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import weibull_min

from .errors import ParameterError, SchemaError

FLEET_SCHEMA = "budgetpomdp.fleet/1"
DEFAULT_MAX_CONDITION = 100

# Defaults used by generate_fleet: industry cost ranges, desk-scale deterioration ranges.
DEFAULT_COST_RANGES = (50, 500, 1, 5)
DEFAULT_WEIBULL_RANGES = (1.0, 3.0, 20.0, 80.0)


class ActionKind(enum.IntEnum):
    DEGRADE = 0
    INSPECT = 1
    REPAIR = 2


@dataclass(frozen=True)
class ComponentSpec:
    """One component: its deterioration law and what its actions cost.

    ``weibull_scale`` is the target expected lifetime (in steps) without repairs;
    ``weibull_shape`` is the shape of the per-step decrement distribution.
    """

    id: str
    weibull_shape: float
    weibull_scale: float
    repair_cost: int
    inspect_cost: int
    max_condition: int = DEFAULT_MAX_CONDITION

    def __post_init__(self):
        if not (self.weibull_shape > 0 and math.isfinite(self.weibull_shape)):
            raise ParameterError(f"weibull_shape must be positive, got {self.weibull_shape}")
        if not (self.weibull_scale > 0 and math.isfinite(self.weibull_scale)):
            raise ParameterError(f"weibull_scale must be positive, got {self.weibull_scale}")
        for name in ("repair_cost", "inspect_cost", "max_condition"):
            value = getattr(self, name)
            if int(value) != value:
                raise ParameterError(f"{name} must be an integer, got {value}")
            object.__setattr__(self, name, int(value))
        if self.inspect_cost < 1 or self.repair_cost < 1:
            raise ParameterError("action costs must be at least 1 unit")
        if self.inspect_cost > self.repair_cost:
            raise ParameterError("inspect_cost may not exceed repair_cost")
        if self.max_condition < 1:
            raise ParameterError("max_condition must be >= 1")

    def cost(self, action: ActionKind) -> int:
        if action == ActionKind.REPAIR:
            return self.repair_cost
        if action == ActionKind.INSPECT:
            return self.inspect_cost
        return 0

    def features(self) -> tuple[float, float, float, float]:
        return (self.weibull_shape, self.weibull_scale, float(self.repair_cost), float(self.inspect_cost))

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    @property
    def kernel(self) -> DecayKernel:
        return _kernel_for(self.weibull_shape, self.weibull_scale, self.max_condition)


class DecayKernel:
    """Per-step condition decrement distribution.

    ``pmf[d]`` is the probability that a non-repair step removes ``d`` condition
    points; the last entry absorbs every decrement that reaches 0.  Entries may
    be floats or :class:`fractions.Fraction` (exact toy kernels for tests).
    """

    def __init__(self, pmf: Sequence):
        pmf = list(pmf)
        if len(pmf) < 2:
            raise ParameterError("kernel needs at least two condition levels")
        if any(p < 0 for p in pmf):
            raise ParameterError("kernel probabilities must be nonnegative")
        total = sum(pmf)
        exact = all(isinstance(p, (Fraction, int)) for p in pmf)
        if exact:
            if total != 1:
                raise ParameterError(f"exact kernel must sum to 1, got {total}")
        elif abs(float(total) - 1.0) > 1e-9:
            raise ParameterError(f"kernel must sum to 1, got {float(total)}")
        self.exact = exact
        self.pmf = tuple(Fraction(p) for p in pmf) if exact else tuple(float(p) / float(total) for p in pmf)
        self.max_condition = len(pmf) - 1
        cdf = np.cumsum(np.asarray([float(p) for p in self.pmf]))
        cdf[-1] = 1.0
        self._cdf = cdf
        # probability that one non-repair step from condition s ends at 0
        self.death_prob = np.concatenate([[1.0], 1.0 - cdf[:-1]])

    @classmethod
    def weibull(cls, shape: float, scale: float, max_condition: int) -> DecayKernel:
        """Rounded Weibull decrements sized so the unrepaired lifetime is about ``scale`` steps."""
        step_scale = max_condition / (scale * math.gamma(1.0 + 1.0 / shape))
        step_scale = max(step_scale, 1e-12)
        edges = np.arange(max_condition) + 0.5
        cdf = weibull_min.cdf(edges, shape, scale=step_scale)
        pmf = np.diff(np.concatenate([[0.0], cdf, [1.0]]))
        return cls(np.clip(pmf, 0.0, None))

    def sample(self, conditions: np.ndarray | int, u: np.ndarray | float) -> np.ndarray | int:
        """Push conditions one non-repair step forward using uniforms ``u``.

        Condition 0 stays at 0.
        """
        decrement = np.searchsorted(self._cdf, u, side="right")
        decrement = np.minimum(decrement, self.max_condition)
        out = np.maximum(np.asarray(conditions) - decrement, 0)
        if np.ndim(out) == 0:
            return int(out)
        return out

    def transition_matrix(self) -> np.ndarray:
        """Row-stochastic matrix over condition levels 0..max_condition under Degrade/Inspect."""
        n = self.max_condition + 1
        dtype = object if self.exact else float
        zero = Fraction(0) if self.exact else 0.0
        mat = np.full((n, n), zero, dtype=dtype)
        mat[0, 0] = Fraction(1) if self.exact else 1.0
        for s in range(1, n):
            for d, p in enumerate(self.pmf):
                mat[s, max(s - d, 0)] += p
        return mat

    @property
    def matrix(self) -> np.ndarray:
        """Float transition matrix, built once and kept read-only."""
        cached = getattr(self, "_matrix", None)
        if cached is None:
            cached = self.transition_matrix().astype(float)
            cached.setflags(write=False)
            self._matrix = cached
        return cached


@lru_cache(maxsize=4096)
def _kernel_for(shape: float, scale: float, max_condition: int) -> DecayKernel:
    return DecayKernel.weibull(shape, scale, max_condition)


@dataclass(frozen=True)
class Fleet:
    components: tuple[ComponentSpec, ...]
    total_budget: int
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ParameterError("component ids must be unique")
        if self.horizon < 1:
            raise ParameterError("horizon must be >= 1")
        if self.total_budget < 0:
            raise ParameterError("total_budget must be >= 0")

    def __len__(self) -> int:
        return len(self.components)

    def to_dict(self) -> dict:
        return {
            "schema": FLEET_SCHEMA,
            "components": [asdict(c) for c in self.components],
            "total_budget": self.total_budget,
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> Fleet:
        if data.get("schema") != FLEET_SCHEMA:
            raise SchemaError(f"expected fleet schema {FLEET_SCHEMA!r}, got {data.get('schema')!r}")
        comps = tuple(ComponentSpec(**c) for c in data["components"])
        return cls(comps, int(data["total_budget"]), int(data["horizon"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> Fleet:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class AllocationResult:
    budgets: tuple[int, ...]
    total_budget: int
    multiplier: float | None = None
    objective_estimate: float = float("nan")
    method: str = ""
    continuous: tuple[float, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if any(b < 0 for b in self.budgets):
            raise ParameterError("allocated budgets must be nonnegative")
        if sum(self.budgets) > self.total_budget:
            raise ParameterError(f"allocation {sum(self.budgets)} exceeds total budget {self.total_budget}")

    @property
    def unspent(self) -> int:
        return self.total_budget - sum(self.budgets)


def _check_range(name: str, lo, hi):
    if lo > hi:
        raise ParameterError(f"{name} range is empty: lo={lo} > hi={hi}")


def generate_fleet(
    count: int,
    seed: int,
    cost_ranges: tuple[int, int, int, int] = DEFAULT_COST_RANGES,
    weibull_ranges: tuple[float, float, float, float] = DEFAULT_WEIBULL_RANGES,
    total_budget: int | None = None,
    horizon: int = 100,
    max_condition: int = DEFAULT_MAX_CONDITION,
) -> Fleet:
    """Draw a synthetic fleet; every parameter is uniform on its range.

    ``total_budget`` defaults to 500 units per component.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    r_lo, r_hi, i_lo, i_hi = cost_ranges
    k_lo, k_hi, l_lo, l_hi = weibull_ranges
    _check_range("repair_cost", r_lo, r_hi)
    _check_range("inspect_cost", i_lo, i_hi)
    _check_range("weibull_shape", k_lo, k_hi)
    _check_range("weibull_scale", l_lo, l_hi)
    rng = np.random.default_rng(seed)
    comps = []
    width = len(str(count - 1))
    for i in range(count):
        repair = int(rng.integers(r_lo, r_hi, endpoint=True))
        inspect = int(rng.integers(i_lo, i_hi, endpoint=True))
        shape = float(rng.uniform(k_lo, k_hi))
        scale = float(rng.uniform(l_lo, l_hi))
        comps.append(
            ComponentSpec(
                id=f"c{i:0{width}d}",
                weibull_shape=shape,
                weibull_scale=scale,
                repair_cost=repair,
                inspect_cost=min(inspect, repair),
                max_condition=max_condition,
            )
        )
    if total_budget is None:
        total_budget = 500 * count
    return Fleet(tuple(comps), total_budget, horizon)


def expected_unrepaired_lifetime(spec: ComponentSpec, samples: int, seed: int) -> tuple[float, float]:
    """Monte-Carlo mean and variance of the number of steps until condition 0 with no repairs.

    The count includes the starting step, so a component destroyed by its first
    decrement lives exactly one step.
    """
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    kernel = spec.kernel
    rng = np.random.default_rng(seed)
    cond = np.full(samples, spec.max_condition, dtype=np.int64)
    life = np.zeros(samples, dtype=np.int64)
    alive = cond > 0
    steps = 0
    while alive.any():
        life += alive
        cond = kernel.sample(cond, rng.random(samples))
        alive = cond > 0
        steps += 1
        if steps > 10_000_000:
            raise ParameterError("deterioration is too slow to simulate to absorption")
    return float(life.mean()), float(life.var())
