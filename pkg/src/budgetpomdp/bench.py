"""Experiment harness: policy sweeps, allocation comparison, forest evaluation, scaling study."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import belief as belief_mod
from .agent.network import PolicyParameters
from .agent.policies import GuidedPPOPolicy, HeuristicPolicy, OracleComparator, VanillaPPOPolicy
from .agent.ppo import PPOConfig, TrainingResult, train_meta_ppo
from .alloc import allocate_kkt, allocate_proportional
from .errors import BuildOrderError, ParameterError
from .model import AllocationResult, ComponentSpec, Fleet, expected_unrepaired_lifetime, generate_fleet
from .oracle import OracleCache, build_oracle
from .sim import EpisodeRecord, Policy, run_episode, trajectory_is_monotone
from .survival.curves import DEFAULT_BUDGET_GRID, SurvivalCurve, boundary_parameters, fit_component
from .survival.forest import ForestConfig, ForestModel, predict_beta, r_squared, train_forest

log = logging.getLogger(__name__)

POLICY_NAMES = ("oracle", "guided-ppo", "heuristic", "vanilla-ppo")
METRICS_CSV_COLUMNS = ("policy", "budget", "mean_survival", "mean_repairs", "mean_cost", "runs", "stderr")
TIMING_CSV_COLUMNS = ("stage", "n_components", "mean_seconds", "std_seconds", "repeats")
STAGES = ("forest_prediction", "budget_split", "value_iteration", "policy_application")
Z_95_ONE_SIDED = 1.6448536269514722


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a desk-scale reproduction needs; hashed into every summary."""

    fleet_path: str | None = None
    fleet_count: int = 5
    fleet_seed: int = 0
    horizon: int = 100
    policies: tuple[str, ...] = POLICY_NAMES
    budgets: tuple[int, ...] = (0, 250, 500, 1000, 2500, 5000)
    runs: int = 100
    seed: int = 0
    train_steps: int = 200_000
    train_seed: int = 0
    n_particles: int = belief_mod.DEFAULT_PARTICLES
    eval_mode: str = "greedy"
    heuristic_interval: int = 5
    heuristic_threshold: int = 15
    forest_components: int = 100
    forest_seed: int = 1
    forest_holdout: float = 0.2
    curve_budgets: tuple[int, ...] = DEFAULT_BUDGET_GRID
    alloc_components: int = 50
    alloc_fleet_seed: int = 2
    alloc_budget: int = 25_000
    alloc_runs: int = 100
    scaling_counts: tuple[int, ...] = (10, 20, 40, 80, 160)
    scaling_repeats: int = 3
    output_dir: str = "out"

    def __post_init__(self):
        for name in ("policies", "budgets", "curve_budgets", "scaling_counts"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.runs < 1 or self.alloc_runs < 1 or self.scaling_repeats < 1:
            raise ParameterError("run counts must be >= 1")
        if not self.budgets:
            raise ParameterError("budget grid is empty")
        if list(self.budgets) != sorted(self.budgets) or self.budgets[0] < 0:
            raise ParameterError("budget grid must be sorted and nonnegative")
        if list(self.scaling_counts) != sorted(self.scaling_counts) or not self.scaling_counts:
            raise ParameterError("scaling counts must be a nonempty ascending list")
        unknown = [p for p in self.policies if p not in POLICY_NAMES]
        if unknown:
            raise ParameterError(f"unknown policies {unknown}; valid: {', '.join(POLICY_NAMES)}")
        if self.eval_mode not in ("greedy", "sample"):
            raise ParameterError("eval_mode must be 'greedy' or 'sample'")
        if not 0 < self.forest_holdout < 1:
            raise ParameterError("forest_holdout must be in (0, 1)")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Mapping) -> ExperimentConfig:
        known = {f for f in cls.__dataclass_fields__}
        extra = sorted(set(data) - known)
        if extra:
            raise ParameterError(f"unknown config keys: {', '.join(extra)}")
        return cls(**dict(data))

    def config_hash(self) -> str:
        """Hash of the settings that shape results (the output location is excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def load_fleet(self) -> Fleet:
        if self.fleet_path:
            return Fleet.load(self.fleet_path)
        return generate_fleet(self.fleet_count, self.fleet_seed, horizon=self.horizon)


@dataclass(frozen=True)
class MetricsRow:
    policy: str
    budget: int
    mean_survival: float
    mean_repairs: float
    mean_cost: float
    runs: int
    stderr: float

    def validate(self, horizon: int) -> None:
        if self.mean_cost > self.budget + 1e-9:
            raise ParameterError(f"{self.policy}@{self.budget}: mean cost {self.mean_cost} exceeds budget")
        if self.mean_survival > horizon + 1e-9:
            raise ParameterError(f"{self.policy}@{self.budget}: mean survival {self.mean_survival} exceeds horizon")
        if self.runs < 1:
            raise ParameterError("a metrics row needs at least one run")


@dataclass
class SafetyTally:
    """Counts of episodes checked for budget and monotonicity violations."""

    episodes: int = 0
    cost_violations: int = 0
    monotonicity_violations: int = 0

    def check(self, rec: EpisodeRecord, budget: int) -> None:
        self.episodes += 1
        self.cost_violations += rec.total_cost > budget
        if rec.trajectory is not None and not trajectory_is_monotone(rec.trajectory):
            self.monotonicity_violations += 1
        rec.trajectory = None  # keep memory flat on long sweeps

    def merge(self, other: SafetyTally) -> None:
        self.episodes += other.episodes
        self.cost_violations += other.cost_violations
        self.monotonicity_violations += other.monotonicity_violations

    @property
    def ok(self) -> bool:
        return self.cost_violations == 0 and self.monotonicity_violations == 0


def episode_seed(base: int, component: int, budget_index: int, run: int) -> np.random.SeedSequence:
    """Seed shared by every policy evaluated in the same cell and run."""
    return np.random.SeedSequence([base, component, budget_index, run])


def paired_not_worse(a: np.ndarray, b: np.ndarray, z: float = Z_95_ONE_SIDED) -> tuple[bool, float, float]:
    """One-sided paired check that ``a`` is not significantly below ``b``.

    Returns ``(ok, mean_difference, standard_error)``; ok when
    mean(a - b) + z * se >= 0.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if d.size < 2:
        return bool(d.mean() >= 0), float(d.mean()), 0.0
    se = float(d.std(ddof=1) / math.sqrt(d.size))
    mean = float(d.mean())
    return bool(mean + z * se >= 0), mean, se


# ---------------------------------------------------------------------------
# training and policy construction


def training_pairs(fleet: Fleet, budgets: Sequence[int]) -> list[tuple[ComponentSpec, int]]:
    return [(c, int(b)) for c in fleet.components for b in budgets]


def train_policies(cfg: ExperimentConfig, fleet: Fleet, cache: OracleCache, which: Sequence[str] = ("guided", "vanilla")) -> dict[str, TrainingResult]:
    pairs = training_pairs(fleet, cfg.budgets)
    hyper = PPOConfig(n_particles=cfg.n_particles)
    out = {}
    for kind in which:
        t0 = time.perf_counter()
        out[kind] = train_meta_ppo(pairs, cfg.train_steps, hyper, guided=kind == "guided", seed=cfg.train_seed, horizon=fleet.horizon, cache=cache)
        log.info("trained %s policy in %.1fs", kind, time.perf_counter() - t0)
    return out


def build_policies(
    cfg: ExperimentConfig,
    cache: OracleCache,
    guided: PolicyParameters | None = None,
    vanilla: PolicyParameters | None = None,
    names: Sequence[str] | None = None,
) -> dict[str, Policy]:
    names = tuple(names or cfg.policies)
    out: dict[str, Policy] = {}
    for name in names:
        if name == "oracle":
            out[name] = OracleComparator(cache)
        elif name == "heuristic":
            out[name] = HeuristicPolicy(cfg.heuristic_interval, cfg.heuristic_threshold)
        elif name == "guided-ppo":
            if guided is None:
                raise BuildOrderError("the guided-ppo policy needs a trained checkpoint; run `train --kind guided` first")
            out[name] = GuidedPPOPolicy(guided, cache, cfg.eval_mode)
        elif name == "vanilla-ppo":
            if vanilla is None:
                raise BuildOrderError("the vanilla-ppo policy needs a trained checkpoint; run `train --kind vanilla` first")
            out[name] = VanillaPPOPolicy(vanilla, cfg.eval_mode)
        else:
            raise ParameterError(f"unknown policy {name!r}; valid: {', '.join(POLICY_NAMES)}")
    return out


# ---------------------------------------------------------------------------
# policy sweep


@dataclass
class SweepResult:
    rows: list[MetricsRow]
    # per (policy, budget): fleet-mean survival of each run, aligned by run index
    run_survival: dict[tuple[str, int], np.ndarray]
    run_repairs: dict[tuple[str, int], np.ndarray]
    safety: SafetyTally = field(default_factory=SafetyTally)

    def row(self, policy: str, budget: int) -> MetricsRow:
        for r in self.rows:
            if r.policy == policy and r.budget == budget:
                return r
        raise KeyError((policy, budget))


def run_policy_sweep(cfg: ExperimentConfig, fleet: Fleet, policies: Mapping[str, Policy]) -> SweepResult:
    """Every policy on every (component, budget) with paired seeds.

    A run is one episode per component; a cell's survival is the mean over
    runs of the fleet-average survival.
    """
    rows, surv, reps = [], {}, {}
    safety = SafetyTally()
    n = len(fleet)
    for name, policy in policies.items():
        for bi, budget in enumerate(cfg.budgets):
            s = np.zeros((cfg.runs, n))
            r = np.zeros((cfg.runs, n))
            cost = np.zeros((cfg.runs, n))
            for ci, spec in enumerate(fleet.components):
                for run in range(cfg.runs):
                    rec = run_episode(spec, budget, policy, fleet.horizon, episode_seed(cfg.seed, ci, bi, run), cfg.n_particles, record=True)
                    safety.check(rec, budget)
                    s[run, ci], r[run, ci], cost[run, ci] = rec.survival_time, rec.repairs, rec.total_cost
            per_run = s.mean(axis=1)
            row = MetricsRow(
                name,
                int(budget),
                float(per_run.mean()),
                float(r.mean()),
                float(cost.mean()),
                cfg.runs,
                float(per_run.std(ddof=1) / math.sqrt(cfg.runs)) if cfg.runs > 1 else 0.0,
            )
            row.validate(fleet.horizon)
            rows.append(row)
            surv[(name, int(budget))] = per_run
            reps[(name, int(budget))] = r.mean(axis=1)
            log.info("%s budget=%d survival=%.2f repairs=%.2f", name, budget, row.mean_survival, row.mean_repairs)
    return SweepResult(rows, surv, reps, safety)


def write_metrics_csv(path: str | Path, rows: Sequence[MetricsRow], horizon: int) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_COLUMNS)
        for row in rows:
            row.validate(horizon)
            writer.writerow([row.policy, row.budget, repr(row.mean_survival), repr(row.mean_repairs), repr(row.mean_cost), row.runs, repr(row.stderr)])


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        return [
            MetricsRow(r["policy"], int(r["budget"]), float(r["mean_survival"]), float(r["mean_repairs"]), float(r["mean_cost"]), int(r["runs"]), float(r["stderr"]))
            for r in csv.DictReader(fh)
        ]


# ---------------------------------------------------------------------------
# survival curves and forest


def fit_fleet_curves(fleet: Fleet, budgets: Sequence[int] = DEFAULT_BUDGET_GRID, cache: OracleCache | None = None) -> list[SurvivalCurve]:
    cache = cache or OracleCache()
    return [fit_component(c, fleet.horizon, budgets, cache) for c in fleet.components]


@dataclass
class ForestEvaluation:
    model: ForestModel
    train_ids: list[str]
    test_ids: list[str]
    test_fitted: np.ndarray
    test_predicted: np.ndarray

    @property
    def r2(self) -> float:
        return r_squared(self.test_fitted, self.test_predicted)

    @property
    def mse(self) -> float:
        return float(np.mean((self.test_fitted - self.test_predicted) ** 2))


def evaluate_forest(
    fleet: Fleet,
    curves: Sequence[SurvivalCurve],
    holdout: float = 0.2,
    cfg: ForestConfig = ForestConfig(),
    seed: int = 0,
) -> ForestEvaluation:
    """Train on the leading components, score beta predictions on the trailing ``holdout`` share."""
    n = len(fleet)
    n_test = max(1, int(round(n * holdout)))
    if n_test >= n:
        raise ParameterError("holdout leaves no training data")
    comps = fleet.components
    data = [(c.features(), cv.beta) for c, cv in zip(comps, curves)]
    model = train_forest(data[: n - n_test], cfg, seed)
    test = comps[n - n_test :]
    pred = np.array([predict_beta(model, c) for c in test])
    fitted = np.array([cv.beta for cv in curves[n - n_test :]])
    return ForestEvaluation(model, [c.id for c in comps[: n - n_test]], [c.id for c in test], fitted, pred)


def predicted_curves(fleet: Fleet, model: ForestModel, cache: OracleCache | None = None) -> list[SurvivalCurve]:
    """alpha and gamma from the zero-budget survival, beta from the forest."""
    cache = cache or OracleCache()
    out = []
    for c in fleet.components:
        t0 = float(cache.get(c, 0, fleet.horizon).expected_survival)
        alpha, gamma = boundary_parameters(t0, fleet.horizon)
        beta = predict_beta(model, c) if alpha < 0 else 0.0
        out.append(SurvivalCurve(alpha, beta, gamma, c.id, "predicted"))
    return out


# ---------------------------------------------------------------------------
# allocation comparison


@dataclass
class AllocationComparison:
    t_max_rf: float
    t_max_baseline: float
    rf: AllocationResult
    baseline: AllocationResult
    component_ids: list[str]
    # survival[method] has shape (runs, components)
    survival: dict[str, np.ndarray]
    safety: SafetyTally = field(default_factory=SafetyTally)

    def paired(self) -> tuple[bool, float, float]:
        return paired_not_worse(self.survival["rf"].sum(axis=1), self.survival["baseline"].sum(axis=1))


def run_allocation_comparison(
    cfg: ExperimentConfig,
    fleet: Fleet,
    model: ForestModel,
    policy: Policy,
    cache: OracleCache | None = None,
    lifetime_samples: int = 1000,
    inspection_reserve: int | None = 10,
) -> AllocationComparison:
    """Forest-curve KKT allocation vs the repair-cost/lifetime baseline, both run under ``policy``.

    With ``inspection_reserve`` = m the forest allocation is rounded per
    component to whole units of one repair plus m inspections: money short of
    a repair buys no survival, and a policy that cannot observe needs
    inspections to time its repairs.  ``None`` keeps plain unit rounding.
    Components keep only their own allocation; leftovers are never shared.
    """
    cache = cache or OracleCache()
    curves = predicted_curves(fleet, model, cache)
    quanta = None
    if inspection_reserve is not None:
        quanta = [c.repair_cost + inspection_reserve * c.inspect_cost for c in fleet.components]
    rf = allocate_kkt(curves, cfg.alloc_budget, quanta=quanta)
    lifetimes = [expected_unrepaired_lifetime(c, lifetime_samples, cfg.seed + i)[0] for i, c in enumerate(fleet.components)]
    base = allocate_proportional(fleet.components, lifetimes, cfg.alloc_budget)
    safety = SafetyTally()
    survival = {}
    for method, alloc in (("rf", rf), ("baseline", base)):
        s = np.zeros((cfg.alloc_runs, len(fleet)))
        for ci, (spec, budget) in enumerate(zip(fleet.components, alloc.budgets)):
            for run in range(cfg.alloc_runs):
                rec = run_episode(spec, budget, policy, fleet.horizon, episode_seed(cfg.seed, ci, 0, run), cfg.n_particles, record=True)
                safety.check(rec, budget)
                s[run, ci] = rec.survival_time
        survival[method] = s
        log.info("allocation %s: T_max=%.1f", method, s.sum(axis=1).mean())
    return AllocationComparison(
        float(survival["rf"].sum(axis=1).mean()),
        float(survival["baseline"].sum(axis=1).mean()),
        rf,
        base,
        [c.id for c in fleet.components],
        survival,
        safety,
    )


def write_allocation_runs_csv(path: str | Path, comp: AllocationComparison) -> None:
    """Long-format per-component survival for both methods (one row per run and component)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "run", "component_id", "budget", "survival_time"])
        for method, alloc in (("rf", comp.rf), ("baseline", comp.baseline)):
            s = comp.survival[method]
            for run in range(s.shape[0]):
                for ci, cid in enumerate(comp.component_ids):
                    writer.writerow([method, run, cid, alloc.budgets[ci], int(s[run, ci])])


# ---------------------------------------------------------------------------
# scaling study


@dataclass
class ScalingTable:
    counts: tuple[int, ...]
    repeats: int
    # seconds[stage] has shape (len(counts), repeats)
    seconds: dict[str, np.ndarray]
    safety: SafetyTally = field(default_factory=SafetyTally)

    def mean(self, stage: str) -> np.ndarray:
        return self.seconds[stage].mean(axis=1)

    def slope(self, stage: str) -> float:
        """Least-squares slope of log(mean seconds) against log(n)."""
        return float(np.polyfit(np.log(self.counts), np.log(self.mean(stage)), 1)[0])

    @property
    def slopes(self) -> dict[str, float]:
        return {s: self.slope(s) for s in self.seconds}

    def rows(self) -> list[dict]:
        out = []
        for stage, secs in self.seconds.items():
            for i, n in enumerate(self.counts):
                out.append(
                    {
                        "stage": stage,
                        "n_components": n,
                        "mean_seconds": float(secs[i].mean()),
                        "std_seconds": float(secs[i].std(ddof=1)) if self.repeats > 1 else None,
                        "repeats": self.repeats,
                    }
                )
        return out


def run_scaling_study(
    component_counts: Sequence[int],
    repeats: int,
    model: ForestModel,
    policy: Policy,
    seed: int = 0,
    horizon: int = 100,
    budget_per_component: int = 500,
    n_particles: int = belief_mod.DEFAULT_PARTICLES,
    clock: Callable[[], float] = time.perf_counter,
) -> ScalingTable:
    """Wall clock of each pipeline stage on fleets of growing size.

    Stages: forest prediction of every beta, the KKT budget split, value
    iteration per component at its allocation, and one episode per component
    under ``policy``.  Tables are rebuilt every repeat (no caching).
    """
    counts = tuple(int(n) for n in component_counts)
    if not counts or list(counts) != sorted(counts) or counts[0] < 1:
        raise ParameterError("component counts must be positive and ascending")
    if repeats < 1:
        raise ParameterError("repeats must be >= 1")
    seconds = {s: np.zeros((len(counts), repeats)) for s in STAGES}
    safety = SafetyTally()
    for i, n in enumerate(counts):
        fleet = generate_fleet(n, seed + n, total_budget=budget_per_component * n, horizon=horizon)
        t0s = []
        for c in fleet.components:
            t0s.append(float(build_oracle(c, 0, horizon).expected_survival))
        X = np.array([c.features() for c in fleet.components])
        for r in range(repeats):
            t = clock()
            betas = np.minimum(model.predict_raw(X), 0.0)
            seconds["forest_prediction"][i, r] = clock() - t

            curves = []
            for c, t0, b in zip(fleet.components, t0s, betas):
                alpha, gamma = boundary_parameters(t0, horizon)
                curves.append(SurvivalCurve(alpha, float(b) if alpha < 0 else 0.0, gamma, c.id, "predicted"))
            t = clock()
            alloc = allocate_kkt(curves, fleet.total_budget)
            seconds["budget_split"][i, r] = clock() - t

            t = clock()
            tables = [build_oracle(c, b, horizon) for c, b in zip(fleet.components, alloc.budgets)]
            seconds["value_iteration"][i, r] = clock() - t

            cache = OracleCache()
            for tab in tables:
                cache.put(tab)
            bound = _bind_cache(policy, cache)
            t = clock()
            recs = [
                run_episode(c, b, bound, horizon, np.random.SeedSequence([seed, n, r, k]), n_particles, record=True)
                for k, (c, b) in enumerate(zip(fleet.components, alloc.budgets))
            ]
            seconds["policy_application"][i, r] = clock() - t
            for rec, b in zip(recs, alloc.budgets):
                safety.check(rec, b)
        log.info("scaling n=%d: %s", n, {s: round(float(seconds[s][i].mean()), 4) for s in STAGES})
    return ScalingTable(counts, repeats, seconds, safety)


def _bind_cache(policy: Policy, cache: OracleCache) -> Policy:
    """Point oracle-backed policies at ``cache`` so timed episodes reuse the timed tables."""
    if isinstance(policy, GuidedPPOPolicy):
        return GuidedPPOPolicy(policy.params, cache, policy.mode)
    if isinstance(policy, OracleComparator):
        return OracleComparator(cache)
    return policy


def write_timing_csv(path: str | Path, table: ScalingTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TIMING_CSV_COLUMNS)
        writer.writeheader()
        for row in table.rows():
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})


def write_summary(path: str | Path, cfg: ExperimentConfig, results: Mapping) -> None:
    payload = {"config_hash": cfg.config_hash(), "config": cfg.to_dict(), "results": results}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")
