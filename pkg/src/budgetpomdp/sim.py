"""Single-component budget-constrained episode simulator."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

from . import belief as belief_mod
from .belief import BeliefState
from .errors import ContractViolation, ParameterError
from .model import ActionKind, ComponentSpec, DecayKernel


@dataclass(frozen=True)
class EnvState:
    condition: int
    accrued_cost: int
    step: int
    allocated_budget: int


@dataclass(frozen=True)
class Observation:
    """Exact condition after an inspection, ``None`` otherwise."""

    condition: int | None = None

    @property
    def exact(self) -> bool:
        return self.condition is not None


NO_OBSERVATION = Observation()


@dataclass
class Trajectory:
    conditions: np.ndarray  # condition at the start of each simulated step
    actions: np.ndarray  # ActionKind values actually applied
    costs: np.ndarray  # accrued cost after each step
    final_condition: int


@dataclass
class EpisodeRecord:
    survival_time: int
    total_cost: int
    repairs: int
    inspections: int
    coerced: int = 0
    trajectory: Trajectory | None = None


class ComponentEnv:
    """Transition and cost rules for one component under a fixed allocated budget."""

    def __init__(self, spec: ComponentSpec, budget: int, horizon: int, kernel: DecayKernel | None = None):
        if budget < 0:
            raise ParameterError("budget must be >= 0")
        if horizon < 1:
            raise ParameterError("horizon must be >= 1")
        self.spec = spec
        self.budget = int(budget)
        self.horizon = int(horizon)
        self.kernel = kernel if kernel is not None else spec.kernel

    def reset(self) -> EnvState:
        return EnvState(self.spec.max_condition, 0, 0, self.budget)

    def affordable(self, state: EnvState, action: ActionKind) -> bool:
        return state.accrued_cost + self.spec.cost(action) <= self.budget

    def guard(self, state: EnvState, action: ActionKind) -> ActionKind:
        """Replace an action the remaining budget cannot pay for by Degrade."""
        return action if self.affordable(state, action) else ActionKind.DEGRADE

    def step(self, state: EnvState, action: ActionKind, u: float) -> tuple[EnvState, Observation]:
        """Apply ``action``; ``u`` is the step's uniform draw for the decrement.

        The draw is consumed whatever the action so paired episodes stay aligned.
        """
        if state.step >= self.horizon:
            raise ContractViolation(f"step {state.step} is past horizon {self.horizon}")
        if state.condition == 0:
            nxt = 0
        elif action == ActionKind.REPAIR:
            nxt = self.spec.max_condition
        else:
            nxt = self.kernel.sample(state.condition, u)
        new_state = EnvState(nxt, state.accrued_cost + self.spec.cost(action), state.step + 1, state.allocated_budget)
        obs = Observation(nxt) if action == ActionKind.INSPECT else NO_OBSERVATION
        return new_state, obs


@dataclass(frozen=True)
class StepView:
    """What a decision procedure sees at one step.

    ``condition`` is the hidden truth; only the full-information oracle
    comparator may read it.
    """

    spec: ComponentSpec
    step: int
    horizon: int
    budget: int
    accrued_cost: int
    belief: BeliefState
    condition: int


Decision = Callable[[StepView, np.random.Generator], ActionKind]


class Policy(Protocol):
    name: str

    def start(self, spec: ComponentSpec, budget: int, horizon: int) -> Decision: ...


def episode_streams(seed) -> tuple[np.random.Generator, np.random.Generator]:
    """Environment and agent generators for one episode seed.

    The environment stream depends only on ``seed`` so competing policies
    evaluated on the same seed see the same deterioration draws.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    env_ss, agent_ss = ss.spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(agent_ss)


def run_episode(
    spec: ComponentSpec,
    budget: int,
    policy: Policy,
    horizon: int,
    seed,
    n_particles: int = belief_mod.DEFAULT_PARTICLES,
    record: bool = False,
    kernel: DecayKernel | None = None,
) -> EpisodeRecord:
    """Simulate one episode from full condition.

    Unaffordable actions are coerced to Degrade.  The episode stops once the
    component is absorbed at 0 since no later action can change its outcome.
    """
    env = ComponentEnv(spec, budget, horizon, kernel)
    decide = policy.start(spec, env.budget, env.horizon)
    env_rng, agent_rng = episode_streams(seed)
    state = env.reset()
    bel = belief_mod.init_belief(spec, n_particles)
    repairs = inspections = coerced = survival = 0
    if record:
        conds, acts, costs = [], [], []
    while state.step < env.horizon and state.condition > 0:
        survival += 1
        view = StepView(spec, state.step, env.horizon, env.budget, state.accrued_cost, bel, state.condition)
        requested = decide(view, agent_rng)
        action = env.guard(state, requested)
        coerced += action != requested
        if record:
            conds.append(state.condition)
            acts.append(int(action))
        state, obs = env.step(state, action, env_rng.random())
        repairs += action == ActionKind.REPAIR
        inspections += action == ActionKind.INSPECT
        if state.condition > 0 and state.step < env.horizon:
            bel = belief_mod.predict(bel, action, spec, agent_rng, kernel=env.kernel)
            bel = belief_mod.correct(bel, obs)
        if record:
            costs.append(state.accrued_cost)
    traj = None
    if record:
        traj = Trajectory(np.asarray(conds, dtype=np.int64), np.asarray(acts, dtype=np.int8), np.asarray(costs, dtype=np.int64), state.condition)
    return EpisodeRecord(survival, state.accrued_cost, int(repairs), int(inspections), int(coerced), traj)


def trajectory_is_monotone(traj: Trajectory) -> bool:
    """Condition never rises except on the step right after a repair."""
    conds = np.append(traj.conditions, traj.final_condition)
    for k, action in enumerate(traj.actions):
        if action != ActionKind.REPAIR and conds[k + 1] > conds[k]:
            return False
    return True


EPISODE_CSV_COLUMNS = ("component_id", "seed", "budget", "policy_name", "survival_time", "total_cost", "repairs", "inspections")


def write_episode_csv(path: str | Path, rows: Iterable[tuple[str, int, int, str, EpisodeRecord]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPISODE_CSV_COLUMNS)
        for comp_id, seed, budget, name, rec in rows:
            writer.writerow([comp_id, seed, budget, name, rec.survival_time, rec.total_cost, rec.repairs, rec.inspections])


class FixedActionPolicy:
    """Always requests the same action (always-Degrade is the zero-budget reference)."""

    def __init__(self, action: ActionKind = ActionKind.DEGRADE, name: str | None = None):
        self.action = ActionKind(action)
        self.name = name or f"always-{self.action.name.lower()}"

    def start(self, spec, budget, horizon) -> Decision:
        return lambda view, rng: self.action
