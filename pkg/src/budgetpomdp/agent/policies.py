"""Reward, observation features and the decision procedures evaluated by the harness."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ModelCorruptionError, ParameterError
from ..belief import BeliefState
from ..model import ActionKind, ComponentSpec, DecayKernel
from ..oracle import OracleCache, OraclePolicy, oracle_action
from ..sim import StepView
from .network import PolicyParameters, log_softmax


class AgentChoice(enum.IntEnum):
    """Guided action head: index 0 inspects, index 1 defers to the oracle."""

    INSPECT = 0
    DEFER = 1


@dataclass(frozen=True)
class RewardConfig:
    r1: float = -100.0  # attempted overspend
    r2: float = -10.0  # belief says the component is dead
    alpha: float = 1e-3  # belief-error coefficient

    def __post_init__(self):
        if not (self.r1 < 0 and self.r2 < 0 and 0 < self.alpha < 1):
            raise ParameterError("need r1 < 0, r2 < 0 and 0 < alpha < 1")
        if not abs(self.r1) > abs(self.r2):
            raise ParameterError("|r1| must exceed |r2|")

    def check_against(self, max_condition: int) -> None:
        """The alive reward lies in [-alpha*max_condition, 1]; |r2| must exceed both ends."""
        if not abs(self.r2) > max(1.0, self.alpha * max_condition):
            raise ParameterError("|r2| must exceed every attainable alive reward")


def reward(
    condition: int,
    belief_mean: float,
    accrued_cost: int,
    budget: int,
    step: int,
    horizon: int,
    cfg: RewardConfig = RewardConfig(),
) -> float:
    if accrued_cost > budget:
        return cfg.r1
    if math.floor(belief_mean) == 0:
        return cfg.r2
    return step / horizon - cfg.alpha * abs(belief_mean - condition)


# Fixed feature normalizations, shared by training and evaluation.
SHAPE_SCALE = 3.0
LIFETIME_SCALE = 100.0
REPAIR_SCALE = 500.0
INSPECT_SCALE = 5.0
BUDGET_SCALE = 5000.0
REPAIRS_LEFT_CAP = 10
GAIN_SCALE = 0.1  # expected surviving steps


@dataclass(frozen=True)
class AgentObservation:
    """Agent input: belief summary, budget use, time, and component context.

    Normalizations: mean by max_condition, variance by (max_condition/10)^2,
    accrued cost by the allocated budget (1 when the budget is 0), step by the
    horizon; repairs still affordable are capped at 10 and divided by 10.
    ``death_risk`` is the belief probability of sitting at 0 after one more
    unrepaired step; ``inspect_gain`` is tanh(gain / 0.1) for the two-step
    lookahead gain computed by :func:`inspect_gain` (0 when no oracle is
    attached, -1 when an inspection is unaffordable).
    """

    belief_mean: float
    belief_variance: float
    cost_fraction: float
    step_fraction: float
    repairs_left: float
    death_risk: float
    inspect_gain: float
    context: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.belief_mean,
                self.belief_variance,
                self.cost_fraction,
                self.step_fraction,
                self.repairs_left,
                self.death_risk,
                self.inspect_gain,
                *self.context,
            ]
        )


N_FEATURES = 12


def component_context(spec: ComponentSpec, budget: int) -> tuple[float, ...]:
    return (
        spec.weibull_shape / SHAPE_SCALE,
        spec.weibull_scale / LIFETIME_SCALE,
        spec.repair_cost / REPAIR_SCALE,
        spec.inspect_cost / INSPECT_SCALE,
        budget / BUDGET_SCALE,
    )


def inspect_gain(
    oracle: OraclePolicy, step: int, accrued_cost: int, belief: BeliefState, kernel: DecayKernel | None = None
) -> float:
    """Expected extra surviving steps from inspecting now instead of deferring.

    Both branches are scored with the oracle values from two steps ahead.
    Inspecting degrades this step and lets the oracle act on the revealed
    condition next step.  Deferring follows the oracle at the rounded belief
    mean now and at the rounded predicted mean next step.  Returns -inf when
    the inspection is unaffordable and -1 when the oracle would repair now or
    fewer than two steps remain.
    """
    spec = oracle.spec
    m = spec.max_condition
    kernel = kernel if kernel is not None else spec.kernel
    horizon = oracle.horizon
    if accrued_cost + spec.inspect_cost > oracle.budget:
        return -math.inf
    if step >= horizon - 1:
        return -1.0
    j = oracle.repairs_left(accrued_cost)
    if oracle.action_table[step, int(np.clip(round(belief.mean), 0, m)), j]:
        return -1.0
    j_inspect = oracle.repairs_left(accrued_cost + spec.inspect_cost)
    trans = kernel.matrix
    levels = np.arange(m + 1)
    v1 = oracle.value_table[step + 1].astype(float)
    v2 = oracle.value_table[step + 2].astype(float) if step + 2 < horizon else np.zeros_like(v1)
    hist = np.bincount(belief.particles, minlength=m + 1) / belief.n_particles
    nxt = hist @ trans
    m1 = int(np.clip(round(float(nxt @ levels)), 0, m))
    alive = (levels > 0).astype(float)
    if j > 0 and oracle.action_table[step + 1, m1, j]:
        q1 = alive + v2[m, j - 1]
    else:
        q1 = alive + trans @ v2[:, j]
    return float(nxt @ v1[:, j_inspect] - nxt @ q1)


def observe(
    spec: ComponentSpec,
    budget: int,
    horizon: int,
    step: int,
    accrued_cost: int,
    belief: BeliefState,
    oracle: OraclePolicy | None = None,
    context: tuple[float, ...] | None = None,
    kernel: DecayKernel | None = None,
) -> AgentObservation:
    m = spec.max_condition
    left = max(budget - accrued_cost, 0) // spec.repair_cost
    kernel = kernel if kernel is not None else spec.kernel
    gain = 0.0
    if oracle is not None and step < oracle.horizon:
        gain = float(np.tanh(inspect_gain(oracle, step, min(accrued_cost, budget), belief, kernel) / GAIN_SCALE))
    return AgentObservation(
        belief_mean=belief.mean / m,
        belief_variance=belief.variance / (m / 10.0) ** 2,
        cost_fraction=accrued_cost / budget if budget > 0 else 1.0,
        step_fraction=step / horizon,
        repairs_left=min(left, REPAIRS_LEFT_CAP) / REPAIRS_LEFT_CAP,
        death_risk=float(np.mean(kernel.death_prob[belief.particles])),
        inspect_gain=gain,
        context=context if context is not None else component_context(spec, budget),
    )


def action_distribution(params: PolicyParameters, x: np.ndarray) -> np.ndarray:
    logits, _ = params.forward(x)
    if not np.all(np.isfinite(logits)):
        raise ModelCorruptionError("non-finite policy logits")
    return np.exp(log_softmax(logits[0]))


def act(params: PolicyParameters, obs: AgentObservation | np.ndarray, mode: str, rng: np.random.Generator | None = None) -> int:
    """Pick an action index: ``sample`` draws from the softmax, ``greedy`` takes the argmax.

    Greedy ties go to the highest index, which is Defer for the guided head.
    """
    x = obs.as_array() if isinstance(obs, AgentObservation) else obs
    probs = action_distribution(params, x)
    if mode == "greedy":
        best = probs.max()
        return int(np.flatnonzero(probs == best)[-1])
    if mode == "sample":
        if rng is None:
            raise ParameterError("sampling needs a generator")
        return int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), len(probs) - 1))
    raise ParameterError(f"unknown mode {mode!r}")


def compose_action(
    agent_choice: AgentChoice, oracle: OraclePolicy, step: int, belief_mean: float, accrued_cost: int
) -> ActionKind:
    """Inspect, or hand the step to the oracle at the rounded belief mean."""
    if agent_choice == AgentChoice.INSPECT:
        return ActionKind.INSPECT
    condition = int(np.clip(round(belief_mean), 0, oracle.spec.max_condition))
    return oracle_action(oracle, step, condition, accrued_cost)


# ---------------------------------------------------------------------------
# decision procedures for run_episode


class OracleComparator:
    """Full-information upper bound: reads the true condition."""

    name = "oracle"

    def __init__(self, cache: OracleCache | None = None):
        self.cache = cache or OracleCache()

    def start(self, spec, budget, horizon):
        table = self.cache.get(spec, budget, horizon)

        def decide(view: StepView, rng):
            return oracle_action(table, view.step, view.condition, view.accrued_cost)

        return decide


class HeuristicPolicy:
    """Inspect every ``interval`` steps; repair once the believed condition drops below ``threshold``."""

    def __init__(self, interval: int = 5, threshold: int = 15):
        if interval < 1:
            raise ParameterError("interval must be >= 1")
        if threshold < 0:
            raise ParameterError("threshold must be >= 0")
        self.interval = interval
        self.threshold = threshold
        self.name = "heuristic"

    def start(self, spec, budget, horizon):
        def decide(view: StepView, rng):
            if view.step % self.interval == 0:
                return ActionKind.INSPECT
            if view.belief.mean < self.threshold and view.accrued_cost + spec.repair_cost <= budget:
                return ActionKind.REPAIR
            return ActionKind.DEGRADE

        return decide


def heuristic_policy(interval: int = 5, threshold: int = 15) -> HeuristicPolicy:
    return HeuristicPolicy(interval, threshold)


class GuidedPPOPolicy:
    """Trained inspect/defer head composed with the oracle table."""

    name = "guided-ppo"

    def __init__(self, params: PolicyParameters, cache: OracleCache | None = None, mode: str = "greedy"):
        if params.n_actions != len(AgentChoice):
            raise ParameterError("guided policy needs a two-action head")
        self.params = params
        self.cache = cache or OracleCache()
        self.mode = mode

    def start(self, spec, budget, horizon):
        table = self.cache.get(spec, budget, horizon)
        context = component_context(spec, budget)

        def decide(view: StepView, rng):
            b = view.belief
            obs = observe(spec, budget, horizon, view.step, view.accrued_cost, b, table, context)
            choice = AgentChoice(act(self.params, obs.as_array(), self.mode, rng))
            return compose_action(choice, table, view.step, b.mean, view.accrued_cost)

        return decide


class VanillaPPOPolicy:
    """Same network with a three-way head over Degrade/Inspect/Repair and no oracle."""

    name = "vanilla-ppo"

    def __init__(self, params: PolicyParameters, mode: str = "greedy"):
        if params.n_actions != len(ActionKind):
            raise ParameterError("vanilla policy needs a three-action head")
        self.params = params
        self.mode = mode

    def start(self, spec, budget, horizon):
        context = component_context(spec, budget)

        def decide(view: StepView, rng):
            obs = observe(spec, budget, horizon, view.step, view.accrued_cost, view.belief, None, context)
            probs = action_distribution(self.params, obs.as_array())
            if self.mode == "greedy":
                # ties resolve toward the cheaper action
                return ActionKind(int(np.argmax(probs)))
            return ActionKind(int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), 2)))

        return decide
