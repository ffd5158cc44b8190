"""Meta-training of the PPO agent across (component, budget) pairs."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .. import belief as belief_mod
from ..errors import ModelCorruptionError, ParameterError
from ..model import ActionKind, ComponentSpec
from ..oracle import OracleCache
from ..sim import ComponentEnv
from .network import Adam, Minibatch, PolicyParameters, log_softmax, ppo_loss
from .policies import N_FEATURES, AgentChoice, RewardConfig, component_context, compose_action, observe, reward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 1e-4
    minibatch_size: int = 128
    rollout_horizon: int = 4096
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 10
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float | None = None
    hidden: tuple[int, ...] = (64, 64)
    n_particles: int = belief_mod.DEFAULT_PARTICLES


@dataclass
class TrainingResult:
    params: PolicyParameters
    curve: list[dict] = field(default_factory=list)

    def write_curve(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["step", "mean_episode_reward", "mean_survival"])
            writer.writeheader()
            for row in self.curve:
                writer.writerow({k: row[k] for k in writer.fieldnames})


def compute_gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimates and the matching value targets."""
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_value = last_value if t == n - 1 else values[t + 1]
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv, adv + values


class _Episode:
    """Mutable per-episode bookkeeping for rollouts."""

    def __init__(self, spec: ComponentSpec, budget: int, horizon: int, n_particles: int, table):
        self.spec = spec
        self.env = ComponentEnv(spec, budget, horizon)
        self.state = self.env.reset()
        self.belief = belief_mod.init_belief(spec, n_particles)
        self.table = table
        self.context = component_context(spec, budget)
        self.total_reward = 0.0
        self.survival = 0

    def features(self) -> np.ndarray:
        s = self.state
        return observe(
            self.spec, self.env.budget, self.env.horizon, s.step, s.accrued_cost, self.belief, self.table, self.context, self.env.kernel
        ).as_array()


def train_meta_ppo(
    fleet_subset: Sequence[tuple[ComponentSpec, int]],
    total_steps: int,
    hyper: PPOConfig = PPOConfig(),
    guided: bool = True,
    seed: int = 0,
    horizon: int = 100,
    reward_cfg: RewardConfig = RewardConfig(),
    cache: OracleCache | None = None,
    init_params: PolicyParameters | None = None,
) -> TrainingResult:
    """Train one policy over episodes whose (component, budget) pair is drawn uniformly per episode.

    ``guided`` trains the inspect/defer head composed with the oracle; otherwise
    the head chooses Degrade/Inspect/Repair directly.  Episodes end at the
    horizon or when the true condition reaches 0.
    """
    pairs = list(fleet_subset)
    if not pairs:
        raise ParameterError("fleet_subset is empty")
    if total_steps < hyper.rollout_horizon:
        raise ParameterError(f"total_steps must be >= rollout_horizon ({hyper.rollout_horizon})")
    for spec, _ in pairs:
        reward_cfg.check_against(spec.max_condition)
    cache = cache or OracleCache()
    rng = np.random.default_rng(seed)
    n_actions = len(AgentChoice) if guided else len(ActionKind)
    init_seed = int(rng.integers(2**31))
    if init_params is not None:
        if (init_params.n_inputs, init_params.n_actions) != (N_FEATURES, n_actions):
            raise ParameterError("init_params does not match the requested head")
        params = init_params.copy()
    else:
        params = PolicyParameters.initialize(N_FEATURES, n_actions, hyper.hidden, seed=init_seed)
    params.metadata = {
        "guided": guided,
        "seed": seed,
        "total_steps": total_steps,
        "horizon": horizon,
        "hyper": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(hyper).items()},
        "reward": asdict(reward_cfg),
        "pairs": [[s.id, int(b)] for s, b in pairs],
    }
    opt = Adam(params.flat.size, lr=hyper.learning_rate)
    tables = {}
    if guided:
        for spec, budget in pairs:
            tables[(spec.id, budget)] = cache.get(spec, budget, horizon)

    def new_episode() -> _Episode:
        spec, budget = pairs[int(rng.integers(len(pairs)))]
        return _Episode(spec, budget, horizon, hyper.n_particles, tables.get((spec.id, budget)))

    T = hyper.rollout_horizon
    ep = new_episode()
    steps_done = 0
    curve = []
    n_updates = total_steps // T
    for update in range(n_updates):
        obs = np.zeros((T, N_FEATURES))
        acts = np.zeros(T, dtype=np.int64)
        logps = np.zeros(T)
        vals = np.zeros(T)
        rews = np.zeros(T)
        dones = np.zeros(T)
        finished_rewards, finished_survival = [], []
        for t in range(T):
            x = ep.features()
            logits, value = params.forward(x)
            logp_all = log_softmax(logits[0])
            a = int(min(np.searchsorted(np.cumsum(np.exp(logp_all)), rng.random(), side="right"), n_actions - 1))
            st = ep.state
            if guided:
                env_action = compose_action(AgentChoice(a), ep.table, st.step, ep.belief.mean, st.accrued_cost)
            else:
                env_action = ActionKind(a)
            attempted = st.accrued_cost + ep.spec.cost(env_action)
            applied = ep.env.guard(st, env_action)
            nxt, ob = ep.env.step(st, applied, rng.random())
            ep.survival += 1
            bel = belief_mod.predict(ep.belief, applied, ep.spec, rng, kernel=ep.env.kernel)
            ep.belief = belief_mod.correct(bel, ob)
            ep.state = nxt
            r = reward(nxt.condition, ep.belief.mean, attempted, ep.env.budget, nxt.step, horizon, reward_cfg)
            done = nxt.condition == 0 or nxt.step >= horizon
            obs[t], acts[t], logps[t], vals[t], rews[t], dones[t] = x, a, logp_all[a], value[0], r, done
            ep.total_reward += r
            if done:
                finished_rewards.append(ep.total_reward)
                finished_survival.append(ep.survival)
                ep = new_episode()
        steps_done += T
        last_value = float(params.forward(ep.features())[1][0])
        adv, returns = compute_gae(rews, vals, dones, last_value, hyper.gamma, hyper.gae_lambda)
        try:
            stats = _update(params, opt, hyper, obs, acts, logps, adv, returns, rng)
        except ModelCorruptionError as exc:
            raise ModelCorruptionError(f"training diverged at update {update} (step {steps_done}): {exc}") from exc
        row = {
            "step": steps_done,
            "mean_episode_reward": float(np.mean(finished_rewards)) if finished_rewards else float("nan"),
            "mean_survival": float(np.mean(finished_survival)) if finished_survival else float("nan"),
            "action0_rate": float(np.mean(acts == 0)),
            **stats,
        }
        curve.append(row)
        log.info(
            "update %d/%d step=%d reward=%.3f survival=%.2f action0=%.3f",
            update + 1, n_updates, steps_done, row["mean_episode_reward"], row["mean_survival"], row["action0_rate"],
        )
    params.metadata["updates"] = n_updates
    return TrainingResult(params, curve)


def _update(params, opt, hyper, obs, acts, logps, adv, returns, rng) -> dict:
    T = len(acts)
    mb = hyper.minibatch_size
    last = {}
    for _ in range(hyper.epochs):
        order = rng.permutation(T)
        for start in range(0, T, mb):
            idx = order[start : start + mb]
            a = adv[idx]
            if a.size > 1:
                a = (a - a.mean()) / (a.std() + 1e-8)
            batch = Minibatch(obs[idx], acts[idx], logps[idx], a, returns[idx])
            _, last, grad = ppo_loss(params, batch, hyper.clip, hyper.vf_coef, hyper.ent_coef)
            norm = np.linalg.norm(grad)
            if not np.isfinite(norm):
                raise ModelCorruptionError("non-finite gradient")
            if hyper.max_grad_norm is not None and norm > hyper.max_grad_norm:
                grad = grad * (hyper.max_grad_norm / norm)
            opt.step(params.flat, grad)
    return last
