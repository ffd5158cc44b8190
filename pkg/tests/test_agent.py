import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from budgetpomdp.agent.network import Adam, Minibatch, PolicyParameters, ppo_loss
from budgetpomdp.agent.policies import (
    N_FEATURES,
    AgentChoice,
    GuidedPPOPolicy,
    HeuristicPolicy,
    OracleComparator,
    RewardConfig,
    VanillaPPOPolicy,
    act,
    compose_action,
    heuristic_policy,
    inspect_gain,
    observe,
    reward,
)
from budgetpomdp.agent.ppo import PPOConfig, compute_gae, train_meta_ppo
from budgetpomdp.belief import BeliefState, init_belief
from budgetpomdp.errors import ModelCorruptionError, ParameterError, SchemaError
from budgetpomdp.model import ActionKind, ComponentSpec
from budgetpomdp.oracle import OracleCache, build_oracle
from budgetpomdp.sim import StepView, run_episode, trajectory_is_monotone
from oracles import numeric_gradient

SPEC = ComponentSpec("g", 2.0, 30.0, 100, 2)


def fixed_logits(logits):
    """A network whose policy head outputs ``logits`` for every input."""
    p = PolicyParameters.initialize(N_FEATURES, len(logits), seed=0)
    v = p.views()
    for name in v:
        if name.startswith("pi"):
            v[name][...] = 0.0
    v["pibout"][:] = logits
    return p


# ---------------------------------------------------------------------------
# reward


def test_reward_examples():
    cfg = RewardConfig()
    assert (cfg.r1, cfg.r2, cfg.alpha) == (-100.0, -10.0, 1e-3)
    assert reward(60, 60.0, 501, 500, 10, 100, cfg) == cfg.r1
    assert reward(60, 0.7, 0, 500, 10, 100, cfg) == cfg.r2
    assert reward(60, 60.0, 0, 500, 50, 100, cfg) == pytest.approx(0.5)


@given(
    st.integers(0, 100),
    st.floats(1.0, 100.0),
    st.integers(0, 1000),
    st.integers(0, 1000),
    st.integers(0, 100),
)
def test_reward_ordering(cond, mean, cost, budget, k):
    cfg = RewardConfig()
    r = reward(cond, mean, cost, budget, k, 100, cfg)
    if cost > budget:
        assert r == cfg.r1
    else:
        # alive rewards sit in [-alpha * max_condition, 1]
        assert -cfg.alpha * 100 - 1e-12 <= r <= 1.0
        assert cfg.r1 < cfg.r2 < r


def test_reward_config_invariants():
    with pytest.raises(ParameterError):
        RewardConfig(r1=-5.0, r2=-10.0)
    with pytest.raises(ParameterError):
        RewardConfig(alpha=0.0)
    with pytest.raises(ParameterError):
        RewardConfig(r1=-2.0, r2=-0.5).check_against(100)


# ---------------------------------------------------------------------------
# act and compose


def test_act_saturated_and_ties():
    x = np.zeros(N_FEATURES)
    p = fixed_logits([10.0, -10.0])
    rng = np.random.default_rng(0)
    draws = [act(p, x, "sample", rng) for _ in range(2000)]
    assert np.mean(np.array(draws) == AgentChoice.INSPECT) >= 0.999
    assert act(p, x, "greedy") == AgentChoice.INSPECT
    assert act(fixed_logits([0.0, 0.0]), x, "greedy") == AgentChoice.DEFER


def test_act_deterministic_given_seed():
    p = PolicyParameters.initialize(N_FEATURES, 2, seed=5)
    x = np.linspace(-1, 1, N_FEATURES)
    a = [act(p, x, "sample", np.random.default_rng(9)) for _ in range(3)]
    assert len(set(a)) == 1


def test_act_errors():
    p = fixed_logits([np.nan, 0.0])
    with pytest.raises(ModelCorruptionError):
        act(p, np.zeros(N_FEATURES), "greedy")
    with pytest.raises(ParameterError):
        act(fixed_logits([0.0, 0.0]), np.zeros(N_FEATURES), "sample")
    with pytest.raises(ParameterError):
        act(fixed_logits([0.0, 0.0]), np.zeros(N_FEATURES), "argmax")


def test_compose_action():
    table = build_oracle(SPEC, 500, 100)
    assert compose_action(AgentChoice.INSPECT, table, 0, 100.0, 0) == ActionKind.INSPECT
    assert compose_action(AgentChoice.DEFER, table, 0, 100.0, 0) == ActionKind.DEGRADE
    # a Repair cell of the table, reached by rounding the belief mean
    k, s, j = map(int, np.argwhere(table.action_table)[0])
    cost = table.budget - j * SPEC.repair_cost
    assert table.repairs_left(cost) == j
    assert compose_action(AgentChoice.DEFER, table, k, s + 0.4, cost) == ActionKind.REPAIR
    assert compose_action(AgentChoice.DEFER, table, k, s - 0.4, cost) == ActionKind.REPAIR


# ---------------------------------------------------------------------------
# observation and the inspect-gain feature


def test_observation_shape_and_normalization():
    b = BeliefState.from_particles(np.array([40, 60]))
    obs = observe(SPEC, 500, 100, 25, 100, b)
    x = obs.as_array()
    assert x.shape == (N_FEATURES,) and np.all(np.isfinite(x))
    assert obs.belief_mean == 0.5
    assert obs.belief_variance == pytest.approx(100 / 100)
    assert obs.cost_fraction == 0.2 and obs.step_fraction == 0.25
    assert obs.repairs_left == 0.4
    assert obs.inspect_gain == 0.0  # no oracle attached
    assert observe(SPEC, 0, 100, 0, 0, b).cost_fraction == 1.0


def test_inspect_gain_sentinels():
    table = build_oracle(SPEC, 300, 50)
    full = init_belief(SPEC, 64)
    assert inspect_gain(table, 3, 299, full) == -math.inf  # cannot pay for it
    assert inspect_gain(table, 49, 0, full) == -1.0  # last step
    k, s, j = map(int, np.argwhere(table.action_table[:-1])[0])
    cost = table.budget - j * SPEC.repair_cost
    assert inspect_gain(table, k, cost, BeliefState.point(s, 16)) == -1.0  # oracle repairs anyway


def test_inspect_gain_zero_for_known_state():
    # with a point belief inspection reveals nothing the oracle does not already use
    table = build_oracle(SPEC, 300, 50)
    g = inspect_gain(table, 10, 0, BeliefState.point(90, 64))
    assert g <= 1e-9


def test_inspect_gain_positive_under_uncertainty():
    table = build_oracle(SPEC, 500, 100)
    rng = np.random.default_rng(0)
    spread = BeliefState.from_particles(rng.integers(1, 60, 1024))
    assert inspect_gain(table, 30, 0, spread) > 0


# ---------------------------------------------------------------------------
# heuristic


def test_heuristic_defaults_and_threshold_zero():
    h = heuristic_policy()
    assert (h.interval, h.threshold) == (5, 15)
    never = HeuristicPolicy(5, 0)
    for s in range(20):
        assert run_episode(SPEC, 10_000, never, 100, s, n_particles=8).repairs == 0
    with pytest.raises(ParameterError):
        HeuristicPolicy(0, 15)


def test_heuristic_interval_one_tracks_truth():
    pol = HeuristicPolicy(1, 30)
    for seed in range(20):
        rec = run_episode(SPEC, 10_000, pol, 100, seed, n_particles=8, record=True)
        tr = rec.trajectory
        # every step inspects, so the belief entering step k equals the true condition
        assert np.all(tr.actions == ActionKind.INSPECT)
        assert rec.repairs == 0


def test_heuristic_interval_one_repair_timing():
    # interval 1 inspects every step, so Repair never fires; with interval 2 the repair
    # steps follow an inspection and must fire exactly when the observed condition < threshold
    pol = HeuristicPolicy(2, 30)
    for seed in range(30):
        rec = run_episode(SPEC, 10_000, pol, 100, seed, n_particles=8, record=True)
        tr = rec.trajectory
        for k in range(1, len(tr.actions), 2):
            assert (tr.actions[k] == ActionKind.REPAIR) == (tr.conditions[k] < 30)


# ---------------------------------------------------------------------------
# policies


def test_guided_policy_actions_and_budget():
    params = PolicyParameters.initialize(N_FEATURES, 2, seed=1)
    pol = GuidedPPOPolicy(params, OracleCache(), mode="sample")
    for seed in range(20):
        rec = run_episode(SPEC, 350, pol, 100, seed, n_particles=32, record=True)
        assert rec.total_cost <= 350 and trajectory_is_monotone(rec.trajectory)


def test_guided_head_only_inspect_or_defer():
    params = PolicyParameters.initialize(N_FEATURES, 2, seed=1)
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert act(params, rng.normal(size=N_FEATURES), "sample", rng) in (AgentChoice.INSPECT, AgentChoice.DEFER)
    with pytest.raises(ParameterError):
        GuidedPPOPolicy(PolicyParameters.initialize(N_FEATURES, 3))
    with pytest.raises(ParameterError):
        VanillaPPOPolicy(PolicyParameters.initialize(N_FEATURES, 2))


def test_oracle_comparator_reads_truth():
    decide = OracleComparator().start(SPEC, 500, 100)
    table = build_oracle(SPEC, 500, 100)
    k, s, j = map(int, np.argwhere(table.action_table)[0])
    cost = table.budget - j * SPEC.repair_cost
    view = StepView(SPEC, k, 100, 500, cost, init_belief(SPEC, 4), s)
    assert decide(view, None) == ActionKind.REPAIR


# ---------------------------------------------------------------------------
# network, loss and gradient


def random_batch(rng, n=64, n_actions=2):
    obs = rng.normal(size=(n, N_FEATURES))
    return Minibatch(
        obs,
        rng.integers(0, n_actions, n),
        np.log(rng.uniform(0.2, 0.8, n)),
        rng.normal(size=n),
        rng.normal(scale=3.0, size=n),
    )


@pytest.mark.parametrize("n_actions", [2, 3])
def test_gradient_matches_finite_differences(n_actions):
    rng = np.random.default_rng(n_actions)
    params = PolicyParameters.initialize(N_FEATURES, n_actions, seed=3)
    params.flat += rng.normal(scale=0.05, size=params.flat.size)  # move off the init symmetry
    batch = random_batch(rng, n_actions=n_actions)
    # the surrogate has kinks at ratio 1 +/- clip; keep every sample clear of them
    logits, _ = params.forward(batch.obs)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    ratio = np.exp(logp[np.arange(len(batch.actions)), batch.actions] - batch.old_logp)
    assert np.min(np.abs(np.abs(ratio - 1) - 0.2)) > 1e-3
    _, _, grad = ppo_loss(params, batch)
    idx = rng.choice(params.flat.size, 150, replace=False)
    fd = numeric_gradient(lambda w: ppo_loss(params, batch, flat=w, with_grad=False)[0], params.flat, idx)
    rel = np.abs(grad[idx] - fd) / np.maximum(np.maximum(np.abs(grad[idx]), np.abs(fd)), 1e-6)
    assert rel.max() <= 1e-4


def test_forward_deterministic_and_round_trip(tmp_path):
    p = PolicyParameters.initialize(N_FEATURES, 2, seed=4)
    x = np.random.default_rng(0).normal(size=(5, N_FEATURES))
    a = p.forward(x)
    assert all(np.array_equal(u, v) for u, v in zip(a, p.forward(x)))
    path = tmp_path / "ck.json"
    p.metadata = {"note": "x"}
    p.save(path)
    q = PolicyParameters.load(path)
    assert np.array_equal(p.flat, q.flat) and q.metadata == {"note": "x"}
    bad = p.to_dict()
    bad["schema"] = "other/0"
    with pytest.raises(SchemaError):
        PolicyParameters.from_dict(bad)


def test_separate_towers():
    p = PolicyParameters.initialize(N_FEATURES, 2, seed=0)
    rng = np.random.default_rng(1)
    batch = random_batch(rng)
    batch.advantages[:] = 0.0
    _, _, grad = ppo_loss(p, batch, ent_coef=0.0)
    # with zero advantages and no entropy bonus only the value tower learns
    v = p.views(grad)
    assert all(np.all(v[k] == 0) for k in v if k.startswith("pi"))


def test_gae_against_naive():
    rng = np.random.default_rng(0)
    n = 30
    r, v = rng.normal(size=n), rng.normal(size=n)
    d = (rng.random(n) < 0.2).astype(float)
    last, gamma, lam = 0.7, 0.95, 0.9
    adv, ret = compute_gae(r, v, d, last, gamma, lam)
    for t in range(n):
        total, w = 0.0, 1.0
        for u in range(t, n):
            nv = last if u == n - 1 else v[u + 1]
            delta = r[u] + gamma * nv * (1 - d[u]) - v[u]
            total += w * delta
            if d[u]:
                break
            w *= gamma * lam
        assert adv[t] == pytest.approx(total)
    assert np.allclose(ret, adv + v)


def test_adam_step_size():
    opt = Adam(3, lr=0.1)
    w = np.zeros(3)
    opt.step(w, np.array([1.0, -2.0, 0.0]))
    assert np.allclose(w, [-0.1, 0.1, 0.0], atol=1e-6)


# ---------------------------------------------------------------------------
# training


def test_ppo_defaults():
    c = PPOConfig()
    assert (c.learning_rate, c.minibatch_size, c.rollout_horizon, c.gamma) == (1e-4, 128, 4096, 0.95)
    assert (c.clip, c.gae_lambda, c.ent_coef, c.hidden) == (0.2, 0.95, 0.01, (64, 64))


SMALL = PPOConfig(rollout_horizon=256, minibatch_size=64, epochs=2, n_particles=32)


def test_training_bookkeeping():
    pairs = [(SPEC, 300)]
    with pytest.raises(ParameterError):
        train_meta_ppo(pairs, 0, SMALL)
    with pytest.raises(ParameterError):
        train_meta_ppo([], 256, SMALL)
    res = train_meta_ppo(pairs, 256, SMALL, seed=1)
    assert len(res.curve) == 1 and res.params.metadata["updates"] == 1


@pytest.mark.parametrize("guided", [True, False])
def test_training_deterministic(guided, tmp_path):
    pairs = [(SPEC, 300), (SPEC, 0)]
    a = train_meta_ppo(pairs, 512, SMALL, guided=guided, seed=7, horizon=40)
    b = train_meta_ppo(pairs, 512, SMALL, guided=guided, seed=7, horizon=40)
    assert np.array_equal(a.params.flat, b.params.flat)
    assert a.params.n_actions == (2 if guided else 3)
    path = tmp_path / "curve.csv"
    a.write_curve(path)
    assert path.read_text().splitlines()[0] == "step,mean_episode_reward,mean_survival"


def test_warm_start_shape_check():
    with pytest.raises(ParameterError):
        train_meta_ppo([(SPEC, 100)], 256, SMALL, guided=True, init_params=PolicyParameters.initialize(N_FEATURES, 3))


@pytest.mark.slow
def test_guided_single_spec_near_oracle():
    spec = ComponentSpec("easy", 2.5, 45.0, 100, 1)
    budget, horizon = 2000, 100
    cache = OracleCache()
    res = train_meta_ppo([(spec, budget)], 200_000, PPOConfig(), guided=True, seed=0, horizon=horizon, cache=cache)
    guided = GuidedPPOPolicy(res.params, cache)
    oracle = OracleComparator(cache)
    seeds = range(10_000, 10_200)  # held out from training streams
    g = np.mean([run_episode(spec, budget, guided, horizon, s).survival_time for s in seeds])
    o = np.mean([run_episode(spec, budget, oracle, horizon, s).survival_time for s in seeds])
    assert g >= 0.9 * o
