import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from budgetpomdp.agent.policies import HeuristicPolicy, OracleComparator
from budgetpomdp.errors import ContractViolation, ParameterError
from budgetpomdp.model import ActionKind, ComponentSpec, expected_unrepaired_lifetime
from budgetpomdp.sim import (
    ComponentEnv,
    EnvState,
    FixedActionPolicy,
    episode_streams,
    run_episode,
    trajectory_is_monotone,
    write_episode_csv,
)

SPEC = ComponentSpec("s", 2.0, 30.0, 80, 2)


class RandomPolicy:
    name = "random"

    def start(self, spec, budget, horizon):
        return lambda view, rng: ActionKind(int(rng.integers(3)))


class TestStep:
    def test_absorbing(self):
        env = ComponentEnv(SPEC, 1000, 10)
        for action in ActionKind:
            for u in (0.0, 0.5, 0.999):
                nxt, _ = env.step(EnvState(0, 0, 0, 1000), action, u)
                assert nxt.condition == 0

    def test_repair_restores(self):
        env = ComponentEnv(SPEC, 1000, 10)
        nxt, obs = env.step(EnvState(50, 0, 3, 1000), ActionKind.REPAIR, 0.99)
        assert nxt.condition == 100 and nxt.accrued_cost == 80 and nxt.step == 4
        assert not obs.exact

    def test_inspect_observes_and_degrades(self):
        env = ComponentEnv(SPEC, 1000, 10)
        nxt, obs = env.step(EnvState(50, 5, 0, 1000), ActionKind.INSPECT, 0.9)
        assert obs.exact and obs.condition == nxt.condition <= 50
        assert nxt.accrued_cost == 7

    def test_degrade_monotone_10k(self):
        env = ComponentEnv(SPEC, 0, 10)
        rng = np.random.default_rng(1)
        for u in rng.random(10_000):
            nxt, obs = env.step(EnvState(50, 0, 0, 0), ActionKind.DEGRADE, u)
            assert nxt.condition <= 50
            assert not obs.exact

    def test_past_horizon(self):
        env = ComponentEnv(SPEC, 0, 3)
        with pytest.raises(ContractViolation):
            env.step(EnvState(100, 0, 3, 0), ActionKind.DEGRADE, 0.5)

    @given(st.integers(0, 100), st.floats(0, 1, exclude_max=True), st.sampled_from([ActionKind.DEGRADE, ActionKind.INSPECT]))
    def test_monotone_property(self, cond, u, action):
        env = ComponentEnv(SPEC, 10, 5)
        nxt, _ = env.step(EnvState(cond, 0, 0, 10), action, u)
        assert 0 <= nxt.condition <= cond

    def test_monotone_sweep_vectorized(self):
        # 10^5 sampled transitions from every starting condition
        rng = np.random.default_rng(2)
        start = rng.integers(0, 101, 100_000)
        out = SPEC.kernel.sample(start, rng.random(100_000))
        assert np.all(out <= start) and np.all(out >= 0)
        assert np.all(out[start == 0] == 0)

    def test_guard(self):
        env = ComponentEnv(SPEC, 81, 10)
        assert env.guard(EnvState(50, 0, 0, 81), ActionKind.REPAIR) == ActionKind.REPAIR
        assert env.guard(EnvState(50, 2, 0, 81), ActionKind.REPAIR) == ActionKind.DEGRADE
        assert env.guard(EnvState(50, 80, 0, 81), ActionKind.INSPECT) == ActionKind.DEGRADE

    def test_bad_construction(self):
        with pytest.raises(ParameterError):
            ComponentEnv(SPEC, -1, 10)
        with pytest.raises(ParameterError):
            ComponentEnv(SPEC, 0, 0)


class TestRunEpisode:
    def test_zero_budget_coerces_everything(self):
        for action in ActionKind:
            rec = run_episode(SPEC, 0, FixedActionPolicy(action), 50, 3, n_particles=16)
            assert rec.repairs == rec.inspections == rec.total_cost == 0
            if action != ActionKind.DEGRADE:
                assert rec.coerced == rec.survival_time

    def test_cost_ledger_identity_and_budget(self):
        for seed in range(40):
            budget = 37 * seed
            rec = run_episode(SPEC, budget, RandomPolicy(), 60, seed, n_particles=16, record=True)
            assert rec.total_cost == rec.repairs * SPEC.repair_cost + rec.inspections * SPEC.inspect_cost
            assert rec.total_cost <= budget
            assert rec.survival_time <= 60
            assert trajectory_is_monotone(rec.trajectory)
            assert np.all(np.diff(rec.trajectory.costs) >= 0)

    def test_always_degrade_matches_lifetime(self):
        horizon = 10_000  # effectively uncapped
        lives = np.array([run_episode(SPEC, 0, FixedActionPolicy(), horizon, s, n_particles=1).survival_time for s in range(1000)])
        mean, var = expected_unrepaired_lifetime(SPEC, 20_000, 99)
        se = math.sqrt(lives.var(ddof=1) / lives.size + var / 20_000)
        assert abs(lives.mean() - mean) < 3 * se

    def test_oracle_with_generous_budget_survives(self):
        horizon = 100
        budget = horizon * SPEC.repair_cost
        pol = OracleComparator()
        full = sum(run_episode(SPEC, budget, pol, horizon, s, n_particles=8).survival_time == horizon for s in range(300))
        assert full / 300 >= 0.99

    def test_paired_streams(self):
        # the environment draws do not depend on the policy: with zero budget all policies coincide
        a = run_episode(SPEC, 0, FixedActionPolicy(ActionKind.INSPECT), 80, 5, n_particles=8, record=True)
        b = run_episode(SPEC, 0, HeuristicPolicy(), 80, 5, n_particles=8, record=True)
        assert np.array_equal(a.trajectory.conditions, b.trajectory.conditions)

    def test_deterministic(self):
        r1 = run_episode(SPEC, 500, HeuristicPolicy(), 100, 123, n_particles=64)
        r2 = run_episode(SPEC, 500, HeuristicPolicy(), 100, 123, n_particles=64)
        assert r1 == r2

    def test_streams_accept_seed_sequence(self):
        a, _ = episode_streams(np.random.SeedSequence([1, 2, 3]))
        b, _ = episode_streams(np.random.SeedSequence([1, 2, 3]))
        assert a.random() == b.random()

    def test_episode_csv(self, tmp_path):
        rec = run_episode(SPEC, 200, HeuristicPolicy(), 40, 1, n_particles=8)
        path = tmp_path / "ep.csv"
        write_episode_csv(path, [("s", 1, 200, "heuristic", rec)])
        rows = list(csv.DictReader(open(path)))
        assert rows[0]["survival_time"] == str(rec.survival_time)
        assert list(rows[0]) == ["component_id", "seed", "budget", "policy_name", "survival_time", "total_cost", "repairs", "inspections"]
