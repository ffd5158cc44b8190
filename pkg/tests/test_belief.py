import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from budgetpomdp.belief import BeliefState, correct, init_belief, predict
from budgetpomdp.errors import ParameterError
from budgetpomdp.model import ActionKind, ComponentSpec, DecayKernel
from budgetpomdp.sim import NO_OBSERVATION, Observation
from oracles import histogram_filter, total_variation

SPEC = ComponentSpec("b", 1.8, 30.0, 100, 2)
TOY = ComponentSpec("toy", 1.0, 1.0, 10, 1, max_condition=2)
TOY_KERNEL = DecayKernel([0.6, 0.3, 0.1])


def test_init():
    b = init_belief(SPEC, 1000)
    assert b.mean == 100 and b.variance == 0
    assert b.n_particles == 1000
    assert np.isclose(b.weights.sum(), 1.0)
    one = init_belief(SPEC, 1)
    assert one.n_particles == 1 and one.variance == 0
    with pytest.raises(ParameterError):
        init_belief(SPEC, 0)


def test_absorbed_particles_stay():
    b = BeliefState.point(0, 50)
    out = predict(b, ActionKind.DEGRADE, SPEC, np.random.default_rng(0))
    assert np.all(out.particles == 0)


def test_repair_resets():
    b = BeliefState.from_particles(np.arange(10))
    out = predict(b, ActionKind.REPAIR, SPEC, np.random.default_rng(0))
    assert out.mean == 100 and out.variance == 0 and out.n_particles == 10


def test_correct():
    b = BeliefState.from_particles(np.array([3, 50, 70, 99]))
    c = correct(b, Observation(37))
    assert c.mean == 37 and c.variance == 0 and c.n_particles == 4
    assert correct(b, NO_OBSERVATION) is b
    dead = correct(b, Observation(0))
    later = predict(dead, ActionKind.DEGRADE, SPEC, np.random.default_rng(1))
    assert later.mean == 0


def test_three_state_one_step():
    rng = np.random.default_rng(3)
    b = predict(BeliefState.point(2, 10_000), ActionKind.DEGRADE, TOY, rng, kernel=TOY_KERNEL)
    exact = histogram_filter(TOY_KERNEL.transition_matrix(), 2, 1)
    assert total_variation(b.histogram(2), exact) <= 0.05


@pytest.mark.parametrize("steps", [1, 5, 10])
def test_pushforward_agreement(steps):
    spec = ComponentSpec("ten", 1.5, 6.0, 10, 1, max_condition=9)
    rng = np.random.default_rng(steps)
    b = init_belief(spec, 10_000)
    for _ in range(steps):
        b = predict(b, ActionKind.DEGRADE, spec, rng)
    exact = histogram_filter(spec.kernel.transition_matrix(), 9, steps)
    assert total_variation(b.histogram(9), exact) <= 0.05


@given(st.lists(st.integers(0, 100), min_size=1, max_size=64), st.integers(0, 2**32 - 1), st.sampled_from(list(ActionKind)))
def test_conservation_and_bounds(parts, seed, action):
    b = BeliefState.from_particles(np.array(parts))
    out = predict(b, action, SPEC, np.random.default_rng(seed))
    assert out.n_particles == len(parts)
    assert out.particles.min() >= 0 and out.particles.max() <= 100
    assert out.variance >= 0
    assert np.isclose(out.mean, out.particles.mean()) and np.isclose(out.variance, out.particles.var())
    if action != ActionKind.REPAIR:
        assert np.all(np.sort(out.particles) <= np.sort(b.particles))


@given(st.integers(0, 100), st.integers(0, 2**32 - 1))
def test_collapse_after_inspect(truth, seed):
    rng = np.random.default_rng(seed)
    b = predict(init_belief(SPEC, 32), ActionKind.INSPECT, SPEC, rng)
    c = correct(b, Observation(truth))
    assert c.mean == truth and c.variance == 0


def test_particles_read_only():
    b = init_belief(SPEC, 4)
    with pytest.raises(ValueError):
        b.particles[0] = 3
