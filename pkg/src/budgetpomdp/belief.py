"""Particle belief over the hidden condition index.

Inspections reveal the exact condition and every other action reveals nothing,
so particle weights stay uniform: an observation either collapses the cloud to
a point or leaves it untouched.  No resampling step exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import ActionKind, ComponentSpec, DecayKernel

DEFAULT_PARTICLES = 1024


@dataclass(frozen=True, eq=False)
class BeliefState:
    particles: np.ndarray
    mean: float
    variance: float

    @classmethod
    def from_particles(cls, particles: np.ndarray) -> BeliefState:
        particles = np.asarray(particles, dtype=np.int64)
        particles.setflags(write=False)
        return cls(particles, float(particles.mean()), float(particles.var()))

    @classmethod
    def point(cls, condition: int, n_particles: int) -> BeliefState:
        particles = np.full(n_particles, condition, dtype=np.int64)
        particles.setflags(write=False)
        return cls(particles, float(condition), 0.0)

    @property
    def n_particles(self) -> int:
        return self.particles.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_particles, 1.0 / self.n_particles)

    def histogram(self, max_condition: int) -> np.ndarray:
        return np.bincount(self.particles, minlength=max_condition + 1) / self.n_particles


def init_belief(spec: ComponentSpec, n_particles: int = DEFAULT_PARTICLES) -> BeliefState:
    if n_particles < 1:
        raise ParameterError("n_particles must be >= 1")
    return BeliefState.point(spec.max_condition, n_particles)


def predict(
    belief: BeliefState,
    action: ActionKind,
    spec: ComponentSpec,
    rng: np.random.Generator,
    kernel: DecayKernel | None = None,
) -> BeliefState:
    """Propagate every particle through one step of the environment's transition."""
    if action == ActionKind.REPAIR:
        # repairs are only simulated on live components, so every particle restarts at full
        return BeliefState.point(spec.max_condition, belief.n_particles)
    kernel = kernel if kernel is not None else spec.kernel
    moved = kernel.sample(belief.particles, rng.random(belief.n_particles))
    return BeliefState.from_particles(moved)


def correct(belief: BeliefState, obs) -> BeliefState:
    """Collapse onto an exact observation; a missing observation changes nothing."""
    if obs is None or obs.condition is None:
        return belief
    return BeliefState.point(obs.condition, belief.n_particles)
