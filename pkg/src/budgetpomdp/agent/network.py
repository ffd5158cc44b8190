"""Two-head tanh MLP (policy logits + state value) with hand-written backprop.

The heads sit on separate towers so value-target scale never leaks into the
policy weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ModelCorruptionError, SchemaError

CHECKPOINT_SCHEMA = "budgetpomdp.policy/1"


def _layout(n_inputs: int, hidden: tuple[int, ...], n_actions: int) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter names and shapes: a policy tower ending in logits and a value tower ending in a scalar."""
    shapes = []
    for tower, n_out in (("pi", n_actions), ("v", 1)):
        prev = n_inputs
        for i, width in enumerate(hidden):
            shapes += [(f"{tower}W{i}", (prev, width)), (f"{tower}b{i}", (width,))]
            prev = width
        shapes += [(f"{tower}Wout", (prev, n_out)), (f"{tower}bout", (n_out,))]
    return shapes


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    q = u if u.shape == shape else vt
    return gain * q


@dataclass
class PolicyParameters:
    """Flat weight vector plus the layer layout needed to read it."""

    n_inputs: int
    n_actions: int
    hidden: tuple[int, ...]
    flat: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.flat = np.asarray(self.flat, dtype=np.float64)
        self._shapes = _layout(self.n_inputs, self.hidden, self.n_actions)
        size = sum(int(np.prod(s)) for _, s in self._shapes)
        if self.flat.size != size:
            raise ValueError(f"expected {size} weights, got {self.flat.size}")

    @classmethod
    def initialize(cls, n_inputs: int, n_actions: int, hidden=(64, 64), seed: int = 0) -> PolicyParameters:
        rng = np.random.default_rng(seed)
        chunks = []
        for name, shape in _layout(n_inputs, tuple(hidden), n_actions):
            if "b" in name:
                chunks.append(np.zeros(shape))
            elif name == "piWout":
                chunks.append(_orthogonal(rng, shape, 0.01))
            elif name == "vWout":
                chunks.append(_orthogonal(rng, shape, 1.0))
            else:
                chunks.append(_orthogonal(rng, shape, np.sqrt(2.0)))
        return cls(n_inputs, n_actions, tuple(hidden), np.concatenate([c.ravel() for c in chunks]))

    def views(self, vec: np.ndarray | None = None) -> dict[str, np.ndarray]:
        vec = self.flat if vec is None else vec
        out, i = {}, 0
        for name, shape in self._shapes:
            n = int(np.prod(shape))
            out[name] = vec[i : i + n].reshape(shape)
            i += n
        return out

    def copy(self) -> PolicyParameters:
        return PolicyParameters(self.n_inputs, self.n_actions, self.hidden, self.flat.copy(), dict(self.metadata))

    def _tower(self, p: dict, tower: str, x: np.ndarray):
        h = x
        acts = [h]
        for i in range(len(self.hidden)):
            h = np.tanh(h @ p[f"{tower}W{i}"] + p[f"{tower}b{i}"])
            acts.append(h)
        return h @ p[f"{tower}Wout"] + p[f"{tower}bout"], acts

    def forward(self, x: np.ndarray, keep: bool = False):
        """Return ``(logits, values)``; with ``keep`` also the activations for backprop."""
        p = self.views()
        x = np.atleast_2d(x)
        logits, pi_acts = self._tower(p, "pi", x)
        values, v_acts = self._tower(p, "v", x)
        values = values[:, 0]
        if keep:
            return logits, values, (pi_acts, v_acts)
        return logits, values

    def backward(self, acts, d_logits: np.ndarray, d_values: np.ndarray) -> np.ndarray:
        p = self.views()
        grads = {}
        for tower, tower_acts, d_out in (("pi", acts[0], d_logits), ("v", acts[1], d_values[:, None])):
            h = tower_acts[-1]
            grads[f"{tower}Wout"] = h.T @ d_out
            grads[f"{tower}bout"] = d_out.sum(axis=0)
            dh = d_out @ p[f"{tower}Wout"].T
            for i in range(len(self.hidden) - 1, -1, -1):
                dz = dh * (1.0 - tower_acts[i + 1] ** 2)
                grads[f"{tower}W{i}"] = tower_acts[i].T @ dz
                grads[f"{tower}b{i}"] = dz.sum(axis=0)
                if i:
                    dh = dz @ p[f"{tower}W{i}"].T
        return np.concatenate([grads[name].ravel() for name, _ in self._shapes])

    def to_dict(self) -> dict:
        return {
            "schema": CHECKPOINT_SCHEMA,
            "n_inputs": self.n_inputs,
            "n_actions": self.n_actions,
            "hidden": list(self.hidden),
            "weights": self.flat.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PolicyParameters:
        if data.get("schema") != CHECKPOINT_SCHEMA:
            raise SchemaError(f"expected checkpoint schema {CHECKPOINT_SCHEMA!r}, got {data.get('schema')!r}")
        return cls(data["n_inputs"], data["n_actions"], tuple(data["hidden"]), np.asarray(data["weights"]), data.get("metadata", {}))

    def save(self, path: str | Path) -> None:
        # float64 weights round-trip exactly through repr
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> PolicyParameters:
        return cls.from_dict(json.loads(Path(path).read_text()))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class Minibatch:
    obs: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def ppo_loss(
    params: PolicyParameters,
    batch: Minibatch,
    clip: float = 0.2,
    vf_coef: float = 0.5,
    ent_coef: float = 0.01,
    flat: np.ndarray | None = None,
    with_grad: bool = True,
):
    """Clipped-surrogate PPO loss (to minimize) and its gradient w.r.t. the flat weights.

    loss = -mean(min(r A, clip(r, 1-eps, 1+eps) A)) + vf_coef mean((V - R)^2) - ent_coef mean(H)
    """
    if flat is not None:
        params = PolicyParameters(params.n_inputs, params.n_actions, params.hidden, flat)
    logits, values, acts = params.forward(batch.obs, keep=True)
    if not np.all(np.isfinite(logits)) or not np.all(np.isfinite(values)):
        raise ModelCorruptionError("non-finite network output")
    n = len(batch.actions)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    idx = np.arange(n)
    logp = logp_all[idx, batch.actions]
    ratio = np.exp(logp - batch.old_logp)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    surrogate = np.minimum(unclipped, clipped)
    entropy = -(probs * logp_all).sum(axis=1)
    v_err = values - batch.returns
    loss = -surrogate.mean() + vf_coef * np.mean(v_err**2) - ent_coef * entropy.mean()
    stats = {
        "policy_loss": float(-surrogate.mean()),
        "value_loss": float(np.mean(v_err**2)),
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip)),
        "approx_kl": float(np.mean(batch.old_logp - logp)),
    }
    if not np.isfinite(loss):
        raise ModelCorruptionError(f"non-finite PPO loss: {stats}")
    if not with_grad:
        return float(loss), stats
    # gradient flows only where the unclipped branch attains the min
    active = unclipped <= clipped
    d_logp = np.where(active, -adv * ratio, 0.0) / n
    onehot = np.zeros_like(logits)
    onehot[idx, batch.actions] = 1.0
    d_logits = d_logp[:, None] * (onehot - probs)
    # dH/dz_j = -p_j (log p_j + H)
    d_logits += (ent_coef / n) * probs * (logp_all + entropy[:, None])
    d_values = 2.0 * vf_coef * v_err / n
    grad = params.backward(acts, d_logits, d_values)
    return float(loss), stats, grad


class Adam:
    def __init__(self, size: int, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, flat: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        flat -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
