"""Finite-N simulation of top-M index policies."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .arm import ArmModel, BanditInstance, InputDomainError
from .exact import IndexTable

MOVING_WINDOW = 5000


def pack_arms(arms):
    """Stack arm types into padded cumulative-kernel and reward arrays."""
    s = max(a.num_states for a in arms)
    cum = np.zeros((len(arms), 2, s, s))
    rew = np.zeros((len(arms), s, 2))
    for t, a in enumerate(arms):
        n = a.num_states
        c = np.cumsum(a.kernel, axis=2)
        c[:, :, -1] = 1.0
        cum[t, :, :n, :n] = c
        cum[t, :, :n, n:] = 1.0
        cum[t, :, n:, :] = 1.0
        rew[t, :n] = a.reward
    return cum, rew


def moving_average(x, window: int = MOVING_WINDOW) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    c = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(1, x.size + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def top_m_select(values, m: int, rng: np.random.Generator) -> np.ndarray:
    """Activate the ``m`` arms with the largest values, ties broken uniformly."""
    values = np.asarray(values, dtype=float)
    n = values.size
    if not (0 < m < n):
        raise InputDomainError(f"need 0 < M < N, got M={m}, N={n}")
    keys = rng.random(n)
    order = np.lexsort((np.arange(n), -keys, -values))
    act = np.zeros(n, dtype=np.int64)
    act[order[:m]] = 1
    return act


@dataclass
class Policy:
    """Index policy: ``kind`` is LIP, WIP or RANDOM; ``tables`` maps arm
    label to a per-state index array (RANDOM needs none)."""

    kind: str
    tables: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = self.kind.upper()
        if self.kind not in ("LIP", "WIP", "RANDOM"):
            raise InputDomainError(f"unknown policy kind {self.kind!r}")
        self.tables = {k: np.asarray(v.values if isinstance(v, IndexTable) else v, dtype=float)
                       for k, v in self.tables.items()}

    def matrix(self, types) -> np.ndarray:
        s = max(a.num_states for a in types)
        out = np.zeros((len(types), s))
        if self.kind == "RANDOM":
            return out
        for t, a in enumerate(types):
            if a.label not in self.tables:
                raise InputDomainError(f"no index table for arm type {a.label!r}")
            v = self.tables[a.label]
            if v.shape != (a.num_states,) or not np.all(np.isfinite(v)):
                raise InputDomainError(f"index table for {a.label!r} must be finite with {a.num_states} entries")
            out[t, : a.num_states] = v
        return out


@dataclass
class SimStats:
    horizon: int
    seed: int
    average_reward: float
    reward: np.ndarray
    budget: np.ndarray
    activation_frequency: np.ndarray
    burn_in: int = 0
    backend: str = ""

    @property
    def moving_average(self) -> np.ndarray:
        return moving_average(self.reward)

    def per_arm_reward(self, n: int) -> float:
        return self.average_reward / n

    def batch_means(self, batches: int = 20) -> np.ndarray:
        r = self.reward[self.burn_in:]
        usable = (r.size // batches) * batches
        return r[:usable].reshape(batches, -1).mean(axis=1)


def simulate(instance: BanditInstance, policy: Policy, horizon: int, seed: int, init_states=None,
             burn_in: int = 0, backend: str | None = None) -> SimStats:
    """Run the N-arm system with exactly M arms active per step.

    Rewards exclude any multiplier term. ``average_reward`` is taken over the
    steps after ``burn_in``.
    """
    if horizon <= burn_in:
        raise InputDomainError("horizon must exceed burn_in")
    types, arm_type = instance.types()
    cum, rew = pack_arms(types)
    index = policy.matrix(types)
    n, m = instance.n, instance.budget
    states = np.zeros(n, dtype=np.int64) if init_states is None else np.array(init_states, dtype=np.int64)
    arm_type = arm_type.astype(np.int64)
    kern = kernels.get(backend)
    rng = np.random.default_rng(seed)
    reward = np.empty(horizon)
    budget = np.empty(horizon, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    step = kernels.chunk_steps(2 * n)
    done = 0
    while done < horizon:
        c = min(step, horizon - done)
        u = rng.random((c, 2 * n))
        kern.simulate_chunk(cum, rew, arm_type, index, states, m, u,
                            reward[done:done + c], budget[done:done + c], counts)
        done += c
    return SimStats(horizon=horizon, seed=seed, average_reward=float(reward[burn_in:].mean()),
                    reward=reward, budget=budget, activation_frequency=counts / horizon,
                    burn_in=burn_in, backend=kern.BACKEND)
