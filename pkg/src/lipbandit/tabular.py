"""Two-timescale tabular learners for the Lagrangian index.

Q-values follow average-reward (relative value iteration) Q-learning on the
fast scale; the multiplier follows dual descent on the slow scale. ``run_alg1``
lets the per-arm epsilon-greedy actions violate the budget; ``run_alg2`` keeps
exactly M arms active and uses virtual epsilon-greedy actions for the dual step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .arm import ArmModel, BanditInstance, InputDomainError
from .exact import f_norm
from .simulate import moving_average, pack_arms

EPS_FLOOR = 0.01
EPS_DECAY = 0.99


@dataclass(frozen=True)
class StepSchedules:
    """alpha(k) = 1 / ceil(k / alpha_c) on visit counts, and
    beta(n) = 1 / (ceil(n log n / beta_c) + 1) on the global step, or a
    constant beta when ``beta_const`` is set."""

    alpha_c: int = 500
    beta_c: float = 5000.0
    beta_const: float | None = None
    name: str = "default"

    def alpha(self, k: int) -> float:
        if k < 1:
            raise InputDomainError("visit counter starts at 1")
        return 1.0 / ((k + self.alpha_c - 1) // self.alpha_c)

    def beta(self, n: int) -> float:
        if self.beta_const is not None:
            return self.beta_const
        if n < 1:
            return 1.0
        return 1.0 / (math.ceil(n * math.log(n) / self.beta_c) + 1.0)


def builtin_schedules(name: str = "default") -> StepSchedules:
    if name == "default":
        return StepSchedules()
    if name == "frozen":
        return StepSchedules(beta_const=0.0, name="frozen")
    raise InputDomainError(f"unknown schedule family {name!r}")


def q_step(q: np.ndarray, x: int, u: int, y: int, reward: float, lam: float, step: float) -> float:
    """One relative Q-learning update of entry (x, u) in place; returns the new value."""
    if not (0.0 <= step <= 1.0):
        raise InputDomainError("step size must lie in [0, 1]")
    target = reward + lam * u + q[y].max() - f_norm(q)
    q[x, u] += step * (target - q[x, u])
    return q[x, u]


def dual_step(lam: float, beta: float, active: int, budget: int) -> float:
    return lam - beta * (active - budget)


def eps_greedy(qx, epsilon: float, rng: np.random.Generator) -> int:
    if not (0.0 <= epsilon <= 1.0):
        raise InputDomainError("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.random() < 0.5)
    d = qx[1] - qx[0]
    if d > 0:
        return 1
    if d < 0:
        return 0
    return int(rng.random() < 0.5)


@dataclass
class LearnerState:
    qtables: np.ndarray
    lam: float
    visit_counts: np.ndarray
    epsilon: float
    step: int
    table_labels: list = field(default_factory=list)
    table_states: list = field(default_factory=list)

    def table(self, label: str) -> np.ndarray:
        t = self.table_labels.index(label)
        return self.qtables[t, : self.table_states[t]]

    def index(self, label: str) -> np.ndarray:
        q = self.table(label)
        return q[:, 1] - q[:, 0]


@dataclass
class LearnResult:
    state: LearnerState
    lam: np.ndarray
    reward: np.ndarray
    active: np.ndarray
    virtual: np.ndarray
    epsilon: np.ndarray
    algorithm: int
    seed: int

    @property
    def moving_average_reward(self) -> np.ndarray:
        return moving_average(self.reward)


def _tables(instance: BanditInstance, share: bool):
    types, arm_type = instance.types()
    if share:
        labels = [t.label for t in types]
        sizes = [t.num_states for t in types]
        table_of_arm = arm_type.copy()
    else:
        labels = [f"{a.label}#{i}" for i, a in enumerate(instance.arms)]
        sizes = [a.num_states for a in instance.arms]
        table_of_arm = np.arange(instance.n)
    return types, arm_type, labels, sizes, table_of_arm


def run_tabular(instance: BanditInstance, algorithm: int, steps: int, seed: int,
                schedules: StepSchedules | None = None, epsilon: float = 1.0, eps_decay: float = EPS_DECAY,
                eps_floor: float = EPS_FLOOR, lam0: float = 0.0, share_tables: bool = True,
                init_states=None, backend: str | None = None) -> LearnResult:
    if algorithm not in (1, 2):
        raise InputDomainError("algorithm must be 1 or 2")
    if steps < 0:
        raise InputDomainError("steps must be nonnegative")
    if not (eps_floor <= epsilon <= 1.0):
        raise InputDomainError("epsilon must lie in [floor, 1]")
    sch = schedules or builtin_schedules()
    types, arm_type, labels, sizes, table_of_arm = _tables(instance, share_tables)
    cum, rew = pack_arms(types)
    s = max(sizes)
    q = np.zeros((len(labels), s, 2))
    visits = np.zeros((len(labels), s, 2), dtype=np.int64)
    n, m = instance.n, instance.budget
    states = np.zeros(n, dtype=np.int64) if init_states is None else np.array(init_states, dtype=np.int64)
    width = 3 * n if algorithm == 1 else 4 * n + 1
    kern = kernels.get(backend)
    rng = np.random.default_rng(seed)
    lam_tr = np.empty(steps)
    rew_tr = np.empty(steps)
    act_tr = np.empty(steps, dtype=np.int64)
    virt_tr = np.empty(steps, dtype=np.int64)
    eps_tr = np.empty(steps)
    lam, eps = float(lam0), float(epsilon)
    bconst = -1.0 if sch.beta_const is None else float(sch.beta_const)
    chunk = kernels.chunk_steps(width)
    done = 0
    while done < steps:
        c = min(chunk, steps - done)
        u = rng.random((c, width))
        sl = slice(done, done + c)
        lam, eps = kern.tabular_chunk(
            algorithm, cum, rew, arm_type.astype(np.int64), table_of_arm.astype(np.int64),
            np.array(sizes, dtype=np.int64), q, visits, states, m, done + 1, lam, eps,
            float(eps_decay), float(eps_floor), int(sch.alpha_c), float(sch.beta_c), bconst,
            u, lam_tr[sl], rew_tr[sl], act_tr[sl], virt_tr[sl], eps_tr[sl])
        done += c
    state = LearnerState(qtables=q, lam=lam, visit_counts=visits, epsilon=eps, step=steps,
                         table_labels=labels, table_states=sizes)
    return LearnResult(state, lam_tr, rew_tr, act_tr, virt_tr, eps_tr, algorithm, seed)


def run_alg1(instance, steps, seed, **kw) -> LearnResult:
    return run_tabular(instance, 1, steps, seed, **kw)


def run_alg2(instance, steps, seed, **kw) -> LearnResult:
    return run_tabular(instance, 2, steps, seed, **kw)
