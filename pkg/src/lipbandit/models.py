"""Benchmark environments: restart (age of information), a non-indexable
three-state arm, and deadline scheduling."""
from __future__ import annotations

import numpy as np

from .arm import ArmModel, BanditInstance, InputDomainError

# (p, w) per type for the four-type restart fixture, 25 arms each, budget 16
RESTART_TYPES = ((0.95, 0.9), (0.95, 0.2), (0.7, 0.95), (0.7, 0.2))
RESTART_COUNT = 25
RESTART_BUDGET = 16

DEADLINE_T_MAX = 12
DEADLINE_B_MAX = 9
DEADLINE_COSTS = (0.1, 0.3, 0.6, 0.8)


def make_restart_arm(p: float, w: float, x_max: int = 500, label: str | None = None) -> ArmModel:
    """Restart arm on ages 1..x_max; dense state k is age k + 1.

    The top age is absorbing under the passive action and under a failed probe.
    """
    if not (0 < p <= 1) or w <= 0 or x_max < 3:
        raise InputDomainError(f"need 0<p<=1, w>0, x_max>=3 (got p={p}, w={w}, x_max={x_max})")
    n = x_max
    k = np.zeros((2, n, n))
    nxt = np.minimum(np.arange(n) + 1, n - 1)
    k[0, np.arange(n), nxt] = 1.0
    k[1, np.arange(n), 0] += p
    k[1, np.arange(n), nxt] += 1.0 - p
    ages = np.arange(1, n + 1, dtype=float)
    r = np.column_stack([-w * ages, -w * ages])
    return ArmModel(
        kernel=k,
        reward=r,
        label=label if label is not None else f"restart(p={p},w={w})",
        state_names=tuple(range(1, n + 1)),
    )


def restart_instance(x_max: int = 500, count: int = RESTART_COUNT, budget: int = RESTART_BUDGET,
                     types=RESTART_TYPES) -> BanditInstance:
    arms = []
    for p, w in types:
        arm = make_restart_arm(p, w, x_max)
        arms.extend([arm] * count)
    return BanditInstance(arms=tuple(arms), budget=budget)


_P0 = ((0.005, 0.793, 0.202), (0.027, 0.558, 0.415), (0.736, 0.249, 0.015))
_P1 = ((0.718, 0.254, 0.028), (0.347, 0.097, 0.556), (0.015, 0.956, 0.029))
_R1 = (0.699, 0.362, 0.715)


def make_nonindexable_arm() -> ArmModel:
    return ArmModel(
        kernel=np.array([_P0, _P1]),
        reward=np.column_stack([np.zeros(3), _R1]),
        label="nonindexable",
        state_names=(1, 2, 3),
    )


# -- deadline scheduling --------------------------------------------------

def deadline_index(t: int, b: int) -> int:
    return t * (DEADLINE_B_MAX + 1) + b


def deadline_states():
    """All (T, B) pairs in packed order; (0, B>0) is never reached."""
    return [(t, b) for t in range(DEADLINE_T_MAX + 1) for b in range(DEADLINE_B_MAX + 1)]


def deadline_reachable(t: int, b: int) -> bool:
    return t > 0 or b == 0


def deadline_penalty(b) -> float:
    return 0.2 * b * b


def uniform_fresh_distribution() -> np.ndarray:
    """Uniform over the empty slot and every (T, B) with T, B >= 1."""
    q = np.zeros(len(deadline_states()))
    q[deadline_index(0, 0)] = 1.0
    for t in range(1, DEADLINE_T_MAX + 1):
        for b in range(1, DEADLINE_B_MAX + 1):
            q[deadline_index(t, b)] = 1.0
    return q / q.sum()


def make_deadline_arm(c: float, q=None, label: str | None = None) -> ArmModel:
    if not (0.0 <= c <= 1.0):
        raise InputDomainError(f"activation cost must lie in [0, 1], got {c}")
    states = deadline_states()
    n = len(states)
    q = uniform_fresh_distribution() if q is None else np.asarray(q, dtype=float)
    if q.shape != (n,) or np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
        raise InputDomainError("fresh-job distribution must be a probability vector over 130 states")
    k = np.zeros((2, n, n))
    r = np.zeros((n, 2))
    for t, b in states:
        i = deadline_index(t, b)
        for a in (0, 1):
            if t > 1:
                k[a, i, deadline_index(t - 1, max(b - a, 0))] = 1.0
            else:
                k[a, i] = q
            if b > 0 and t > 1:
                r[i, a] = (1.0 - c) * a
            elif b > 0 and t == 1:
                r[i, a] = (1.0 - c) * a - deadline_penalty(b - a)
    return ArmModel(kernel=k, reward=r, label=label if label is not None else f"deadline(c={c})",
                    state_names=tuple(states))


def deadline_whittle(t: int, b: int, c: float) -> float:
    """Closed-form Whittle index of the deadline arm, third branch as published."""
    if b == 0:
        return 0.0
    if 1 <= b <= t - 1:
        return 1.0 - c
    return deadline_penalty(b - t - 1) - deadline_penalty(b - t) + 1.0 - c


def deadline_whittle_table(c: float) -> np.ndarray:
    return np.array([deadline_whittle(t, b, c) for t, b in deadline_states()])


def deadline_instance(costs=(0.8,), per_cost: int = 5, budget: int = 2) -> BanditInstance:
    arms = []
    for c in costs:
        arm = make_deadline_arm(c)
        arms.extend([arm] * per_cost)
    return BanditInstance(arms=tuple(arms), budget=budget)
