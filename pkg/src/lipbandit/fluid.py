"""Deterministic population (fluid) dynamics under a priority order, and the
finite-N optimality-gap curve."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .arm import ArmModel, BanditInstance, InputDomainError
from .simulate import Policy, simulate


@dataclass
class PopulationState:
    """Mass per (type, state); ``nu[t]`` is a row vector over type t's states."""

    nu: list

    @property
    def total(self) -> float:
        return float(sum(v.sum() for v in self.nu))

    def l1(self, other: "PopulationState") -> float:
        return float(sum(np.abs(a - b).sum() for a, b in zip(self.nu, other.nu)))


class FluidModel:
    """Fluid dynamics for arm types with fixed population weights.

    States of all types are pooled and ranked by index (descending); groups of
    equal index are activated whole until the next group would overshoot
    ``alpha``, and the boundary group gets the remaining mass split evenly.
    """

    def __init__(self, arms, weights, tables, alpha: float):
        if not (0.0 < alpha < 1.0):
            raise InputDomainError("alpha must lie in (0, 1)")
        if isinstance(arms, ArmModel):
            arms, weights, tables = [arms], [1.0], [tables]
        self.arms = list(arms)
        self.weights = np.asarray(weights, dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise InputDomainError("type weights must sum to 1")
        self.alpha = alpha
        self.k0 = [sp.csr_matrix(a.kernel[0]) for a in self.arms]
        self.k1 = [sp.csr_matrix(a.kernel[1]) for a in self.arms]
        vals, owner = [], []
        for t, (a, tab) in enumerate(zip(self.arms, tables)):
            tab = np.asarray(getattr(tab, "values", tab), dtype=float)
            if tab.shape != (a.num_states,):
                raise InputDomainError(f"index table for type {t} has wrong size")
            vals.append(tab)
            owner.extend((t, x) for x in range(a.num_states))
        flat = np.concatenate(vals)
        types = np.array([o[0] for o in owner])
        st = np.array([o[1] for o in owner])
        self._order = np.lexsort((st, types, -flat))
        vs = flat[self._order]
        # groups are runs of exactly equal index values along the ranking
        self._starts = np.flatnonzero(np.concatenate(([True], vs[1:] != vs[:-1])))
        self._group_of = np.repeat(np.arange(self._starts.size), np.diff(np.append(self._starts, vs.size)))
        self._offsets = np.cumsum([0] + [a.num_states for a in self.arms])
        self._k0 = sp.block_diag([k.T for k in self.k0], format="csr")
        self._k1 = sp.block_diag([k.T for k in self.k1], format="csr")

    def _flat(self, pop: PopulationState) -> np.ndarray:
        return np.concatenate(pop.nu)

    def _split(self, v: np.ndarray) -> list:
        return [v[self._offsets[t]:self._offsets[t + 1]] for t in range(len(self.arms))]

    def _activation_flat(self, v: np.ndarray):
        mass = np.add.reduceat(v[self._order], self._starts)
        before = np.concatenate(([0.0], np.cumsum(mass)[:-1]))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            frac = np.where(mass > 0.0, np.clip((self.alpha - before) / mass, 0.0, 1.0),
                            (before < self.alpha).astype(float))
        act = np.empty_like(v)
        act[self._order] = frac[self._group_of]
        return act, float(np.dot(act, v))

    def activation(self, pop: PopulationState):
        """Per-(type, state) active fraction and the activated mass."""
        act, used = self._activation_flat(self._flat(pop))
        return self._split(act), used

    def step(self, pop: PopulationState):
        v = self._flat(pop)
        act, used = self._activation_flat(v)
        new = self._k0 @ (v * (1.0 - act)) + self._k1 @ (v * act)
        return PopulationState(self._split(new)), used

    def reward(self, pop: PopulationState) -> float:
        act, _ = self.activation(pop)
        return float(sum(v @ ((1 - a) * arm.reward[:, 0] + a * arm.reward[:, 1])
                         for v, a, arm in zip(pop.nu, act, self.arms)))

    def starts(self):
        out = []
        for mode in ("first", "last", "uniform"):
            nu = []
            for a, wt in zip(self.arms, self.weights):
                v = np.zeros(a.num_states)
                if mode == "first":
                    v[0] = 1.0
                elif mode == "last":
                    v[-1] = 1.0
                else:
                    v[:] = 1.0 / a.num_states
                nu.append(wt * v)
            out.append(PopulationState(nu))
        return out


def fluid_step(model: FluidModel, pop: PopulationState) -> PopulationState:
    return model.step(pop)[0]


@dataclass
class FluidReport:
    status: str
    limits: list
    iterations: list
    trace: list = field(default_factory=list)
    fixed_point: PopulationState | None = None
    reward: float = float("nan")


def iterate_fluid(model: FluidModel, pop: PopulationState, tol: float = 1e-10, max_iter: int = 100_000,
                  record: bool = False):
    trace = []
    for it in range(1, max_iter + 1):
        new, used = model.step(pop)
        change = new.l1(pop)
        if record:
            trace.append((it, change, used))
        pop = new
        if change < tol:
            return pop, it, trace, True
    return pop, max_iter, trace, False


def fluid_fixed_point(model: FluidModel, tol: float = 1e-10, starts=None, max_iter: int = 100_000,
                      same_tol: float = 1e-8) -> FluidReport:
    starts = model.starts() if starts is None else starts
    if len(starts) < 3:
        raise InputDomainError("need at least 3 starting populations")
    limits, its, traces = [], [], []
    for k, s in enumerate(starts):
        pop, it, trace, ok = iterate_fluid(model, s, tol, max_iter, record=(k == 0))
        if not ok:
            return FluidReport("NO_CONVERGENCE", limits + [pop], its + [it], trace)
        limits.append(pop)
        its.append(it)
        traces.extend(trace)
    distinct = [limits[0]]
    for p in limits[1:]:
        if all(p.l1(q) > same_tol for q in distinct):
            distinct.append(p)
    status = "UNIQUE" if len(distinct) == 1 else "MULTIPLE"
    return FluidReport(status, distinct, its, traces, fixed_point=limits[0],
                       reward=model.reward(limits[0]))


# -- finite-N gap curve -----------------------------------------------------------

def budget_for(n: int, alpha: float) -> int:
    """Smallest integer strictly exceeding alpha * n."""
    return math.floor(alpha * n + 1e-12) + 1


@dataclass
class GapRow:
    n: int
    budget: int
    per_arm_reward: float
    bound: float
    gap: float
    stderr: float


def optimality_gap(arms, weights, alpha: float, sizes, horizon: int, seeds, solve, burn_in: int | None = None,
                   init_state: int = 0, batches: int = 20) -> list:
    """Per-arm LIP reward against the per-arm relaxed bound for each N.

    ``solve(alpha_n)`` must return ``(bound_per_arm, {label: index_table})``.
    """
    rows = []
    burn_in = horizon // 10 if burn_in is None else burn_in
    for n in sizes:
        counts = [round(n * w) for w in weights]
        if sum(counts) != n or any(abs(c - n * w) > 1e-9 for c, w in zip(counts, weights)):
            raise InputDomainError(f"N={n} does not split into the type weights {weights}")
        m = budget_for(n, alpha)
        bound, tables = solve(m / n)
        inst_arms = []
        for a, c in zip(arms, counts):
            inst_arms.extend([a] * c)
        inst = BanditInstance(tuple(inst_arms), m)
        means = []
        for seed in seeds:
            st = simulate(inst, Policy("LIP", tables), horizon, seed,
                          init_states=[init_state] * n, burn_in=burn_in)
            means.append(st.batch_means(batches) / n)
        means = np.concatenate(means)
        per_arm = float(means.mean())
        se = float(means.std(ddof=1) / math.sqrt(means.size))
        rows.append(GapRow(n, m, per_arm, bound, bound - per_arm, se))
    return rows
