"""Model-based ground truth: relative Q-value iteration, Lagrangian and
Whittle indices, the dual problem over the multiplier, stationary analysis
and a brute-force solver for the joint (product) MDP."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .arm import ArmModel, BanditInstance, InputDomainError, validate_arm

TIE_TOL = 1e-9
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual=float("nan")):
        super().__init__(f"{msg} (residual {residual:.3e})")
        self.residual = residual


class BracketError(ValueError):
    pass


@dataclass
class QTable:
    """Relative Q-values at a fixed multiplier.

    ``values[x, u]``; the table is the fixed point of
    Q = r_lambda - f(Q) + P max Q, so ``f_norm(values) == gain``.
    """

    values: np.ndarray
    lam: float
    gain: float
    residual: float
    iterations: int = 0

    @property
    def gamma(self) -> np.ndarray:
        return self.values[:, 1] - self.values[:, 0]


@dataclass
class IndexTable:
    values: np.ndarray
    source: str
    arm_label: str = ""
    lam: float | None = None


@dataclass
class DualSolution:
    lambda_star: float
    dual_value: float
    activation_fraction: float
    # (arm position, state, activation probability) restoring the budget exactly
    randomization: tuple | None = None
    attained_fraction: float | None = None
    per_arm_activation: list = field(default_factory=list)


def f_norm(q) -> float:
    q = np.asarray(q)
    return float(q.sum() / q.size)


# -- cached helpers keyed on arm identity -----------------------------------

_validated: dict = {}


def _require_valid(arm: ArmModel):
    key = id(arm)
    hit = _validated.get(key)
    if hit is not None and hit[0] is arm:
        return
    report = validate_arm(arm)
    if not report.ok:
        raise InputDomainError(f"arm {arm.label!r} failed validation: {report.summary()}")
    _validated[key] = (arm, True)


def _kernels(arm: ArmModel):
    """Sparse copies of the kernels when that pays off."""
    key = ("k", id(arm))
    hit = _validated.get(key)
    if hit is not None and hit[0] is arm:
        return hit[1]
    k = arm.kernel
    if arm.num_states > 40 and np.count_nonzero(k) < 0.2 * k.size:
        mats = (sp.csr_matrix(k[0]), sp.csr_matrix(k[1]))
    else:
        mats = (k[0], k[1])
    _validated[key] = (arm, mats)
    return mats


def rvi_q(arm: ArmModel, lam: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          q0=None) -> QTable:
    """Synchronous relative value iteration on Q at multiplier ``lam``.

    Stops when the sup-norm change drops below ``tol * max(1, |Q|_inf)``.
    """
    if tol <= 0:
        raise InputDomainError("tol must be positive")
    _require_valid(arm)
    k0, k1 = _kernels(arm)
    r = arm.reward + np.array([0.0, lam])
    q = np.zeros_like(r) if q0 is None else np.array(q0, dtype=float)
    res = math.inf
    for it in range(1, max_iter + 1):
        m = q.max(axis=1)
        f = q.sum() / q.size
        new = np.empty_like(q)
        new[:, 0] = r[:, 0] + k0 @ m - f
        new[:, 1] = r[:, 1] + k1 @ m - f
        res = float(np.abs(new - q).max())
        q = new
        if res < tol * max(1.0, float(np.abs(q).max())):
            return QTable(values=q, lam=lam, gain=f_norm(q), residual=res, iterations=it)
    raise ConvergenceError(f"rvi_q did not converge in {max_iter} sweeps", res)


def lagrangian_index_table(q: QTable, arm_label: str = "") -> IndexTable:
    return IndexTable(values=q.gamma.copy(), source=f"LAGRANGIAN({q.lam:.12g})",
                      arm_label=arm_label, lam=q.lam)


def greedy_activation(gamma, tie_tol: float = TIE_TOL) -> np.ndarray:
    """Deterministic greedy policy; ties go passive."""
    return (np.asarray(gamma) > tie_tol).astype(float)


def passive_set(arm: ArmModel, lam: float, tol: float = DEFAULT_TOL, tie_tol: float = TIE_TOL) -> frozenset:
    g = rvi_q(arm, lam, tol).gamma
    return frozenset(int(x) for x in np.flatnonzero(g <= tie_tol))


def boundary_states(q: QTable, tie_tol: float = TIE_TOL) -> list:
    return [int(x) for x in np.flatnonzero(np.abs(q.gamma) <= tie_tol)]


# -- Whittle index ------------------------------------------------------------

@dataclass
class WhittleResult:
    """Passive subsidy at which both actions are equally attractive.

    Under the active-bonus convention this is minus the multiplier root.
    ``sign_changes`` > 1 means the root is not unique (non-indexable state).
    """

    value: float
    sign_changes: int

    @property
    def multiple_roots(self) -> bool:
        return self.sign_changes > 1

    def __float__(self):
        return self.value


def default_bracket(arms) -> tuple:
    if isinstance(arms, ArmModel):
        arms = [arms]
    scale = max(float(np.abs(a.reward).max()) for a in arms)
    scale = max(scale, 1.0)
    return (-10.0 * scale, 10.0 * scale)


def whittle_index(arm: ArmModel, x: int, bracket=None, tol: float = 1e-8, grid: int = 201,
                  rvi_tol: float = DEFAULT_TOL) -> WhittleResult:
    arm.check(x)
    lo, hi = default_bracket(arm) if bracket is None else bracket

    def h(m):
        return rvi_q(arm, -m, rvi_tol).gamma[x]

    ms = np.linspace(lo, hi, grid)
    hs = np.array([h(m) for m in ms])
    signs = np.sign(hs)
    changes = np.flatnonzero(signs[:-1] * signs[1:] <= 0)
    # a zero sitting on two consecutive grid points counts once
    n_changes = int(np.sum(np.diff(np.concatenate(([0], (signs[:-1] * signs[1:] <= 0).astype(int)))) == 1))
    if changes.size == 0:
        raise BracketError(f"no sign change of Q(x,1)-Q(x,0) for state {x} in subsidy bracket [{lo}, {hi}]")
    a, b = ms[changes[0]], ms[changes[0] + 1]
    ha = hs[changes[0]]
    if ha == 0.0:
        return WhittleResult(float(a), n_changes)
    while b - a > tol:
        mid = 0.5 * (a + b)
        hm = h(mid)
        if hm == 0.0:
            a = b = mid
            break
        if np.sign(hm) == np.sign(ha):
            a, ha = mid, hm
        else:
            b = mid
    return WhittleResult(0.5 * (a + b), n_changes)


def whittle_table(arm: ArmModel, states=None, **kw) -> IndexTable:
    states = range(arm.num_states) if states is None else states
    vals = np.full(arm.num_states, np.nan)
    for x in states:
        vals[x] = whittle_index(arm, x, **kw).value
    return IndexTable(values=vals, source="WHITTLE", arm_label=arm.label)


@dataclass
class IndexabilityReport:
    indexable: bool
    lambdas: list
    passive_sets: list
    violation: tuple | None = None

    @property
    def verdict(self) -> str:
        return "INDEXABLE" if self.indexable else "NON_INDEXABLE"


def indexability_check(arm: ArmModel, lambda_grid, tol: float = DEFAULT_TOL) -> IndexabilityReport:
    """Passive sets must shrink (weakly) as the active bonus grows."""
    grid = [float(v) for v in lambda_grid]
    if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputDomainError("lambda grid must be strictly ascending with at least 3 points")
    sets, q = [], None
    for lam in grid:
        q = rvi_q(arm, lam, tol, q0=None if q is None else q.values)
        sets.append(frozenset(int(x) for x in np.flatnonzero(q.gamma <= TIE_TOL)))
    for i in range(len(grid) - 1):
        if not sets[i + 1] <= sets[i]:
            return IndexabilityReport(False, grid, sets, (grid[i], grid[i + 1]))
    return IndexabilityReport(True, grid, sets)


# -- stationary analysis ----------------------------------------------------------

def stationary_distribution(arm: ArmModel, activation) -> np.ndarray:
    """Solve pi = pi P, sum(pi) = 1 for the chain induced by ``activation``."""
    a = np.asarray(activation, dtype=float)
    if a.shape != (arm.num_states,) or np.any((a < 0) | (a > 1)):
        raise InputDomainError("activation must be a per-state probability vector")
    p = arm.policy_kernel(a)
    return _solve_stationary(p)


def _solve_stationary(p: np.ndarray) -> np.ndarray:
    n = p.shape[0]
    a = p.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f"induced chain is reducible: {e}") from None
    # one step of iterative refinement keeps the residual at round-off level
    pi = pi + np.linalg.solve(a, b - a @ pi)
    if np.any(pi < -1e-10) or not np.all(np.isfinite(pi)):
        raise ConvergenceError("induced chain has no unique stationary distribution")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return pi


def policy_gain(arm: ArmModel, activation, lam: float = 0.0) -> float:
    pi = stationary_distribution(arm, activation)
    a = np.asarray(activation, dtype=float)
    return float(pi @ (arm.policy_reward(a) + lam * a))


def activation_rate(arm: ArmModel, activation) -> float:
    return float(stationary_distribution(arm, activation) @ np.asarray(activation, dtype=float))


# -- dual problem -------------------------------------------------------------------

def _group(arms):
    """Unique arms (by identity) with multiplicities, preserving first-seen order."""
    order, counts, first = [], {}, {}
    for i, a in enumerate(arms):
        if id(a) not in counts:
            order.append(a)
            counts[id(a)] = 0
            first[id(a)] = i
        counts[id(a)] += 1
    return order, [counts[id(a)] for a in order], [first[id(a)] for a in order]


def dual_value(arms, lam: float, alpha: float, tol: float = DEFAULT_TOL, _cache=None) -> float:
    """max over policies of the Lagrangian at ``lam``: sum_i g_i(lam) - lam * alpha * N."""
    if isinstance(arms, ArmModel):
        arms = [arms]
    uniq, counts, _ = _group(arms)
    total = 0.0
    for arm, c in zip(uniq, counts):
        q = rvi_q(arm, lam, tol)
        if _cache is not None:
            _cache[(id(arm), lam)] = q
        total += c * q.gain
    return total - lam * alpha * len(arms)


def golden_section(fun, lo: float, hi: float, tol: float):
    """Minimise a unimodal function on [lo, hi] to bracket width ``tol``."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    x = 0.5 * (a + b)
    return x, fun(x)


def minimize_dual(fun, bracket, tol: float, widen: int = 3):
    """Golden-section minimisation with bracket widening when the minimiser
    lands on an edge. Returns (argmin, value)."""
    lo, hi = bracket
    if not lo < hi:
        raise BracketError(f"empty bracket [{lo}, {hi}]")
    for _ in range(widen + 1):
        x, fx = golden_section(fun, lo, hi, tol)
        width = hi - lo
        edge = 4 * tol
        at_lo = x - lo < edge and fun(lo - 0.25 * width) < fx - 1e-12 * max(1.0, abs(fx))
        at_hi = hi - x < edge and fun(hi + 0.25 * width) < fx - 1e-12 * max(1.0, abs(fx))
        if not (at_lo or at_hi):
            # prefer the multiplier 0 when the constraint is slack there
            if lo <= 0.0 <= hi and x != 0.0:
                f0 = fun(0.0)
                if f0 <= fx + 1e-9 * max(1.0, abs(fx)):
                    return 0.0, f0
            return x, fx
        lo, hi = lo - 2 * width, hi + 2 * width
    raise BracketError(f"dual minimiser not contained in widened bracket [{lo}, {hi}]")


def optimal_lambda(arms, alpha: float, bracket=None, tol: float = 1e-6, rvi_tol: float = DEFAULT_TOL) -> DualSolution:
    if isinstance(arms, BanditInstance):
        arms = list(arms.arms)
    if isinstance(arms, ArmModel):
        arms = [arms]
    bracket = default_bracket(arms) if bracket is None else bracket
    lam, val = minimize_dual(lambda l: dual_value(arms, l, alpha, rvi_tol), bracket, tol)
    return _dual_solution(arms, alpha, lam, val, max(10 * tol, 1e-7), rvi_tol)


def _dual_solution(arms, alpha, lam, val, delta, rvi_tol) -> DualSolution:
    uniq, counts, first = _group(arms)
    n = len(arms)
    at, lo_pol, hi_pol = [], [], []
    for arm in uniq:
        at.append(greedy_activation(rvi_q(arm, lam, rvi_tol).gamma))
        lo_pol.append(greedy_activation(rvi_q(arm, lam - delta, rvi_tol).gamma))
        hi_pol.append(greedy_activation(rvi_q(arm, lam + delta, rvi_tol).gamma))
    rate = [activation_rate(a, p) for a, p in zip(uniq, at)]
    frac = sum(c * r for c, r in zip(counts, rate)) / n
    sol = DualSolution(lambda_star=lam, dual_value=val, activation_fraction=frac,
                       attained_fraction=frac, per_arm_activation=rate)
    if abs(frac - alpha) <= 1e-9:
        return sol
    target = alpha * n
    total = sum(c * activation_rate(a, p) for a, c, p in zip(uniq, counts, lo_pol))
    for j, arm in enumerate(uniq):
        if total >= target - 1e-12:
            break
        r_lo = activation_rate(arm, lo_pol[j])
        r_hi = activation_rate(arm, hi_pol[j])
        if r_hi <= r_lo:
            continue
        k = min(counts[j], int((target - total) // (r_hi - r_lo)))
        total += k * (r_hi - r_lo)
        if k == counts[j] or total >= target - 1e-12:
            continue
        # one more copy moves state by state towards the high policy
        pol = lo_pol[j].copy()
        cur = r_lo
        for s in np.flatnonzero(lo_pol[j] != hi_pol[j]):
            trial = pol.copy()
            trial[s] = hi_pol[j][s]
            r_trial = activation_rate(arm, trial)
            if total - cur + r_trial <= target + 1e-12:
                pol, cur = trial, r_trial
                continue
            a, b = 0.0, 1.0
            for _ in range(100):
                th = 0.5 * (a + b)
                trial[s] = lo_pol[j][s] + th * (hi_pol[j][s] - lo_pol[j][s])
                if total - r_lo + activation_rate(arm, trial) < target:
                    a = th
                else:
                    b = th
            prob = float(trial[s])
            sol.randomization = (first[j] + k, int(s), prob)
            sol.attained_fraction = (total - r_lo + activation_rate(arm, trial)) / n
            return sol
        total += cur - r_lo
    sol.attained_fraction = total / n
    return sol


# -- product MDP oracle -----------------------------------------------------------

ORACLE_LIMIT = 10**7


@dataclass
class OracleResult:
    gain: float
    policy: dict
    iterations: int
    residual: float


def product_mdp_oracle(instance: BanditInstance, tol: float = 1e-10, max_iter: int = 1_000_000) -> OracleResult:
    """Relative value iteration on the joint chain with exactly M active arms."""
    arms, n, m = instance.arms, instance.n, instance.budget
    sizes = [a.num_states for a in arms]
    n_joint = int(np.prod(sizes))
    if n_joint * 2**n > ORACLE_LIMIT:
        raise InputDomainError(f"product MDP too large: {n_joint} states x 2^{n} actions > {ORACLE_LIMIT}")
    for a in arms:
        _require_valid(a)
    actions = list(itertools.combinations(range(n), m))
    joint_p, joint_r = [], []
    states = np.array(list(itertools.product(*[range(s) for s in sizes])))
    for act in actions:
        u = np.zeros(n, dtype=int)
        u[list(act)] = 1
        p = np.ones((1, 1))
        for i, arm in enumerate(arms):
            p = np.kron(p, arm.kernel[u[i]])
        joint_p.append(p)
        joint_r.append(sum(arms[i].reward[states[:, i], u[i]] for i in range(n)))
    h = np.zeros(n_joint)
    res = math.inf
    for it in range(1, max_iter + 1):
        vals = np.array([r + p @ h for p, r in zip(joint_p, joint_r)])
        th = vals.max(axis=0)
        g = th[0]
        new = th - g
        res = float(np.abs(new - h).max())
        h = new
        if res < tol * max(1.0, float(np.abs(h).max())):
            best = vals.argmax(axis=0)
            policy = {tuple(int(v) for v in s): actions[b] for s, b in zip(states, best)}
            return OracleResult(gain=float(g), policy=policy, iterations=it, residual=res)
    raise ConvergenceError("product MDP value iteration did not converge", res)
