"""Closed-form analysis of the restart (age-of-information) arm.

Ages start at 1. A probe succeeds with probability ``p`` and resets the age
to 1; the running reward is ``-w * age`` plus the active bonus ``lam``.
Threshold policies probe exactly when ``age >= x_bar``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .arm import InputDomainError
from .exact import DualSolution, minimize_dual

TIE_TOL = 1e-12


@dataclass(frozen=True)
class RestartArmSpec:
    p: float
    w: float
    x_max: int = 500
    count: int = 1

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise InputDomainError(f"p must lie in (0, 1], got {self.p}")
        if self.w <= 0.0:
            raise InputDomainError(f"w must be positive, got {self.w}")
        if self.x_max < 3:
            raise InputDomainError("x_max must be at least 3")

    @property
    def label(self) -> str:
        return f"restart(p={self.p},w={self.w})"


@dataclass
class RestartSolution:
    threshold: int
    gain: float
    lam: float
    tilde_x: float
    boundary_tie: bool
    other_threshold: int


def _check(p, w):
    if not (0.0 < p <= 1.0):
        raise InputDomainError(f"p must lie in (0, 1], got {p}")
    if w <= 0.0:
        raise InputDomainError(f"w must be positive, got {w}")


def continuous_threshold(p: float, w: float, lam: float) -> float:
    """Positive root of p w x^2 + 2 w (1-p) x + (2 lam - w (1-p)) = 0.

    Returns ``-inf`` when there is no real root: the gain then decreases in
    the threshold everywhere, so probing always is optimal.
    """
    _check(p, w)
    d = (1.0 - p) - 2.0 * lam * p / w
    if d < 0.0:
        return -math.inf
    return (math.sqrt(d) - (1.0 - p)) / p


def cycle_gain(p: float, w: float, lam: float, x_bar) -> float:
    """Average reward of the threshold policy, by the renewal-reward theorem."""
    if np.any(np.asarray(x_bar) < 1):
        raise InputDomainError("threshold must be >= 1")
    return (-w * (x_bar - 1) * x_bar / 2 - w * ((x_bar - 1) / p + 1 / p**2) + lam / p) / (x_bar - 1 + 1 / p)


def cycle_rate(p: float, x_bar) -> float:
    """Cycles (successful probes) per step: 1 / expected cycle length."""
    return 1.0 / (x_bar - 1 + 1.0 / p)


def activation_frequency(p: float, x_bar) -> float:
    """Long-run fraction of steps spent probing: (1/p) / (x_bar - 1 + 1/p)."""
    if np.any(np.asarray(x_bar) < 1):
        raise InputDomainError("threshold must be >= 1")
    return 1.0 / (p * (x_bar - 1) + 1.0)


def optimal_gain(p: float, w: float, lam: float) -> RestartSolution:
    xt = continuous_threshold(p, w, lam)
    if math.isinf(xt):
        lo, hi = 1, 2
    else:
        fl = min(math.floor(xt), 10**15)
        lo, hi = max(1, fl), max(1, fl + 1)
    g_lo, g_hi = cycle_gain(p, w, lam, lo), cycle_gain(p, w, lam, hi)
    tie = abs(g_lo - g_hi) <= TIE_TOL * max(1.0, abs(g_lo))
    if g_hi > g_lo and not tie:
        return RestartSolution(hi, g_hi, lam, xt, tie, lo)
    return RestartSolution(lo, g_lo, lam, xt, tie, hi)


def _as_specs(specs):
    out = []
    for s in specs:
        if isinstance(s, RestartArmSpec):
            out.append(s)
        elif isinstance(s, dict):
            out.append(RestartArmSpec(p=s["p"], w=s["w"], x_max=s.get("x_max", 500), count=s.get("count", 1)))
        else:
            out.append(RestartArmSpec(*s))
    return out


def restart_dual_value(specs, lam: float, alpha: float) -> float:
    specs = _as_specs(specs)
    n = sum(s.count for s in specs)
    return sum(s.count * optimal_gain(s.p, s.w, lam).gain for s in specs) - lam * alpha * n


def _mixed_rate(p, k, theta):
    """Probing rate when age k probes w.p. theta and older ages always probe."""
    rest = (1.0 - theta * p) / p
    return (theta + rest) / (k + rest)


def restart_lambda_star(specs, alpha: float, bracket=None, tol: float = 1e-9) -> DualSolution:
    specs = _as_specs(specs)
    n = sum(s.count for s in specs)
    if bracket is None:
        scale = max(s.w for s in specs) * max(s.x_max for s in specs)
        bracket = (-10.0 * scale, 10.0 * scale)
    lam, val = minimize_dual(lambda l: restart_dual_value(specs, l, alpha), bracket, tol)
    sols = [optimal_gain(s.p, s.w, lam) for s in specs]
    rates = [activation_frequency(s.p, sol.threshold) for s, sol in zip(specs, sols)]
    frac = sum(s.count * r for s, r in zip(specs, rates)) / n
    out = DualSolution(lambda_star=lam, dual_value=val, activation_fraction=frac,
                       attained_fraction=frac, per_arm_activation=rates)
    if abs(frac - alpha) <= 1e-12:
        return out
    # the type whose threshold switches at lam* carries the randomisation
    delta = max(10 * tol, 1e-9)
    lo_thr = [optimal_gain(s.p, s.w, lam - delta).threshold for s in specs]
    hi_thr = [optimal_gain(s.p, s.w, lam + delta).threshold for s in specs]
    total = sum(s.count * activation_frequency(s.p, t) for s, t in zip(specs, lo_thr))
    target = alpha * n
    first = 0
    for j, s in enumerate(specs):
        if hi_thr[j] < lo_thr[j] and total < target:
            r_lo = activation_frequency(s.p, lo_thr[j])
            r_hi = activation_frequency(s.p, hi_thr[j])
            k = min(s.count, int((target - total) // (r_hi - r_lo)))
            total += k * (r_hi - r_lo)
            if k < s.count and total < target:
                # one arm probes age hi_thr with probability theta
                a, b = 0.0, 1.0
                for _ in range(200):
                    th = 0.5 * (a + b)
                    if total - r_lo + _mixed_rate(s.p, hi_thr[j], th) < target:
                        a = th
                    else:
                        b = th
                th = 0.5 * (a + b)
                out.randomization = (first + k, hi_thr[j], th)
                out.attained_fraction = (total - r_lo + _mixed_rate(s.p, hi_thr[j], th)) / n
                return out
        first += s.count
    out.attained_fraction = total / n
    return out


# -- relative values and the index -------------------------------------------------

def _branch_constant(p: float, w: float, lam: float, x_bar: int) -> Fraction:
    """Coefficient of (1-p)^-x in the upper branch, from continuity at x_bar.

    Evaluated in exact rational arithmetic; for the gain of the threshold
    ``x_bar`` itself it is exactly zero.
    """
    P, W, L, X = Fraction(p), Fraction(w), Fraction(lam), Fraction(x_bar)
    g = (-W * (X - 1) * X / 2 - W * ((X - 1) / P + 1 / P**2) + L / P) / (X - 1 + 1 / P)
    v_bar = g * (X - 1) + W * (X - 1) * X / 2
    lin = -W / P * X + (P * (L - g) - W * (1 - P)) / P**2
    if P == 1:
        return Fraction(0) if v_bar == lin else Fraction(1)
    return (v_bar - lin) * (1 - P) ** int(X)


def relative_values(p: float, w: float, lam: float, solution: RestartSolution | None = None, ages=None):
    """Relative values V(age) with V(1) = 0 for the optimal threshold policy."""
    _check(p, w)
    sol = optimal_gain(p, w, lam) if solution is None else solution
    ages = np.arange(1, 501) if ages is None else np.asarray(ages)
    x = ages.astype(float)
    g, xb = sol.gain, sol.threshold
    c = _branch_constant(p, w, lam, xb)
    lower = g * (x - 1) + w * (x - 1) * x / 2
    upper = -(w / p) * x + (p * (lam - g) - w * (1 - p)) / p**2
    if c != 0:
        if p == 1.0:
            raise InputDomainError("inconsistent gain for p = 1")
        upper = upper + float(c) / (1.0 - p) ** x
    return np.where(x < xb, lower, upper)


def restart_index(p: float, w: float, lam_star: float, ages, solution: RestartSolution | None = None):
    """Lagrangian index lam* - p V(age + 1)."""
    ages = np.asarray(ages)
    if np.any(ages < 1):
        raise InputDomainError("ages start at 1")
    v = relative_values(p, w, lam_star, solution, ages + 1)
    return lam_star - p * v


def restart_whittle(p: float, w: float, ages):
    """Whittle index (passive subsidy) of age x: the subsidy at which
    thresholds x and x + 1 have equal gain."""
    _check(p, w)
    x = np.asarray(ages, dtype=float)
    a0 = cycle_gain(p, w, 0.0, x)
    a1 = cycle_gain(p, w, 0.0, x + 1)
    s0 = activation_frequency(p, x)
    s1 = activation_frequency(p, x + 1)
    lam_root = (a1 - a0) / (s0 - s1)
    return -lam_root


# -- online learner -------------------------------------------------------------

@dataclass
class RestartTrace:
    lam: np.ndarray
    reward: np.ndarray
    active: np.ndarray
    activation_frequency: np.ndarray
    arm_type: np.ndarray
    seed: int


def online_restart_learner(specs, budget: int, steps: int, seed: int, epsilon: float = 0.01,
                           lam0: float = 0.0, beta_c: float = 5000.0, beta_const: float | None = None,
                           backend: str | None = None) -> RestartTrace:
    """Closed-form indices with the multiplier learned by dual descent.

    ``beta_const`` replaces the default schedule by a constant step (0 freezes
    the multiplier).
    """
    specs = _as_specs(specs)
    p = np.array([s.p for s in specs])
    w = np.array([s.w for s in specs])
    arm_type = np.repeat(np.arange(len(specs)), [s.count for s in specs]).astype(np.int64)
    n = arm_type.size
    if not (0 < budget < n):
        raise InputDomainError("budget must satisfy 0 < M < N")
    ages = np.ones(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    kern = kernels.get(backend)
    lam_tr = np.empty(steps)
    rew = np.empty(steps)
    act = np.empty(steps, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    bconst = -1.0 if beta_const is None else float(beta_const)
    lam = float(lam0)
    chunk = kernels.chunk_steps(3 * n)
    done = 0
    while done < steps:
        c = min(chunk, steps - done)
        u = rng.random((c, 3 * n))
        lam = kern.restart_chunk(p, w, arm_type, ages, budget, done + 1, lam, float(epsilon), float(beta_c),
                                 bconst, u, lam_tr[done:done + c], rew[done:done + c], act[done:done + c], counts)
        done += c
    return RestartTrace(lam_tr, rew, act, counts / max(steps, 1), arm_type, seed)
