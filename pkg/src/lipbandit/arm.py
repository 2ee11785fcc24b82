"""Arms, bandit instances and the reward convention shared by every solver."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

ROW_TOL = 1e-12


class InputDomainError(ValueError):
    """Raised for out-of-range states, actions or malformed model data."""


class LambdaConvention(enum.Enum):
    # lambda * u is added to the reward of the active action
    ACTIVE_BONUS = "ACTIVE_BONUS"


CONVENTION = LambdaConvention.ACTIVE_BONUS
CONVENTION_HEADER = (
    "# convention: ACTIVE_BONUS (reward r(x,u) + lambda*u); "
    "whittle indices are reported as passive subsidies (= -lambda at indifference)"
)


@dataclass(frozen=True, eq=False)
class ArmModel:
    """Finite-state two-action arm.

    ``kernel[u, x, y]`` is p(y | x, u) and ``reward[x, u]`` is r(x, u).
    Arrays are copied and made read-only so instances can be shared freely.
    """

    kernel: np.ndarray
    reward: np.ndarray
    label: str = ""
    state_names: tuple = field(default=(), repr=False)

    def __post_init__(self):
        k = np.array(self.kernel, dtype=float)
        r = np.array(self.reward, dtype=float)
        if k.ndim != 3 or k.shape[0] != 2 or k.shape[1] != k.shape[2]:
            raise InputDomainError(f"kernel must have shape (2, S, S), got {k.shape}")
        if r.shape != (k.shape[1], 2):
            raise InputDomainError(f"reward must have shape ({k.shape[1]}, 2), got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise InputDomainError("rewards must be finite")
        k.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "reward", r)

    @property
    def num_states(self) -> int:
        return self.kernel.shape[1]

    def check(self, x, u=None):
        if not (0 <= x < self.num_states):
            raise InputDomainError(f"state {x} outside 0..{self.num_states - 1}")
        if u is not None and u not in (0, 1):
            raise InputDomainError(f"action must be 0 or 1, got {u}")

    def policy_kernel(self, activation) -> np.ndarray:
        """Transition matrix under per-state activation probabilities."""
        a = np.asarray(activation, dtype=float)[:, None]
        return (1.0 - a) * self.kernel[0] + a * self.kernel[1]

    def policy_reward(self, activation) -> np.ndarray:
        a = np.asarray(activation, dtype=float)
        return (1.0 - a) * self.reward[:, 0] + a * self.reward[:, 1]

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "states": self.num_states,
            "kernel0": self.kernel[0].tolist(),
            "kernel1": self.kernel[1].tolist(),
            "reward0": self.reward[:, 0].tolist(),
            "reward1": self.reward[:, 1].tolist(),
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict, validate: bool = True) -> "ArmModel":
        try:
            arm = cls(
                kernel=np.array([d["kernel0"], d["kernel1"]], dtype=float),
                reward=np.column_stack([d["reward0"], d["reward1"]]),
                label=str(d.get("label", "")),
            )
        except KeyError as e:
            raise InputDomainError(f"arm definition missing key {e}") from None
        if int(d["states"]) != arm.num_states:
            raise InputDomainError("'states' does not match kernel size")
        if validate:
            report = validate_arm(arm)
            if not report.ok:
                raise InputDomainError(f"invalid arm: {report.summary()}")
        return arm


def load_arm(path) -> ArmModel:
    return ArmModel.from_dict(json.loads(Path(path).read_text()))


def save_arm(arm: ArmModel, path) -> None:
    Path(path).write_text(json.dumps(arm.to_dict(), indent=1) + "\n")


@dataclass(frozen=True)
class BanditInstance:
    arms: tuple
    budget: int

    def __post_init__(self):
        arms = tuple(self.arms)
        object.__setattr__(self, "arms", arms)
        if not (0 < self.budget < len(arms)):
            raise InputDomainError(
                f"budget must satisfy 1 <= M < N, got M={self.budget}, N={len(arms)}"
            )

    @property
    def n(self) -> int:
        return len(self.arms)

    @property
    def alpha(self) -> float:
        return self.budget / len(self.arms)

    def types(self):
        """Group arms by label: returns (unique arms, per-arm type id)."""
        labels, reps, ids = {}, [], []
        for arm in self.arms:
            key = arm.label if arm.label else id(arm)
            if key not in labels:
                labels[key] = len(reps)
                reps.append(arm)
            ids.append(labels[key])
        return reps, np.array(ids, dtype=np.intp)

    @classmethod
    def homogeneous(cls, arm: ArmModel, n: int, budget: int) -> "BanditInstance":
        return cls(arms=(arm,) * n, budget=budget)


def subsidized_reward(arm: ArmModel, x: int, u: int, lam: float) -> float:
    arm.check(x, u)
    return float(arm.reward[x, u]) + lam * u


@dataclass
class ValidationReport:
    row_violations: list
    strongly_connected: bool
    unichain: bool
    transient_states: list

    @property
    def ok(self) -> bool:
        return not self.row_violations and self.unichain

    @property
    def irreducible(self) -> bool:
        return self.strongly_connected

    def summary(self) -> str:
        parts = []
        if self.row_violations:
            parts.append(f"{len(self.row_violations)} kernel row violation(s): {self.row_violations[:5]}")
        if not self.strongly_connected:
            parts.append(
                "not irreducible"
                + ("" if not self.unichain else f" (unichain; transient states {self.transient_states[:10]})")
            )
        if not self.unichain:
            parts.append("more than one closed class")
        return "; ".join(parts) or "valid, irreducible"


def validate_arm(arm: ArmModel) -> ValidationReport:
    """Check kernel rows and the communication structure of the union graph.

    Arms whose union graph has a single closed class but some transient
    states (the deadline model's unreachable corner) are accepted as
    unichain; ``irreducible`` is reported separately.
    """
    k = arm.kernel
    violations = []
    for u in (0, 1):
        sums = k[u].sum(axis=1)
        for x in range(arm.num_states):
            if np.any(k[u, x] < 0) or abs(sums[x] - 1.0) > ROW_TOL:
                violations.append((u, x, float(sums[x])))
    adj = csr_matrix((k[0] > 0) | (k[1] > 0))
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    strongly = ncomp == 1
    # closed classes: strong components with no edge leaving them
    closed = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        out = adj[members].indices
        if np.all(labels[out] == c):
            closed.append(c)
    unichain = len(closed) == 1
    transient = [] if strongly else [int(x) for x in np.flatnonzero(~np.isin(labels, closed))]
    return ValidationReport(violations, strongly, unichain, transient)


def sample_transition(arm: ArmModel, x: int, u: int, rng: np.random.Generator) -> int:
    arm.check(x, u)
    return int(rng.choice(arm.num_states, p=arm.kernel[u, x]))
