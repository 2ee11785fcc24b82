"""Neural-network learner for the Lagrangian index.

A small ReLU network maps an (optionally type-tagged) state to the two
action values. Transitions go to a FIFO replay buffer; every arm visit trains
the main network on one minibatch against a periodically synchronised copy,
and the multiplier follows the same dual descent as the tabular learners.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .arm import BanditInstance, InputDomainError
from .exact import ConvergenceError
from .simulate import moving_average, pack_arms

HIDDEN = (512, 256, 128)
GRID_LIMIT = 512


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-5
    buffer_size: int = 1000
    eps_decay: float = 0.9995
    eps_floor: float = 0.01
    epsilon: float = 1.0
    sync_period: int = 200
    hidden: tuple = HIDDEN
    beta_c: float = 5000.0
    lam0: float = 0.0
    threads: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise InputDomainError("need 1 <= batch_size <= buffer_size")
        if self.lr <= 0 or self.sync_period < 1:
            raise InputDomainError("learning rate and sync period must be positive")
        if not (0.0 < self.eps_decay <= 1.0) or not (0.0 <= self.eps_floor <= self.epsilon <= 1.0):
            raise InputDomainError("bad exploration settings")
        self.hidden = tuple(int(h) for h in self.hidden)


class Approximator(nn.Module):
    def __init__(self, in_dim: int, hidden=HIDDEN):
        super().__init__()
        layers, prev = [], in_dim
        for h in hidden:
            layers += [nn.Linear(prev, h), nn.ReLU()]
            prev = h
        layers.append(nn.Linear(prev, 2))
        self.net = nn.Sequential(*layers)
        self.in_dim = in_dim

    def forward(self, x):
        return self.net(x)

    def finite(self) -> bool:
        return all(bool(torch.isfinite(p).all()) for p in self.parameters())


class ReplayBuffer:
    """Ring buffer of (s, a, r, s', lam) with FIFO eviction."""

    def __init__(self, capacity: int, in_dim: int):
        if capacity < 1:
            raise InputDomainError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, in_dim), dtype=np.float32)
        self.s2 = np.zeros((capacity, in_dim), dtype=np.float32)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=np.float32)
        self.lam = np.zeros(capacity, dtype=np.float32)
        self.cursor = 0
        self.size = 0

    def push(self, s, a, r, s2, lam):
        k = self.cursor
        self.s[k], self.a[k], self.r[k], self.s2[k], self.lam[k] = s, a, r, s2, lam
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        if batch > self.size:
            raise InputDomainError("batch larger than buffer contents")
        idx = rng.choice(self.size, size=batch, replace=False)
        return (torch.from_numpy(self.s[idx]), torch.from_numpy(self.a[idx]), torch.from_numpy(self.r[idx]),
                torch.from_numpy(self.s2[idx]), torch.from_numpy(self.lam[idx]))

    def __len__(self):
        return self.size


def q_target(reward, action, lam, target_next, f_estimate):
    """r(s,a) + lam * a + max_v Q_target(s', v) - f.

    Works on floats or tensors; ``target_next`` has the two action values
    in its last dimension.
    """
    if isinstance(target_next, torch.Tensor):
        best = target_next.max(dim=-1).values
    else:
        best = np.max(target_next, axis=-1)
    return reward + lam * action + best - f_estimate


def train_batch(main: Approximator, target: Approximator, optimizer, batch, grid) -> float:
    s, a, r, s2, lam = batch
    k = s.shape[0]
    # one pass over the batch and the normalizer grid; the grid part is detached
    out = main(torch.cat((s, grid)))
    with torch.no_grad():
        f = out[k:].mean()
        y = q_target(r, a.to(r.dtype), lam, target(s2), f)
    pred = out[:k].gather(1, a.unsqueeze(1)).squeeze(1)
    loss = torch.mean((pred - y) ** 2)
    if not torch.isfinite(loss):
        raise ConvergenceError("non-finite training loss", float("nan"))
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss.item()


def sync_target(main: Approximator, target: Approximator) -> Approximator:
    if [p.shape for p in main.parameters()] != [p.shape for p in target.parameters()]:
        raise InputDomainError("main and target shapes differ")
    target.load_state_dict(main.state_dict())
    return target


class Encoder:
    """State features: x / |X| for one type; (type, x / |X|) otherwise."""

    def __init__(self, types):
        self.sizes = [a.num_states for a in types]
        self.hetero = len(types) > 1
        self.dim = 2 if self.hetero else 1

    def __call__(self, t: int, x: int) -> np.ndarray:
        v = x / self.sizes[t]
        return np.array([t, v] if self.hetero else [v], dtype=np.float32)

    def states(self, t: int) -> torch.Tensor:
        xs = np.arange(self.sizes[t])
        return torch.from_numpy(np.stack([self(t, x) for x in xs]))

    def grid(self) -> torch.Tensor:
        rows = []
        for t, s in enumerate(self.sizes):
            xs = np.arange(s) if s <= GRID_LIMIT else np.unique(np.linspace(0, s - 1, GRID_LIMIT).round().astype(int))
            rows.extend(self(t, x) for x in xs)
        return torch.from_numpy(np.stack(rows))


@dataclass
class DQNResult:
    lam: np.ndarray
    reward: np.ndarray
    active: np.ndarray
    epsilon: np.ndarray
    loss: np.ndarray
    index: dict
    seed: int
    model: Approximator | None = field(default=None, repr=False)

    @property
    def moving_average_reward(self) -> np.ndarray:
        return moving_average(self.reward)


def _beta(n: int, beta_c: float) -> float:
    if n < 2:
        return 1.0
    return 1.0 / (math.ceil(n * math.log(n) / beta_c) + 1.0)


def run_dqn(instance: BanditInstance, config: TrainConfig | None, steps: int, seed: int,
            init_states=None) -> DQNResult:
    cfg = config or TrainConfig()
    if steps < 0:
        raise InputDomainError("steps must be nonnegative")
    torch.manual_seed(seed)
    torch.set_num_threads(max(1, cfg.threads))
    rng = np.random.default_rng(seed)
    types, arm_type = instance.types()
    cum, rew = pack_arms(types)
    enc = Encoder(types)
    grid = enc.grid()
    main = Approximator(enc.dim, cfg.hidden)
    target = Approximator(enc.dim, cfg.hidden)
    sync_target(main, target)
    opt = torch.optim.Adam(main.parameters(), lr=cfg.lr, betas=(0.9, 0.999), eps=1e-8, fused=True)
    buf = ReplayBuffer(cfg.buffer_size, enc.dim)
    n, m = instance.n, instance.budget
    states = np.zeros(n, dtype=np.int64) if init_states is None else np.array(init_states, dtype=np.int64)
    lam, eps = float(cfg.lam0), float(cfg.epsilon)
    lam_tr, rew_tr, eps_tr = np.empty(steps), np.empty(steps), np.empty(steps)
    act_tr = np.empty(steps, dtype=np.int64)
    loss_tr = np.full(steps, np.nan)
    for step in range(1, steps + 1):
        active, total, losses = 0, 0.0, []
        for i in range(n):
            t, x = int(arm_type[i]), int(states[i])
            s = enc(t, x)
            if rng.random() < eps:
                a = int(rng.random() < 0.5)
            else:
                with torch.no_grad():
                    qv = main(torch.from_numpy(s)).numpy()
                d = qv[1] - qv[0]
                a = 1 if d > 0 else 0 if d < 0 else int(rng.random() < 0.5)
            y = int(np.searchsorted(cum[t, a, x], rng.random(), side="right"))
            r = rew[t, x, a]
            buf.push(s, a, r, enc(t, y), lam)
            if len(buf) >= cfg.batch_size:
                losses.append(train_batch(main, target, opt, buf.sample(cfg.batch_size, rng), grid))
            states[i] = y
            active += a
            total += r
        if not main.finite():
            raise ConvergenceError("non-finite network parameters", float("nan"))
        if step % cfg.sync_period == 0:
            sync_target(main, target)
        lam = lam - _beta(step, cfg.beta_c) * (active - m)
        k = step - 1
        lam_tr[k], rew_tr[k], act_tr[k], eps_tr[k] = lam, total, active, eps
        if losses:
            loss_tr[k] = float(np.mean(losses))
        eps = max(cfg.eps_floor, eps * cfg.eps_decay)
    with torch.no_grad():
        index = {}
        for t, a in enumerate(types):
            q = main(enc.states(t)).numpy().astype(float)
            index[a.label] = q[:, 1] - q[:, 0]
    return DQNResult(lam_tr, rew_tr, act_tr, eps_tr, loss_tr, index, seed, main)
