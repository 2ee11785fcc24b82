"""Experiment configuration, presets, CSV output and the seed runner."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .arm import CONVENTION_HEADER, BanditInstance, InputDomainError, load_arm
from .exact import optimal_lambda, rvi_q, whittle_table
from .kernels import default_backend_name
from .models import (DEADLINE_COSTS, RESTART_BUDGET, RESTART_TYPES, deadline_whittle_table, make_deadline_arm,
                     make_nonindexable_arm, make_restart_arm)
from .simulate import Policy, moving_average, simulate

FORMAT_VERSION = 1
TASKS = ("restart-learner", "compare", "learn-tabular", "learn-dqn", "simulate", "fluid", "gap")
ENVIRONMENTS = ("restart", "nonindexable", "deadline", "arm")


class ConfigError(InputDomainError):
    pass


# -- CSV ----------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def emit_csv(records, schema, path=None, comment: str = CONVENTION_HEADER) -> str:
    """Write ``records`` (dicts or sequences) under the header ``schema``.

    The first line carries the multiplier convention as a ``#`` comment.
    Returns the text; writes it to ``path`` when given.
    """
    schema = list(schema)
    buf = io.StringIO()
    if comment:
        buf.write(comment.rstrip("\n") + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(schema)
    for rec in records:
        row = [rec[k] for k in schema] if isinstance(rec, dict) else list(rec)
        if len(row) != len(schema):
            raise InputDomainError(f"record has {len(row)} fields, schema has {len(schema)}")
        w.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_csv(path):
    """Inverse of ``emit_csv``: returns (schema, rows of strings)."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


# -- configuration -------------------------------------------------------------------

@dataclass
class DQNSettings:
    batch_size: int = 32
    lr: float = 1e-5
    buffer_size: int = 1000
    eps_decay: float = 0.9995
    eps_floor: float = 0.01
    sync_period: int = 200
    hidden: list = field(default_factory=lambda: [512, 256, 128])


@dataclass
class ExperimentConfig:
    task: str = "compare"
    environment: str = "nonindexable"
    preset: str | None = None
    version: int = FORMAT_VERSION
    n: int = 10
    m: int = 3
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    steps: int = 200_000
    horizon: int = 100_000
    burn_in: int | None = None
    algorithm: int = 1
    policies: list = field(default_factory=lambda: ["LIP", "WIP"])
    epsilon: float | None = None
    eps_decay: float = 0.99
    lam0: float = 0.0
    schedules: str = "default"
    x_max: int = 500
    costs: list = field(default_factory=lambda: [0.8])
    arm_file: str | None = None
    sizes: list = field(default_factory=lambda: [20, 100, 500])
    alpha: float | None = None
    trace_every: int = 1
    dqn: DQNSettings = field(default_factory=DQNSettings)
    description: str = ""

    def validate(self) -> "ExperimentConfig":
        if self.version != FORMAT_VERSION:
            raise ConfigError(f"config format version {self.version} does not match {FORMAT_VERSION}")
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.environment not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.environment!r}; expected one of {ENVIRONMENTS}")
        if not isinstance(self.seeds, list) or not self.seeds:
            raise ConfigError("seeds must be a nonempty list")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be nonnegative integers")
        if self.environment == "arm" and not self.arm_file:
            raise ConfigError("environment 'arm' needs arm_file")
        if self.environment == "deadline" and self.n % len(self.costs):
            raise ConfigError("n must be a multiple of the number of deadline cost groups")
        if self.environment == "restart" and self.n % len(RESTART_TYPES):
            raise ConfigError("n must be a multiple of the number of restart types")
        if not (0 < self.m < self.n):
            raise ConfigError("need 0 < m < n")
        if self.algorithm not in (1, 2):
            raise ConfigError("algorithm must be 1 or 2")
        for p in self.policies:
            if str(p).upper() not in ("LIP", "WIP", "RANDOM"):
                raise ConfigError(f"unknown policy {p!r}")
        if self.steps < 0 or self.horizon < 1 or self.trace_every < 1:
            raise ConfigError("steps, horizon and trace_every must be positive")
        if self.burn_in is not None and not (0 <= self.burn_in < self.horizon):
            raise ConfigError("burn_in must lie in [0, horizon)")
        return self

    @property
    def effective_burn_in(self) -> int:
        return self.horizon // 10 if self.burn_in is None else self.burn_in

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _strict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return data


def config_from_mapping(data: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    data = dict(_strict(ExperimentConfig, data or {}, "config"))
    cfg = dataclasses.replace(base) if base is not None else ExperimentConfig()
    if "dqn" in data:
        d = _strict(DQNSettings, data.pop("dqn") or {}, "config.dqn")
        cfg.dqn = dataclasses.replace(cfg.dqn, **d)
    for k, v in data.items():
        setattr(cfg, k, v)
    if isinstance(cfg.seeds, int):
        cfg.seeds = [cfg.seeds]
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    base = None
    if isinstance(data, dict) and data.get("preset"):
        base = preset_config(data["preset"])
    return config_from_mapping(data, base)


# -- presets ---------------------------------------------------------------------------

PRESETS = {
    "fig1-restart-subsidy": dict(
        task="restart-learner", environment="restart", n=100, m=RESTART_BUDGET, steps=100_000, epsilon=0.01,
        description="online multiplier learning with closed-form restart indices"),
    "fig2-restart-lip-vs-wip": dict(
        task="compare", environment="restart", n=100, m=RESTART_BUDGET, horizon=100_000,
        description="average reward of LIP and WIP on the four-type restart mix"),
    "fig3-nonindexable-alg1": dict(
        task="learn-tabular", environment="nonindexable", n=10, m=3, steps=200_000, algorithm=1,
        horizon=100_000, description="relaxed-budget tabular learner on the non-indexable arm, then LIP vs WIP"),
    "fig4-nonindexable-alg2": dict(
        task="learn-tabular", environment="nonindexable", n=10, m=3, steps=200_000, algorithm=2,
        horizon=100_000, description="hard-budget tabular learner on the non-indexable arm, then LIP vs WIP"),
    "fig5-deadline-homog": dict(
        task="learn-dqn", environment="deadline", n=5, m=2, costs=[0.8], steps=2000, horizon=100_000,
        description="network learner on homogeneous deadline arms, then LIP vs closed-form WIP"),
    "fig6-deadline-heter": dict(
        task="learn-dqn", environment="deadline", n=20, m=8, costs=list(DEADLINE_COSTS), steps=500,
        horizon=100_000, description="network learner on four deadline cost groups, then LIP vs WIP"),
    "gap-curve": dict(
        task="gap", environment="restart", n=100, m=RESTART_BUDGET, sizes=[20, 100, 500], horizon=20_000,
        description="finite-N optimality gap of LIP on the restart mix"),
    "fluid-check": dict(
        task="fluid", environment="restart", n=100, m=RESTART_BUDGET,
        description="fluid fixed point under the LIP order from three starts"),
}


def list_presets() -> dict:
    return {k: v["description"] for k, v in PRESETS.items()}


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; see list-presets")
    return config_from_mapping(dict(PRESETS[name], preset=name))


# -- environments and reference indices ------------------------------------------------

def restart_specs(cfg: ExperimentConfig):
    from .restart import RestartArmSpec
    count = cfg.n // len(RESTART_TYPES)
    return [RestartArmSpec(p, w, cfg.x_max, count) for p, w in RESTART_TYPES]


def build_instance(cfg: ExperimentConfig) -> BanditInstance:
    env = cfg.environment
    if env == "restart":
        arms = []
        for s in restart_specs(cfg):
            arms.extend([make_restart_arm(s.p, s.w, s.x_max)] * s.count)
    elif env == "nonindexable":
        arms = [make_nonindexable_arm()] * cfg.n
    elif env == "deadline":
        per = cfg.n // len(cfg.costs)
        arms = []
        for c in cfg.costs:
            arms.extend([make_deadline_arm(float(c))] * per)
    else:
        arms = [load_arm(cfg.arm_file)] * cfg.n
    return BanditInstance(tuple(arms), cfg.m)


def reference_tables(cfg: ExperimentConfig, instance: BanditInstance) -> dict:
    """Model-based multiplier, LIP and WIP tables per arm label."""
    types, _ = instance.types()
    out = {"LIP": {}, "WIP": {}, "RANDOM": {}}
    if cfg.environment == "restart":
        from .restart import restart_index, restart_lambda_star, restart_whittle
        specs = restart_specs(cfg)
        sol = restart_lambda_star(specs, instance.alpha)
        ages = np.arange(1, cfg.x_max + 1)
        for s, arm in zip(specs, types):
            out["LIP"][arm.label] = restart_index(s.p, s.w, sol.lambda_star, ages)
            out["WIP"][arm.label] = restart_whittle(s.p, s.w, ages)
        out["lambda_star"], out["bound"] = sol.lambda_star, sol.dual_value
        return out
    sol = optimal_lambda(list(instance.arms), instance.alpha)
    out["lambda_star"], out["bound"] = sol.lambda_star, sol.dual_value
    for arm in types:
        out["LIP"][arm.label] = rvi_q(arm, sol.lambda_star).gamma
        if cfg.environment == "deadline":
            c = float(arm.label.split("=")[1].rstrip(")"))
            out["WIP"][arm.label] = deadline_whittle_table(c)
        else:
            out["WIP"][arm.label] = whittle_table(arm).values
    return out


# -- per-seed runners --------------------------------------------------------------------

def _trace_rows(cfg, lam, reward, extra: dict):
    ma = moving_average(reward)
    idx = np.arange(0, lam.size, cfg.trace_every)
    cols = {k: np.asarray(v)[idx] for k, v in extra.items()}
    rows = []
    for j, i in enumerate(idx):
        row = {"n": int(i) + 1, "lambda": lam[i], "avg_reward": ma[i]}
        row.update({k: v[j] for k, v in cols.items()})
        rows.append(row)
    return rows


def _index_rows(types, tables: dict):
    rows = []
    for arm in types:
        for x, g in enumerate(tables[arm.label]):
            rows.append({"type": arm.label, "state": x, "gamma": g})
    return rows


def _evaluate(cfg, instance, tables: dict, seed: int, files: dict, summary: dict, prefix=""):
    for kind in cfg.policies:
        kind = str(kind).upper()
        st = simulate(instance, Policy(kind, tables.get(kind, {})), cfg.horizon, seed,
                      burn_in=cfg.effective_burn_in)
        summary[f"{prefix}{kind.lower()}_reward"] = st.average_reward
        summary[f"{prefix}{kind.lower()}_budget_violations"] = int(np.sum(st.budget != instance.budget))
        ma = st.moving_average
        idx = np.arange(0, cfg.horizon, cfg.trace_every)
        files[f"sim_{prefix}{kind.lower()}.csv"] = (
            ["n", "moving_avg_reward", "budget"],
            [(int(i) + 1, ma[i], int(st.budget[i])) for i in idx])


def run_seed(cfg: ExperimentConfig, seed: int):
    """Run one seed; returns ({filename: (schema, rows)}, summary dict)."""
    instance = build_instance(cfg)
    types, _ = instance.types()
    files, summary = {}, {}
    task = cfg.task
    if task == "restart-learner":
        from .restart import online_restart_learner, restart_lambda_star
        specs = restart_specs(cfg)
        eps = 0.01 if cfg.epsilon is None else cfg.epsilon
        tr = online_restart_learner(specs, cfg.m, cfg.steps, seed, epsilon=eps, lam0=cfg.lam0,
                                    beta_const=0.0 if cfg.schedules == "frozen" else None)
        files["trace.csv"] = (["n", "lambda", "avg_reward", "active"],
                              _trace_rows(cfg, tr.lam, tr.reward, {"active": tr.active}))
        summary["final_lambda"] = float(tr.lam[-1]) if cfg.steps else cfg.lam0
        summary["lambda_star"] = restart_lambda_star(specs, instance.alpha).lambda_star
        summary["avg_reward"] = float(tr.reward[cfg.steps // 2:].mean()) if cfg.steps else float("nan")
        return files, summary
    if task in ("compare", "simulate"):
        ref = reference_tables(cfg, instance)
        summary["lambda_star"], summary["dual_bound"] = ref["lambda_star"], ref["bound"]
        _evaluate(cfg, instance, ref, seed, files, summary)
        files["index.csv"] = (["type", "state", "gamma"], _index_rows(types, ref["LIP"]))
        return files, summary
    if task == "learn-tabular":
        from .tabular import builtin_schedules, run_tabular
        eps = 1.0 if cfg.epsilon is None else cfg.epsilon
        res = run_tabular(instance, cfg.algorithm, cfg.steps, seed, schedules=builtin_schedules(cfg.schedules),
                          epsilon=eps, eps_decay=cfg.eps_decay, lam0=cfg.lam0)
        files["trace.csv"] = (["n", "lambda", "avg_reward", "epsilon"],
                              _trace_rows(cfg, res.lam, res.reward, {"epsilon": res.epsilon}))
        learned = {a.label: res.state.index(a.label) for a in types}
        files["index.csv"] = (["type", "state", "gamma"], _index_rows(types, learned))
        summary["final_lambda"] = res.state.lam
        summary["budget_violations"] = int(np.sum(res.active != instance.budget))
        ref = reference_tables(cfg, instance)
        summary["lambda_star"] = ref["lambda_star"]
        tables = {"LIP": learned, "WIP": ref["WIP"], "RANDOM": {}}
        _evaluate(cfg, instance, tables, seed, files, summary)
        return files, summary
    if task == "learn-dqn":
        from .dqn import TrainConfig, run_dqn
        d = cfg.dqn
        tc = TrainConfig(batch_size=d.batch_size, lr=d.lr, buffer_size=d.buffer_size, eps_decay=d.eps_decay,
                         eps_floor=d.eps_floor, sync_period=d.sync_period, hidden=tuple(d.hidden),
                         lam0=cfg.lam0, epsilon=1.0 if cfg.epsilon is None else cfg.epsilon)
        res = run_dqn(instance, tc, cfg.steps, seed)
        files["trace.csv"] = (["n", "lambda", "avg_reward", "epsilon", "loss"],
                              _trace_rows(cfg, res.lam, res.reward, {"epsilon": res.epsilon, "loss": res.loss}))
        files["index.csv"] = (["type", "state", "gamma"], _index_rows(types, res.index))
        summary["final_lambda"] = float(res.lam[-1]) if cfg.steps else cfg.lam0
        ref = reference_tables(cfg, instance)
        summary["lambda_star"] = ref["lambda_star"]
        _evaluate(cfg, instance, {"LIP": res.index, "WIP": ref["WIP"], "RANDOM": {}}, seed, files, summary)
        _evaluate(dataclasses.replace(cfg, policies=["LIP"]), instance, ref, seed, files, summary, "exact_")
        return files, summary
    if task == "fluid":
        from .fluid import FluidModel, fluid_fixed_point
        ref = reference_tables(cfg, instance)
        counts = np.bincount(instance.types()[1])
        model = FluidModel(types, counts / counts.sum(), [ref["LIP"][a.label] for a in types], instance.alpha)
        rep = fluid_fixed_point(model)
        files["fluid.csv"] = (["iter", "l1_change", "activated_mass"], rep.trace)
        summary["unique"] = int(rep.status == "UNIQUE")
        summary["iterations"] = max(rep.iterations)
        summary["fluid_reward"] = rep.reward
        summary["dual_bound_per_arm"] = ref["bound"] / instance.n
        return files, summary
    if task == "gap":
        rows = _gap_rows(cfg, [seed])
        files["gap.csv"] = (["N", "per_arm_reward", "bound", "gap", "stderr"],
                            [(r.n, r.per_arm_reward, r.bound, r.gap, r.stderr) for r in rows])
        for r in rows:
            summary[f"gap_{r.n}"] = r.gap
        return files, summary
    raise ConfigError(f"unknown task {task!r}")


def _gap_rows(cfg: ExperimentConfig, seeds):
    from .fluid import optimality_gap
    alpha = cfg.alpha if cfg.alpha is not None else cfg.m / cfg.n
    if cfg.environment == "restart":
        from .restart import restart_index, restart_lambda_star
        specs = [dataclasses.replace(s, count=1) for s in restart_specs(cfg)]
        arms = [make_restart_arm(s.p, s.w, s.x_max) for s in specs]
        weights = [1.0 / len(arms)] * len(arms)
        ages = np.arange(1, cfg.x_max + 1)

        def solve(a):
            sol = restart_lambda_star(specs, a)
            return sol.dual_value / len(specs), {arm.label: restart_index(s.p, s.w, sol.lambda_star, ages)
                                                 for s, arm in zip(specs, arms)}
    else:
        types, ids = build_instance(cfg).types()
        arms = list(types)
        counts = np.bincount(ids)
        weights = list(counts / counts.sum())

        def solve(a):
            pool = [arm for arm, c in zip(arms, counts) for _ in range(c)]
            sol = optimal_lambda(pool, a)
            return sol.dual_value / len(pool), {arm.label: rvi_q(arm, sol.lambda_star).gamma for arm in arms}
    return optimality_gap(arms, weights, alpha, cfg.sizes, cfg.horizon, seeds, solve,
                          burn_in=cfg.effective_burn_in)


# -- runner --------------------------------------------------------------------------------

def _seed_job(args):
    cfg_dict, seed = args
    cfg = config_from_mapping(cfg_dict)
    return seed, run_seed(cfg, seed)


def _manifest(cfg: ExperimentConfig) -> dict:
    return {
        "version": __version__,
        "format_version": FORMAT_VERSION,
        "convention": CONVENTION_HEADER.lstrip("# "),
        "backend": default_backend_name(),
        "config": cfg.to_dict(),
        "config_digest": cfg.digest(),
        "seeds": list(cfg.seeds),
    }


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1) -> Path:
    """Run every seed, write per-seed CSVs, a median summary and a manifest."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(_manifest(cfg), indent=1, sort_keys=True) + "\n")
    jobs = [(cfg.to_dict(), s) for s in cfg.seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as ex:
            results = dict(ex.map(_seed_job, jobs))
    else:
        results = dict(_seed_job(j) for j in jobs)
    summaries = {}
    for seed in cfg.seeds:
        files, summary = results[seed]
        for name, (schema, rows) in files.items():
            emit_csv(rows, schema, out / f"seed-{seed}" / name)
        emit_csv(sorted(summary.items()), ["metric", "value"], out / f"seed-{seed}" / "summary.csv")
        summaries[seed] = summary
    keys = sorted(set().union(*(s.keys() for s in summaries.values())))
    rows = []
    for k in keys:
        vals = [summaries[s][k] for s in cfg.seeds if k in summaries[s]]
        rows.append((k, float(np.median(vals)), len(vals)))
    emit_csv(rows, ["metric", "median", "seeds"], out / "summary.csv")
    return out


def summary_table(out_dir) -> dict:
    _, rows = read_csv(Path(out_dir) / "summary.csv")
    return {r[0]: float(r[1]) for r in rows}
