"""Command-line entry point: ``lipbandit <subcommand> [options]``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
non-convergence, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .arm import CONVENTION_HEADER, InputDomainError, load_arm, save_arm
from .exact import BracketError, ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("lipbandit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputDomainError(message)


def _global(p):
    p.add_argument("--seed", type=int, action="append", help="seed (repeat for several)")
    p.add_argument("--out", help="output directory (or file for make-env)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for seeds")
    p.add_argument("--config", help="YAML config file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lipbandit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="relative Q-values at a multiplier, or the dual optimum")
    _global(p)
    p.add_argument("arm", help="arm JSON file")
    p.add_argument("--lam", type=float, default=0.0, help="active bonus")
    p.add_argument("--dual", action="store_true", help="solve for the optimal multiplier")
    p.add_argument("--alpha", type=float, help="budget fraction M/N for --dual")
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("whittle", help="numeric Whittle index per state")
    _global(p)
    p.add_argument("arm")
    p.add_argument("--states", type=int, nargs="*")
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--check", action="store_true", help="also run the indexability check on [-1, 1]")

    p = sub.add_parser("restart-index", help="closed-form restart multiplier and indices")
    _global(p)
    p.add_argument("spec", help="JSON: {types: [{p, w, count, x_max?}], alpha}")
    p.add_argument("--ages", type=int, default=30, help="report ages 1..AGES")

    for name, task, hlp in (("learn-tabular", "learn-tabular", "two-timescale tabular learner"),
                            ("learn-dqn", "learn-dqn", "network learner"),
                            ("simulate", "compare", "simulate index policies"),
                            ("fluid", "fluid", "fluid fixed point"),
                            ("gap", "gap", "finite-N optimality gap")):
        p = sub.add_parser(name, help=hlp)
        _global(p)
        p.set_defaults(task=task)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (YAML value)")

    p = sub.add_parser("run", help="run a named preset")
    _global(p)
    p.add_argument("preset")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")

    p = sub.add_parser("list-presets", help="show the preset catalog")
    _global(p)

    p = sub.add_parser("make-env", help="write a benchmark arm as JSON")
    _global(p)
    p.add_argument("kind", choices=["restart", "nonindexable", "deadline"])
    p.add_argument("--p", type=float, default=0.95)
    p.add_argument("--w", type=float, default=0.9)
    p.add_argument("--x-max", type=int, default=500)
    p.add_argument("--c", type=float, default=0.8)
    return parser


def _overrides(items):
    out = {}
    for it in items:
        if "=" not in it:
            raise InputDomainError(f"--set expects KEY=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def _experiment_config(args, preset=None, task=None):
    from . import experiments as ex
    data = {}
    if args.config:
        data = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        if not isinstance(data, dict):
            raise ex.ConfigError("config file must hold a mapping")
    data.update(_overrides(getattr(args, "set", [])))
    if args.seed:
        data["seeds"] = list(args.seed)
    preset = preset or data.get("preset")
    if preset:
        data["preset"] = preset
    base = ex.preset_config(preset) if preset else None
    if task:
        data["task"] = task
    return ex.config_from_mapping(data, base)


def _out_dir(args, default):
    return Path(args.out) if args.out else Path(default)


def _write_json(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=float) + "\n")


def cmd_solve(args):
    from .exact import optimal_lambda, rvi_q
    from .experiments import emit_csv
    arm = load_arm(args.arm)
    out = _out_dir(args, "solve-out")
    result = {"convention": CONVENTION_HEADER.lstrip("# "), "arm": arm.label}
    lam = args.lam
    if args.dual:
        if args.alpha is None:
            raise InputDomainError("--dual needs --alpha")
        sol = optimal_lambda([arm], args.alpha)
        lam = sol.lambda_star
        result.update(lambda_star=sol.lambda_star, dual_value=sol.dual_value,
                      activation_fraction=sol.activation_fraction, randomization=sol.randomization)
    q = rvi_q(arm, lam, args.tol)
    result.update(lam=lam, gain=q.gain, residual=q.residual, iterations=q.iterations)
    rows = [(x, q.values[x, 0], q.values[x, 1], q.gamma[x]) for x in range(arm.num_states)]
    emit_csv(rows, ["state", "q0", "q1", "gamma"], out / "qtable.csv")
    _write_json(result, out / "result.json")
    print(json.dumps(result, default=float))


def cmd_whittle(args):
    from .exact import default_bracket, indexability_check, whittle_index
    from .experiments import emit_csv
    arm = load_arm(args.arm)
    lo, hi = default_bracket(arm)
    bracket = (args.lo if args.lo is not None else lo, args.hi if args.hi is not None else hi)
    states = args.states if args.states else range(arm.num_states)
    rows = []
    for x in states:
        r = whittle_index(arm, x, bracket=bracket, grid=args.grid)
        rows.append((x, r.value, r.sign_changes))
    out = _out_dir(args, "whittle-out")
    emit_csv(rows, ["state", "whittle", "sign_changes"], out / "whittle.csv")
    if args.check:
        rep = indexability_check(arm, np.round(np.arange(-1.0, 1.0 + 1e-9, 0.01), 10))
        _write_json({"verdict": rep.verdict, "violation": rep.violation}, out / "indexability.json")
        print(rep.verdict)


def cmd_restart_index(args):
    from .experiments import emit_csv
    from .restart import RestartArmSpec, optimal_gain, restart_index, restart_lambda_star
    spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    if not isinstance(spec, dict) or "types" not in spec or "alpha" not in spec:
        raise InputDomainError("restart spec needs 'types' and 'alpha'")
    specs = []
    for t in spec["types"]:
        unknown = set(t) - {"p", "w", "count", "x_max"}
        if unknown:
            raise InputDomainError(f"unknown restart type key(s): {sorted(unknown)}")
        specs.append(RestartArmSpec(p=t["p"], w=t["w"], count=t.get("count", 1), x_max=t.get("x_max", 500)))
    sol = restart_lambda_star(specs, float(spec["alpha"]))
    ages = np.arange(1, args.ages + 1)
    rows, thresholds = [], []
    for k, s in enumerate(specs):
        thresholds.append(optimal_gain(s.p, s.w, sol.lambda_star).threshold)
        for x, g in zip(ages, restart_index(s.p, s.w, sol.lambda_star, ages)):
            rows.append((k, int(x), g))
    out = _out_dir(args, "restart-out")
    emit_csv(rows, ["type", "x", "gamma"], out / "index.csv")
    result = {"lambda_star": sol.lambda_star, "dual_value": sol.dual_value, "thresholds": thresholds,
              "activation_fraction": sol.activation_fraction, "randomization": sol.randomization}
    _write_json(result, out / "result.json")
    print(json.dumps(result, default=float))


def cmd_experiment(args, preset=None):
    from .experiments import run_experiment, summary_table
    cfg = _experiment_config(args, preset=preset, task=getattr(args, "task", None))
    name = preset or cfg.task
    out = run_experiment(cfg, _out_dir(args, f"runs/{name}"), threads=args.threads)
    for k, v in summary_table(out).items():
        print(f"{k}\t{v:.12g}")


def cmd_list_presets(args):
    from .experiments import list_presets
    for name, desc in list_presets().items():
        print(f"{name}\t{desc}")


def cmd_make_env(args):
    from .models import make_deadline_arm, make_nonindexable_arm, make_restart_arm
    if args.kind == "restart":
        arm = make_restart_arm(args.p, args.w, args.x_max)
    elif args.kind == "nonindexable":
        arm = make_nonindexable_arm()
    else:
        arm = make_deadline_arm(args.c)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_arm(arm, args.out)
    else:
        print(json.dumps(arm.to_dict()))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.threads < 1:
            raise InputDomainError("--threads must be at least 1")
        cmd = args.cmd
        if cmd == "solve":
            cmd_solve(args)
        elif cmd == "whittle":
            cmd_whittle(args)
        elif cmd == "restart-index":
            cmd_restart_index(args)
        elif cmd == "run":
            cmd_experiment(args, preset=args.preset)
        elif cmd == "list-presets":
            cmd_list_presets(args)
        elif cmd == "make-env":
            cmd_make_env(args)
        else:
            cmd_experiment(args)
    except (ConvergenceError, BracketError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (InputDomainError, yaml.YAMLError, json.JSONDecodeError, KeyError, TypeError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
