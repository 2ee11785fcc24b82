"""End-to-end acceptance checks at full scale.

Each test prints one PASS/FAIL line, and the lines are repeated in the
terminal summary. Several of these runs take minutes.
"""
import json
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipbandit.arm import BanditInstance
from lipbandit.cli import main
from lipbandit.dqn import TrainConfig, run_dqn
from lipbandit.exact import (dual_value, f_norm, indexability_check, lagrangian_index_table, optimal_lambda,
                             product_mdp_oracle, rvi_q)
from lipbandit.experiments import build_instance, preset_config, reference_tables
from lipbandit.fluid import FluidModel, fluid_fixed_point, optimality_gap
from lipbandit.models import (RESTART_TYPES, deadline_instance, make_deadline_arm, make_nonindexable_arm,
                              make_restart_arm)
from lipbandit.restart import (RestartArmSpec, continuous_threshold, optimal_gain, relative_values, restart_index,
                               restart_lambda_star)
from lipbandit.simulate import Policy, simulate
from lipbandit.tabular import run_alg1, run_alg2

SEEDS = (0, 1, 2)
LONG = 1_000_000


@pytest.fixture(scope="module")
def ni_arm():
    return make_nonindexable_arm()


@pytest.fixture(scope="module")
def ni_solution(ni_arm):
    return optimal_lambda([ni_arm], 0.3)


def test_criterion_01_restart_multiplier(tmp_path, verdict):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"types": [{"p": p, "w": w, "count": 25} for p, w in RESTART_TYPES],
                                "alpha": 0.16}))
    t0 = time.perf_counter()
    rc = main(["restart-index", str(spec), "--out", str(tmp_path / "out")])
    dt = time.perf_counter() - t0
    lam = json.loads((tmp_path / "out" / "result.json").read_text())["lambda_star"]
    ok = rc == 0 and -12.1 <= lam <= -11.1 and dt < 60
    verdict("criterion 1 restart multiplier", ok, f"lambda*={lam:.4f} runtime={dt:.1f}s")
    assert ok


def test_criterion_02_closed_form_index(verdict):
    t0 = time.perf_counter()
    specs = [RestartArmSpec(p, w, 500, 25) for p, w in RESTART_TYPES]
    lam = restart_lambda_star(specs, 0.16).lambda_star
    errs = []
    for p, w in RESTART_TYPES:
        num = lagrangian_index_table(rvi_q(make_restart_arm(p, w, 500), lam)).values[:30]
        errs.append(float(np.abs(num - restart_index(p, w, lam, np.arange(1, 31))).max()))
    dt = time.perf_counter() - t0
    ok = max(errs) < 1e-4 and dt < 120
    verdict("criterion 2 closed-form index", ok, f"max errors {[f'{e:.1e}' for e in errs]} runtime={dt:.1f}s")
    assert ok


def test_criterion_03_nonindexability(ni_arm, verdict):
    rep = indexability_check(ni_arm, np.round(np.arange(-1.0, 1.0 + 1e-9, 0.01), 10))
    ok = rep.verdict == "NON_INDEXABLE"
    verdict("criterion 3 non-indexability", ok, f"{rep.verdict} violation={rep.violation}")
    assert ok


def test_criterion_04_oracle(ni_arm, verdict):
    t0 = time.perf_counter()
    oracle = product_mdp_oracle(BanditInstance.homogeneous(ni_arm, 3, 1)).gain
    lam = optimal_lambda([ni_arm], 1 / 3).lambda_star
    tab = {ni_arm.label: rvi_q(ni_arm, lam).gamma}
    inst = BanditInstance.homogeneous(ni_arm, 3, 1)
    rewards = [simulate(inst, Policy("LIP", tab), LONG, s).average_reward for s in SEEDS]
    med = float(np.median(rewards))
    dt = time.perf_counter() - t0
    ok = med >= 0.95 * oracle and dt < 300
    verdict("criterion 4 oracle ratio", ok, f"LIP median={med:.5f} oracle={oracle:.5f} "
            f"ratio={med / oracle:.4f} runtime={dt:.1f}s")
    assert ok


def test_criterion_05_learner_consistency(ni_arm, ni_solution, verdict):
    inst = BanditInstance.homogeneous(ni_arm, 10, 3)
    lam_star = ni_solution.lambda_star
    q_star = rvi_q(ni_arm, lam_star).values
    a1 = [run_alg1(inst, 200_000, s) for s in SEEDS]
    a2 = [run_alg2(inst, 200_000, s) for s in SEEDS]
    lam1 = float(np.median([r.state.lam for r in a1]))
    lam2 = float(np.median([r.state.lam for r in a2]))
    qerr = float(np.median([np.abs(r.state.table(ni_arm.label) - q_star).max() for r in a1]))
    checks = (abs(lam1 - lam_star) <= 0.1, qerr < 0.1, abs(lam2 - lam1) <= 0.15)
    verdict("criterion 5 learner consistency", all(checks),
            f"alg1 lambda={lam1:.4f} (target {lam_star:.4f}) Q err={qerr:.4f} alg2 lambda={lam2:.4f} "
            f"checks={checks}")
    assert all(checks)


def test_criterion_06_hard_budget(ni_arm, ni_solution, verdict):
    inst = BanditInstance.homogeneous(ni_arm, 10, 3)
    viol = int(np.sum(run_alg2(inst, LONG, 0).active != 3))
    tabs = {"LIP": {ni_arm.label: rvi_q(ni_arm, ni_solution.lambda_star).gamma},
            "WIP": {ni_arm.label: np.array([0.0, -0.3, 0.05])}, "RANDOM": {}}
    for kind, tab in tabs.items():
        viol += int(np.sum(simulate(inst, Policy(kind, tab), LONG, 1).budget != 3))
    ok = viol == 0
    verdict("criterion 6 hard budget", ok, f"violations={viol} over 4 traces of {LONG} steps")
    assert ok


def test_criterion_07_deadline_closed_form(verdict):
    import csv
    from fractions import Fraction
    from pathlib import Path

    from lipbandit.models import deadline_whittle
    rows = list(csv.DictReader((Path(__file__).parent / "data" / "deadline_whittle_c08.csv").open()))
    bad = [r for r in rows
           if abs(deadline_whittle(int(r["T"]), int(r["B"]), 0.8) - float(Fraction(r["whittle"]))) > 1e-12]
    spots = [deadline_whittle(3, 0, 0.8), deadline_whittle(5, 2, 0.8), deadline_whittle(1, 3, 0.8)]
    ok = len(rows) == 130 and not bad and np.allclose(spots, [0.0, 0.2, -0.4], atol=1e-12)
    verdict("criterion 7 deadline closed form", ok, f"{len(rows)} states, {len(bad)} mismatches, spots={spots}")
    assert ok


def _parity(cfg):
    inst = build_instance(cfg)
    ref = reference_tables(cfg, inst)
    lip = simulate(inst, Policy("LIP", ref["LIP"]), LONG, 0, burn_in=LONG // 10).average_reward
    wip = simulate(inst, Policy("WIP", ref["WIP"]), LONG, 0, burn_in=LONG // 10).average_reward
    return lip, wip, abs(lip - wip) / abs(wip)


def test_criterion_08_lip_wip_parity(verdict):
    res = {name: _parity(preset_config(name)) for name in ("fig2-restart-lip-vs-wip", "fig5-deadline-homog")}
    ok = all(r[2] <= 0.05 for r in res.values())
    detail = "; ".join(f"{k}: LIP={v[0]:.4f} WIP={v[1]:.4f} rel={v[2]:.3%}" for k, v in res.items())
    verdict("criterion 8 LIP/WIP parity", ok, detail)
    assert ok


def test_criterion_09_fluid_and_gap(verdict):
    cfg = preset_config("fluid-check")
    inst = build_instance(cfg)
    types, _ = inst.types()
    ref = reference_tables(cfg, inst)
    weights = [1 / len(types)] * len(types)
    model = FluidModel(types, weights, [ref["LIP"][a.label] for a in types], inst.alpha)
    rep = fluid_fixed_point(model)

    specs = [RestartArmSpec(p, w, cfg.x_max, 1) for p, w in RESTART_TYPES]

    def solve(alpha):
        sol = restart_lambda_star(specs, alpha)
        tabs = {a.label: restart_index(s.p, s.w, sol.lambda_star, np.arange(1, cfg.x_max + 1))
                for a, s in zip(types, specs)}
        return sol.dual_value / len(specs), tabs

    gcfg = preset_config("gap-curve")
    rows = optimality_gap(types, weights, inst.alpha, gcfg.sizes, gcfg.horizon, gcfg.seeds, solve)
    g20, g500 = rows[0], rows[-1]
    monotone = g500.gap <= g20.gap + 2 * np.hypot(g20.stderr, g500.stderr)
    weak = all(r.per_arm_reward <= r.bound + 2 * r.stderr for r in rows)
    ok = rep.status == "UNIQUE" and monotone and weak
    curve = ", ".join(f"N={r.n}: gap={r.gap:.4f}+-{r.stderr:.4f}" for r in rows)
    verdict("criterion 9 fluid and gap", ok, f"fluid={rep.status} {curve} weak duality={weak}")
    assert ok


def _v_branch_residual(p, w, lam):
    sol = optimal_gain(p, w, lam)
    v = relative_values(p, w, lam, sol, np.arange(1, 80))
    ages = np.arange(1, v.size)
    best = np.maximum(-w * ages + v[1:], -w * ages + lam + p * v[0] + (1 - p) * v[1:])
    return float(np.abs(best - sol.gain - v[:-1]).max() / max(1.0, np.abs(v).max()))


def test_criterion_10_properties(ni_arm, verdict):
    failures = []

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=12), st.floats(-1e3, 1e3))
    def shift(vals, c):
        q = np.array(vals)
        assert abs(f_norm(q + c) - f_norm(q) - c) <= 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-1.5, 0.5), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
    def convex(l1, d1, d2):
        vs = [dual_value([ni_arm], l, 0.3) for l in (l1, l1 + d1, l1 + d1 + d2)]
        assert vs[1] <= vs[0] + (vs[2] - vs[0]) * d1 / (d1 + d2) + 1e-9

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.05, 1.0), st.floats(0.05, 5.0), st.floats(-100.0, 0.0))
    def root(p, w, lam):
        x = continuous_threshold(p, w, lam)
        assert abs(p * w * x * x + 2 * w * (1 - p) * x + 2 * lam - w * (1 - p)) < 1e-9 * max(1.0, w * x * x)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.3, 1.0), st.floats(0.1, 2.0), st.floats(-30.0, -0.5))
    def bellman(p, w, lam):
        assert _v_branch_residual(p, w, lam) < 1e-8

    def rows():
        arms = [make_restart_arm(p, w, 500) for p, w in RESTART_TYPES]
        arms += [ni_arm, make_deadline_arm(0.8)]
        assert all(np.abs(a.kernel.sum(axis=2) - 1).max() <= 1e-12 for a in arms)

    def replay():
        inst = BanditInstance.homogeneous(ni_arm, 10, 3)
        a, b = run_alg2(inst, 20_000, 7), run_alg2(inst, 20_000, 7)
        assert np.array_equal(a.lam, b.lam) and np.array_equal(a.state.qtables, b.state.qtables)
        tab = {ni_arm.label: a.state.index(ni_arm.label)}
        s1 = simulate(inst, Policy("LIP", tab), 20_000, 7)
        s2 = simulate(inst, Policy("LIP", tab), 20_000, 7)
        assert np.array_equal(s1.reward, s2.reward)

    for name, fn in (("shift", shift), ("convexity", convex), ("root", root), ("bellman", bellman),
                     ("row sums", rows), ("replay", replay)):
        try:
            fn()
        except AssertionError as exc:
            failures.append(f"{name}: {exc}")
    ok = not failures
    verdict("criterion 10 property suites", ok, "; ".join(failures) or "6 suites")
    assert ok


DQN_STEPS = 20_000


def test_criterion_11_dqn(ni_arm, ni_solution, verdict):
    exact = rvi_q(ni_arm, ni_solution.lambda_star).gamma
    inst = BanditInstance.homogeneous(ni_arm, 10, 3)
    runs = [run_dqn(inst, TrainConfig(), DQN_STEPS, s) for s in SEEDS]
    med = np.median(np.stack([r.index[ni_arm.label] for r in runs]), axis=0)
    order_ok = list(np.argsort(-med)) == list(np.argsort(-exact))

    cfg = preset_config("fig5-deadline-homog")
    d = run_dqn(deadline_instance((0.8,), 5, 2), TrainConfig(), cfg.steps, 0)
    tail = d.lam[-max(1, cfg.steps // 10):]
    stable = float(tail.std()) < 0.1 * abs(float(tail.mean()))
    ok = order_ok and stable
    verdict("criterion 11 DQN surrogate", ok,
            f"median index={np.round(med, 4).tolist()} exact={np.round(exact, 4).tolist()} "
            f"final lambdas={[round(float(r.lam[-1]), 3) for r in runs]} "
            f"deadline tail mean={tail.mean():.4f} sd={tail.std():.4f}")
    assert ok
