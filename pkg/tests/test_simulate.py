import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipbandit.arm import BanditInstance, InputDomainError
from lipbandit.exact import optimal_lambda, rvi_q
from lipbandit.models import make_nonindexable_arm
from lipbandit.simulate import Policy, moving_average, simulate, top_m_select


@settings(max_examples=50)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.data())
def test_top_m_exact_count(vals, data):
    m = data.draw(st.integers(1, len(vals) - 1))
    act = top_m_select(vals, m, np.random.default_rng(0))
    assert act.sum() == m
    v = np.array(vals)
    assert v[act == 1].min() >= v[act == 0].max()


def test_top_m_ties_uniform():
    rng = np.random.default_rng(0)
    hits = np.zeros(4)
    for _ in range(4000):
        hits += top_m_select(np.zeros(4), 1, rng)
    assert np.allclose(hits / 4000, 0.25, atol=0.03)


def test_top_m_domain():
    with pytest.raises(InputDomainError):
        top_m_select([1.0, 2.0], 2, np.random.default_rng(0))


def test_moving_average_prefix():
    x = np.arange(10, dtype=float)
    ma = moving_average(x, window=4)
    assert ma[0] == 0 and ma[2] == pytest.approx(1.0)
    assert ma[9] == pytest.approx((6 + 7 + 8 + 9) / 4)


def test_policy_errors(nonindexable):
    with pytest.raises(InputDomainError):
        Policy("XYZ")
    inst = BanditInstance.homogeneous(nonindexable, 4, 1)
    with pytest.raises(InputDomainError):
        simulate(inst, Policy("LIP", {}), 10, 0)
    with pytest.raises(InputDomainError):
        simulate(inst, Policy("LIP", {"nonindexable": [0.0, np.nan, 1.0]}), 10, 0)
    with pytest.raises(InputDomainError):
        simulate(inst, Policy("RANDOM"), 10, 0, burn_in=10)


def test_budget_and_replay(nonindexable):
    inst = BanditInstance.homogeneous(nonindexable, 10, 3)
    tab = {"nonindexable": rvi_q(nonindexable, -0.694).gamma}
    a = simulate(inst, Policy("LIP", tab), 20000, 9)
    b = simulate(inst, Policy("LIP", tab), 20000, 9)
    assert np.all(a.budget == 3)
    assert np.array_equal(a.reward, b.reward)
    assert a.activation_frequency.sum() == pytest.approx(3.0)


def test_lip_beats_random_and_respects_bound(nonindexable):
    inst = BanditInstance.homogeneous(nonindexable, 10, 3)
    sol = optimal_lambda([nonindexable], 0.3)
    tab = {"nonindexable": rvi_q(nonindexable, sol.lambda_star).gamma}
    lip = simulate(inst, Policy("LIP", tab), 100_000, 0, burn_in=1000)
    rnd = simulate(inst, Policy("RANDOM"), 100_000, 0, burn_in=1000)
    assert lip.average_reward > rnd.average_reward
    bm = lip.batch_means()
    se = bm.std(ddof=1) / np.sqrt(bm.size)
    assert lip.average_reward <= 10 * sol.dual_value + 2 * se + 1e-9
