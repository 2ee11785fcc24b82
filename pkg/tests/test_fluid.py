import numpy as np
import pytest

from lipbandit.arm import InputDomainError
from lipbandit.exact import optimal_lambda, rvi_q
from lipbandit.fluid import FluidModel, PopulationState, budget_for, fluid_fixed_point, optimality_gap
from lipbandit.models import make_nonindexable_arm, make_restart_arm


def _ni_model():
    arm = make_nonindexable_arm()
    sol = optimal_lambda([arm], 0.3)
    return arm, sol, FluidModel(arm, [1.0], rvi_q(arm, sol.lambda_star).gamma, 0.3)


def test_step_conserves_mass_and_budget():
    _, _, model = _ni_model()
    pop = PopulationState([np.array([0.2, 0.5, 0.3])])
    act, used = model.activation(pop)
    assert used == pytest.approx(0.3)
    nxt = model.step(pop)[0]
    assert nxt.total == pytest.approx(1.0, abs=1e-14)


def test_fixed_point_nonindexable_reaches_bound():
    _, sol, model = _ni_model()
    rep = fluid_fixed_point(model)
    assert rep.status == "UNIQUE"
    assert rep.reward == pytest.approx(sol.dual_value, abs=1e-6)


def test_model_errors():
    arm = make_nonindexable_arm()
    with pytest.raises(InputDomainError):
        FluidModel(arm, [1.0], np.zeros(3), 1.0)
    with pytest.raises(InputDomainError):
        FluidModel([arm, arm], [0.5, 0.6], [np.zeros(3)] * 2, 0.3)
    with pytest.raises(InputDomainError):
        FluidModel(arm, [1.0], np.zeros(4), 0.3)
    _, _, model = _ni_model()
    with pytest.raises(InputDomainError):
        fluid_fixed_point(model, starts=model.starts()[:2])


def test_budget_for():
    assert budget_for(20, 0.16) == 4
    assert budget_for(100, 0.16) == 17
    assert budget_for(10, 0.3) == 4


def test_gap_small():
    arm = make_nonindexable_arm()

    def solve(a):
        sol = optimal_lambda([arm], a)
        return sol.dual_value, {arm.label: rvi_q(arm, sol.lambda_star).gamma}

    rows = optimality_gap([arm], [1.0], 0.3, [10], 4000, [0, 1], solve)
    assert rows[0].budget == 4 and rows[0].stderr > 0
    assert rows[0].per_arm_reward <= rows[0].bound + 2 * rows[0].stderr
    with pytest.raises(InputDomainError):
        optimality_gap([arm, arm], [0.5, 0.5], 0.3, [11], 100, [0], solve)
