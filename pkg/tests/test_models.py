import csv
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from lipbandit.arm import InputDomainError, validate_arm
from lipbandit.models import (deadline_index, deadline_instance, deadline_reachable, deadline_states,
                              deadline_whittle, deadline_whittle_table, make_deadline_arm, make_nonindexable_arm,
                              make_restart_arm, restart_instance, uniform_fresh_distribution)

GOLDEN = Path(__file__).parent / "data" / "deadline_whittle_c08.csv"


def test_deadline_whittle_golden():
    with GOLDEN.open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 130
    for row in rows:
        t, b = int(row["T"]), int(row["B"])
        assert deadline_whittle(t, b, 0.8) == pytest.approx(float(Fraction(row["whittle"])), abs=1e-12)


@pytest.mark.parametrize("t,b,val", [(3, 0, 0.0), (5, 2, 0.2), (1, 3, -0.4)])
def test_deadline_spot_values(t, b, val):
    assert deadline_whittle(t, b, 0.8) == pytest.approx(val, abs=1e-12)


def test_deadline_table_order():
    tab = deadline_whittle_table(0.8)
    assert tab.shape == (130,)
    assert tab[deadline_index(5, 2)] == pytest.approx(0.2)


def test_deadline_arm_structure():
    arm = make_deadline_arm(0.8)
    assert arm.num_states == 130
    assert np.abs(arm.kernel.sum(axis=2) - 1).max() <= 1e-12
    q = uniform_fresh_distribution()
    assert np.count_nonzero(q) == 109
    assert np.array_equal(arm.kernel[1, deadline_index(1, 4)], q)
    # finishing a unit at slack time earns 1-c
    assert arm.reward[deadline_index(5, 2), 1] == pytest.approx(0.2)
    # missing the deadline with B-u units left costs 0.2 (B-u)^2
    assert arm.reward[deadline_index(1, 3), 0] == pytest.approx(-1.8)
    assert arm.reward[deadline_index(1, 3), 1] == pytest.approx(0.2 - 0.8)
    assert sum(not deadline_reachable(t, b) for t, b in deadline_states()) == 9


def test_deadline_bad_cost():
    with pytest.raises(InputDomainError):
        make_deadline_arm(1.5)
    with pytest.raises(InputDomainError):
        make_deadline_arm(0.5, q=np.ones(3))


def test_restart_arm_shape():
    arm = make_restart_arm(0.7, 0.2, x_max=10)
    assert arm.kernel[0, 3, 4] == 1.0
    assert arm.kernel[1, 3, 0] == pytest.approx(0.7)
    assert arm.kernel[0, 9, 9] == 1.0
    assert arm.reward[2, 0] == pytest.approx(-0.6)
    assert validate_arm(arm).ok


def test_instances():
    inst = restart_instance(x_max=20)
    assert inst.n == 100 and inst.budget == 16
    assert len(inst.types()[0]) == 4
    d = deadline_instance((0.1, 0.3, 0.6, 0.8), per_cost=5, budget=8)
    assert d.n == 20 and len(d.types()[0]) == 4


def test_nonindexable_rows():
    arm = make_nonindexable_arm()
    assert np.abs(arm.kernel.sum(axis=2) - 1).max() <= 1e-12
    assert np.all(arm.reward[:, 0] == 0)
