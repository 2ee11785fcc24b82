import numpy as np
import pytest

from lipbandit import kernels
from lipbandit.arm import BanditInstance
from lipbandit.models import make_nonindexable_arm, restart_instance
from lipbandit.restart import RestartArmSpec, online_restart_learner
from lipbandit.simulate import Policy, simulate
from lipbandit.tabular import run_tabular

pytestmark = pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="compiled extension not built")


def _both(fn):
    return fn("python"), fn("cython")


def test_simulate_bit_identical():
    inst = restart_instance(x_max=60)
    types, _ = inst.types()
    tables = {a.label: np.linspace(0, 1, a.num_states) * (k + 1) for k, a in enumerate(types)}
    a, b = _both(lambda be: simulate(inst, Policy("LIP", tables), 300, 5, backend=be))
    assert np.array_equal(a.reward, b.reward) and np.array_equal(a.budget, b.budget)
    assert np.array_equal(a.activation_frequency, b.activation_frequency)


@pytest.mark.parametrize("alg", [1, 2])
def test_tabular_bit_identical(alg):
    inst = BanditInstance.homogeneous(make_nonindexable_arm(), 10, 3)
    a, b = _both(lambda be: run_tabular(inst, alg, 3000, 2, backend=be))
    for f in ("lam", "reward", "active", "virtual", "epsilon"):
        assert np.array_equal(getattr(a, f), getattr(b, f)), f
    assert np.array_equal(a.state.qtables, b.state.qtables)
    assert np.array_equal(a.state.visit_counts, b.state.visit_counts)


def test_restart_learner_bit_identical():
    specs = [RestartArmSpec(p, w, 500, 5) for p, w in ((0.95, 0.9), (0.7, 0.2))]
    a, b = _both(lambda be: online_restart_learner(specs, 3, 2000, 4, backend=be))
    assert np.array_equal(a.lam, b.lam) and np.array_equal(a.reward, b.reward)


def test_backend_env(monkeypatch):
    monkeypatch.setenv("LIPBANDIT_BACKEND", "python")
    assert kernels.default_backend_name() == "python"
    monkeypatch.setenv("LIPBANDIT_BACKEND", "fortran")
    with pytest.raises(RuntimeError):
        kernels.default_backend_name()
