import numpy as np
import pytest

from levysee.coefficients import InitialLaw, builtin_system
from levysee.solver import SolverSettings
from levysee.stability import HypothesisConstants, coupled_decay, gamma_constant, gamma_proof

S = SolverSettings(n_steps=128)


def test_gamma_examples():
    assert gamma_constant(2.0, -1.0, -2.0, 0.0, 0.0) == pytest.approx(-6.0, abs=1e-15)
    # p=2: 2a + 2M + C + (2C + F)
    assert gamma_constant(2.0, -1.0, 0.0, 0.5, 0.5) == pytest.approx(-2.0 + 0.5 + 1.5, abs=1e-15)
    assert gamma_constant(4.0, -1.0, 0.0, 0.0, 0.0) == pytest.approx(-4.0, abs=1e-15)
    assert gamma_proof(4.0, 0.0, 0.0, 0.0) == 0.0


def test_gamma_rejects_bad_input():
    with pytest.raises(ValueError):
        gamma_constant(1.5, -1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        HypothesisConstants(2.0, -1.0, 0.0, -0.1, 0.0)


def test_identical_starts_stay_together():
    sys = builtin_system("cubic-dissipative", {"dim": 2})
    dc = coupled_decay(sys, [1.0, 0.5], [1.0, 0.5], 50, 0, S)
    assert np.all(dc.means == 0.0)


def test_linear_rate_is_exact_without_state_noise():
    sys = builtin_system("linear-ou-jump", {"jump_gain": 0.0, "drift_rate": 0.0, "dim": 2})
    dc = coupled_decay(sys, [1.0, 1.0], [0.0, 0.0], 20, 1, S)
    assert dc.fitted_rate == pytest.approx(-2.0, rel=1e-9)     # p * lambda, flow is exact
    assert np.all(dc.within_bound())


def test_initial_moment_scales_like_power():
    sys = builtin_system("saturating-drift", {"dim": 2, "p": 3.0})
    a = coupled_decay(sys, [0.0, 0.0], [0.5, 0.0], 10, 2, S)
    b = coupled_decay(sys, [0.0, 0.0], [1.0, 0.0], 10, 2, S)
    assert b.moment0 == pytest.approx(8.0 * a.moment0, rel=1e-14)


def test_random_laws_couple_through_shared_draw():
    sys = builtin_system("cubic-dissipative", {"dim": 2})
    x0 = InitialLaw([0.2, 0.1], 0.3)
    y0 = InitialLaw([0.7, 0.1], 0.3)
    dc = coupled_decay(sys, x0, y0, 40, 5, S)
    assert dc.moment0 == pytest.approx(0.25, rel=1e-14)
    with pytest.raises(ValueError):
        coupled_decay(sys, x0, InitialLaw([0.7, 0.1], 0.1), 4, 5, S)


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_cubic_decay_within_bound(p):
    sys = builtin_system("cubic-dissipative", {"p": p})
    dc = coupled_decay(sys, sys.initial.center, sys.initial.center + 0.5, 200, 3, S)
    assert dc.gamma < 0
    assert np.all(dc.within_bound())
    assert dc.fitted_rate <= dc.gamma + 4.0 * dc.fit_stderr
