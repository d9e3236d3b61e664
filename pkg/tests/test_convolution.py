from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from levysee.convolution import (Decomposition, bichteler_jacod_check, burkholder_ratio, deterministic_convolution,
                                 ito_pth_residual, pth_power_gap_bound, stochastic_convolution)
from levysee.hilbert import SpectralSemigroup
from levysee.measure import JumpPath, atoms, compensated_integral, sample_jump_path, uniform_box
from levysee.paths import GridError, jump_adapted_grid


def _grid(path, n=64):
    return jump_adapted_grid(path.horizon, n, path.times)


# ---------------------------------------------------------------- convolution


def test_identity_semigroup_reduces_to_compensated_sum():
    nu = uniform_box(3.0, [0.0, -1.0], [1.0, 1.0])
    path = sample_jump_path(nu, 1.0, 4)
    x0 = np.array([0.5, -1.0])
    k = lambda t, xi: xi * (1.0 + np.asarray(t)[..., None])
    pg = stochastic_convolution(SpectralSemigroup([0.0, 0.0]), x0, None, path, k, _grid(path), nu=nu)
    for t in (0.3, 0.77, 1.0):
        j = np.searchsorted(pg.times, t)
        if pg.times[j] != t:
            continue
        np.testing.assert_allclose(pg.values[j], x0 + compensated_integral(path, nu, k, t), atol=1e-13)
    np.testing.assert_allclose(pg.values[-1], x0 + compensated_integral(path, nu, k, 1.0), atol=1e-13)


def test_single_uncompensated_jump():
    path = JumpPath(1.0, [0.5], [[1.0]])
    pg = stochastic_convolution(SpectralSemigroup([-1.0]), [0.0], None, path, lambda t, xi: xi, _grid(path))
    assert pg.values[-1, 0] == pytest.approx(np.exp(-0.5), rel=1e-14)
    i = np.searchsorted(pg.times, 0.5)
    assert pg.left_values[i, 0] == 0.0 and pg.values[i, 0] == 1.0


def test_constant_drift_closed_form():
    path = JumpPath(1.0, [], np.zeros((0, 1)))
    pg = stochastic_convolution(SpectralSemigroup([-1.0]), [0.0], lambda s: np.ones_like(s), path, None,
                                _grid(path, 8))
    assert pg.values[-1, 0] == pytest.approx(1.0 - np.exp(-1.0), rel=1e-14)


def test_grid_must_contain_jump_times():
    path = JumpPath(1.0, [0.123], [[1.0]])
    with pytest.raises(GridError):
        stochastic_convolution(SpectralSemigroup([-1.0]), [0.0], None, path, lambda t, xi: xi,
                               np.linspace(0, 1, 11))


def test_deterministic_convolution_off_grid_queries():
    sg = SpectralSemigroup([-2.0, 0.0])
    rate = lambda s: np.stack([np.cos(s), np.ones_like(s)], axis=-1)
    q = np.array([0.0, 0.1234, 0.5, 0.999])
    got = deterministic_convolution(sg, rate, 1.0, q, n_steps=32)
    # int_0^t e^{-2(t-s)} cos s ds = (2 cos t + sin t - 2 e^{-2t}) / 5
    want0 = (2 * np.cos(q) + np.sin(q) - 2 * np.exp(-2 * q)) / 5
    np.testing.assert_allclose(got[:, 0], want0, atol=1e-14)
    np.testing.assert_allclose(got[:, 1], q, atol=1e-14)


# ---------------------------------------------------------------- vector inequality


def test_gap_bound_examples():
    lhs, rhs = pth_power_gap_bound([1.0, 2.0], [0.0, 0.0], 3.0)
    assert lhs == 0.0 and rhs == 0.0
    lhs, rhs = pth_power_gap_bound([1.0, 0.0], [0.0, 1.0], 4.0)
    assert lhs == pytest.approx(3.0, rel=1e-14)
    assert rhs == pytest.approx(18.0, rel=1e-14)
    x, y = np.array([0.3, -2.0, 1.0]), np.array([1.5, 0.2, -0.7])
    lhs, rhs = pth_power_gap_bound(x, y, 2.0)
    assert lhs == pytest.approx(y @ y, rel=1e-15)
    assert rhs == pytest.approx(2 * (y @ y), rel=1e-15)


def test_gap_bound_rejects_small_p():
    with pytest.raises(ValueError):
        pth_power_gap_bound([1.0], [1.0], 1.5)


def _exact_lhs(x, y, p):
    """Rational arithmetic for even p."""
    fx = [Fraction(v) for v in x]
    fy = [Fraction(v) for v in y]
    a = sum(v * v for v in fx)
    b = sum((u + v) ** 2 for u, v in zip(fx, fy))
    xy = sum(u * v for u, v in zip(fx, fy))
    r = p // 2
    return b**r - a**r - p * a ** (r - 1) * xy


@pytest.mark.parametrize("p", [4, 6])
def test_gap_lhs_against_rational_arithmetic(p, rng):
    for _ in range(200):
        d = int(rng.integers(1, 6))
        x = rng.normal(size=d) * 10 ** rng.uniform(-3, 3)
        y = rng.normal(size=d) * 10 ** rng.uniform(-3, 3)
        exact = float(_exact_lhs(x, y, p))
        lhs, rhs = pth_power_gap_bound(x, y, p)
        assert abs(lhs - exact) <= 1e-12 * (abs(exact) + 1e-300) + 1e-300


vec = arrays(np.float64, 4, elements=st.floats(-1e3, 1e3, allow_nan=False))


@given(vec, vec, st.sampled_from([2.0, 2.5, 3.0, 4.0, 6.0, 7.3]))
def test_gap_bound_holds(x, y, p):
    lhs, rhs = pth_power_gap_bound(x, y, p)
    assert lhs >= -1e-12 * (1 + rhs)          # remainder of a convex function
    assert lhs <= rhs + 1e-12 * (1 + rhs)


# ---------------------------------------------------------------- p-th power residual


def test_zero_path_has_zero_residual():
    path = JumpPath(1.0, [], np.zeros((0, 2)))
    sg = SpectralSemigroup([-1.0, -2.0])
    pg = stochastic_convolution(sg, [0.0, 0.0], None, path, None, _grid(path, 16))
    dec = Decomposition(None, np.zeros(0), np.zeros((0, 2)))
    for p in (2.0, 4.0):
        r = ito_pth_residual(sg, pg, dec, p)
        assert np.all(r.residual == 0.0)


def test_single_jump_equality_for_p2_without_generator():
    x, y = np.array([0.4, -1.2]), np.array([0.7, 0.3])
    path = JumpPath(1.0, [0.5], [y])
    sg = SpectralSemigroup([0.0, 0.0])
    pg = stochastic_convolution(sg, x, None, path, lambda t, xi: xi, _grid(path, 8))
    r = ito_pth_residual(sg, pg, Decomposition(None, path.times, path.marks), 2.0)
    assert np.max(np.abs(r.residual)) <= 1e-14
    assert np.max(np.abs(r.jump_contributions)) <= 1e-14


def test_residual_nonnegative_with_drift_and_generator():
    nu = atoms([[0.5, 0.2], [-0.3, 0.1]], [1.0, 2.0])
    k = lambda t, xi: xi
    v = lambda s: np.stack([np.sin(s), np.cos(3 * s)], axis=-1)
    from levysee.convolution import mark_compensator
    comp = mark_compensator(nu, k)
    for seed in range(5):
        path = sample_jump_path(nu, 1.0, seed)
        for lam in ([0.0, 0.0], [-1.0, -3.0], [0.4, -1.0]):
            sg = SpectralSemigroup(lam)
            pg = stochastic_convolution(sg, [1.0, -1.0], v, path, k, _grid(path), nu=nu)
            dec = Decomposition(lambda s: v(s) - comp(s), path.times, path.marks)
            for r in ito_pth_residual(sg, pg, dec, [2.0, 3.0, 4.0]):
                assert r.holds(1e-9), r.min_relative
            if lam == [0.0, 0.0]:
                r2 = ito_pth_residual(sg, pg, dec, 2.0)
                assert np.max(np.abs(r2.residual)) <= 1e-12 * r2.scale


def test_residual_rejects_mismatched_decomposition():
    path = JumpPath(1.0, [0.5], [[1.0]])
    sg = SpectralSemigroup([-1.0])
    pg = stochastic_convolution(sg, [0.0], None, path, lambda t, xi: xi, _grid(path, 8))
    with pytest.raises(GridError):
        ito_pth_residual(sg, pg, Decomposition(None, np.array([0.3]), np.array([[1.0]])), 2.0)


# ---------------------------------------------------------------- maximal inequalities


def test_zero_martingale_ratio_convention():
    nu = atoms([[1.0]], [2.0])
    r = burkholder_ratio(SpectralSemigroup([-1.0]), lambda t, xi: 0.0 * xi, nu, 1.0, 2.0, 50, 0)
    assert r.lhs.mean == 0.0 and r.rhs.mean == 0.0 and r.ratio == 0.0


def test_doob_for_identity_semigroup():
    nu = atoms([[1.0]], [2.0])
    r = burkholder_ratio(SpectralSemigroup([0.0]), lambda t, xi: xi, nu, 1.0, 2.0, 4000, 1)
    assert r.lhs.mean <= 4.0 * r.rhs.mean + 3.0 * (r.lhs.stderr + 4.0 * r.rhs.stderr)
    assert r.ratio >= 1.0 - 3.0 * r.lhs.stderr / r.rhs.mean   # sup dominates the endpoint


def test_burkholder_needs_contraction():
    nu = atoms([[1.0]], [2.0])
    with pytest.raises(ValueError):
        burkholder_ratio(SpectralSemigroup([0.1]), lambda t, xi: xi, nu, 1.0, 2.0, 10, 0)


def test_damped_convolution_ratio_finite():
    nu = uniform_box(2.0, [-1.0], [1.0])
    r = burkholder_ratio(SpectralSemigroup([-1.0, -5.0]), lambda t, xi: np.concatenate([xi, xi], -1), nu,
                         1.0, 4.0, 500, 2)
    assert np.isfinite(r.ratio) and r.ratio > 0


def test_bichteler_jacod_zero_integrand():
    nu = atoms([[1.0]], [1.0])
    r = bichteler_jacod_check(lambda t, xi: 0.0 * xi, nu, 1.0, 3.0, 20, 0)
    assert r.lhs.mean == 0.0 and r.rhs == 0.0 and r.implied_constant == 0.0


def test_bichteler_jacod_p2_doob_isometry():
    nu = uniform_box(3.0, [-1.0], [1.0])
    k = lambda t, xi: (1.0 + np.asarray(t)[..., None]) * xi
    r = bichteler_jacod_check(k, nu, 1.0, 2.0, 4000, 5)
    assert r.isometry_term == pytest.approx(3.0 / 3.0 * 7.0 / 3.0, rel=1e-12)
    assert r.doob_isometry_holds()


def test_bichteler_jacod_p4_atoms_closed_form():
    nu = atoms([[1.0], [-1.0]], [1.0, 1.0])
    r = bichteler_jacod_check(lambda t, xi: xi, nu, 1.0, 4.0, 8000, 11)
    # int int |k| dnu ds = 2, int int |k|^4 = 2
    assert r.first_moment_term.mean == pytest.approx(16.0, rel=1e-12)
    assert r.pth_moment_term.mean == pytest.approx(2.0, rel=1e-12)
    kappa2 = kappa4 = 2.0
    endpoint = kappa4 + 3 * kappa2**2          # E M_T^4 for a compensated Poisson sum
    s = 3.0 * r.lhs.stderr
    assert endpoint - s <= r.lhs.mean <= (4.0 / 3.0) ** 4 * endpoint + s
    r2 = bichteler_jacod_check(lambda t, xi: xi, nu, 1.0, 4.0, 16000, 11)
    assert abs(r2.lhs.mean - r.lhs.mean) <= 3.0 * np.hypot(r.lhs.stderr, r2.lhs.stderr)
    assert np.isfinite(r.implied_constant)


def test_bichteler_jacod_small_p_reports_basis_constant():
    nu = atoms([[1.0]], [3.0])
    r = bichteler_jacod_check(lambda t, xi: xi, nu, 1.0, 1.5, 500, 3)
    assert r.basis_constant == pytest.approx(r.lhs.mean / 3.0, rel=1e-12)
    with pytest.raises(ValueError):
        bichteler_jacod_check(lambda t, xi: xi, nu, 1.0, 0.5, 10, 3)
