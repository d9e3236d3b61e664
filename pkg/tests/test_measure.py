import numpy as np
import pytest
from scipy import integrate, stats

from levysee.measure import (JumpPath, atoms, compensated_integral, continuous_quadratic_variation,
                             merge_jump_paths, quadratic_variation, sample_jump_path, truncated_gaussian,
                             uniform_box)


def test_poisson_count_mean():
    nu = uniform_box(5.0, [-1.0], [1.0])
    counts = np.array([len(sample_jump_path(nu, 2.0, s)) for s in range(10_000)])
    assert abs(counts.mean() - 10.0) <= 3.0 * np.sqrt(10.0 / 10_000)


def test_tiny_mass_gives_empty_path():
    nu = atoms([[1.0]], [1e-300])
    path = sample_jump_path(nu, 1.0, 0)
    assert len(path) == 0
    assert path.marks.shape == (0, 1)


def test_sampling_is_deterministic():
    nu = truncated_gaussian(3.0, [0.5, 0.2])
    a, b = sample_jump_path(nu, 1.0, 99), sample_jump_path(nu, 1.0, 99)
    assert a.times.tobytes() == b.times.tobytes()
    assert a.marks.tobytes() == b.marks.tobytes()


def test_jump_times_must_be_increasing():
    with pytest.raises(ValueError):
        JumpPath(1.0, [0.5, 0.2], [[1.0], [1.0]])
    with pytest.raises(ValueError):
        JumpPath(1.0, [0.0], [[1.0]])


def test_invalid_mass_rejected():
    with pytest.raises(ValueError):
        uniform_box(0.0, [0.0], [1.0])
    with pytest.raises(ValueError):
        uniform_box(np.inf, [0.0], [1.0])


def test_merge_paths_sorts_events():
    a = JumpPath(1.0, [0.2, 0.6], [[1.0], [2.0]])
    b = JumpPath(1.0, [0.4], [[3.0]])
    m = merge_jump_paths(a, b)
    np.testing.assert_array_equal(m.times, [0.2, 0.4, 0.6])
    np.testing.assert_array_equal(m.marks[:, 0], [1.0, 3.0, 2.0])


def test_uniform_box_moments_closed_form():
    nu = uniform_box(2.0, [-1.0, 0.0], [1.0, 2.0])
    np.testing.assert_allclose(nu.mean(), [0.0, 2.0])
    # E|U|^q for U ~ U(-1, 1) is 1/(q+1)
    assert nu.coord_moment(2.5, 0) == pytest.approx(2.0 / 3.5, rel=1e-12)
    quad = nu.integrate(lambda xi: np.abs(xi[:, 1]) ** 3)
    assert quad == pytest.approx(2.0 * 2.0**3 / 4.0, rel=1e-12)


def test_truncated_gaussian_moments_against_scipy():
    sigma, cut = 0.7, 2.5
    nu = truncated_gaussian(1.5, [sigma], cut)
    law = stats.truncnorm(-cut, cut, scale=sigma)
    for q in (1.0, 2.0, 3.5, 4.0):
        want = 1.5 * integrate.quad(lambda x: abs(x) ** q * law.pdf(x), -cut * sigma, cut * sigma)[0]
        assert nu.coord_moment(q) == pytest.approx(want, rel=1e-9)
        assert nu.integrate(lambda xi: np.abs(xi[:, 0]) ** q) == pytest.approx(want, rel=1e-9)


def test_truncated_gaussian_samples_follow_law():
    nu = truncated_gaussian(1.0, [0.7], 2.5)
    marks = nu.sample_marks(np.random.default_rng(0), 20_000)[:, 0]
    law = stats.truncnorm(-2.5, 2.5, scale=0.7)
    assert stats.kstest(marks, law.cdf).pvalue > 1e-3


def test_atom_quadrature_is_exact():
    nu = atoms([[0.5], [-0.25]], [1.0, 3.0])
    assert nu.total_mass == 4.0
    assert nu.moment(2.0) == pytest.approx(0.25 + 3 * 0.0625)
    np.testing.assert_allclose(nu.second_moments(), [[0.25 + 3 * 0.0625]])


def test_compensated_integral_single_event():
    nu = atoms([[1.0], [-0.5]], [1.0, 1.0])
    xi0 = np.array([0.3])
    path = JumpPath(1.0, [0.5], [xi0])
    got = compensated_integral(path, nu, lambda t, xi: xi, 1.0)
    np.testing.assert_allclose(got, xi0 - 1.0 * nu.mean(), rtol=1e-14)


def test_compensated_integral_zero_integrand():
    nu = uniform_box(1.0, [-1.0], [1.0])
    path = sample_jump_path(nu, 1.0, 1)
    got = compensated_integral(path, nu, lambda t, xi: np.zeros(np.shape(xi)[:-1] + (2,)), 1.0)
    np.testing.assert_array_equal(got, np.zeros(2))


def test_compensated_integral_is_centred():
    nu = uniform_box(3.0, [0.0], [1.0])      # mean mark 1/2, so the compensator matters
    k = lambda t, xi: (1.0 + np.asarray(t)[..., None]) * xi
    vals = np.array([compensated_integral(sample_jump_path(nu, 1.0, s), nu, k, 1.0)[0] for s in range(10_000)])
    assert abs(vals.mean()) <= 3.0 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_quadratic_variation():
    path = JumpPath(1.0, [0.2, 0.7], [[3.0], [4.0]])
    assert quadratic_variation(path, lambda t, xi: xi, 1.0) == 25.0
    assert quadratic_variation(path, lambda t, xi: xi, 0.5) == 9.0
    assert quadratic_variation(JumpPath(1.0, [], np.zeros((0, 1))), lambda t, xi: xi, 1.0) == 0.0
    assert continuous_quadratic_variation(path, lambda t, xi: xi, 1.0) == 0.0
    with pytest.raises(ValueError):
        quadratic_variation(path, lambda t, xi: xi, 1.5)


def test_quadratic_variation_matches_compensator():
    nu = uniform_box(2.0, [-1.0], [1.0])
    k = lambda t, xi: np.sqrt(1.0 + np.asarray(t)[..., None]) * xi
    qv = np.array([quadratic_variation(sample_jump_path(nu, 1.0, s), k, 1.0) for s in range(10_000)])
    exact = 2.0 * (1.0 / 3.0) * 1.5          # nu(E) E[xi^2] int_0^1 (1+t) dt
    assert abs(qv.mean() - exact) <= 3.0 * qv.std(ddof=1) / np.sqrt(qv.size)
