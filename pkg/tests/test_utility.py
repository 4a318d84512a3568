import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from periodic_loss.utility import (NoiseModel, NoisePath, PeriodicProfile, corrupted_utility,
                                   eval_utility, mean_utility, sample_noise_path, sample_noise_paths)


def test_sinusoid_values(sinusoid):
    assert float(sinusoid(6.0)) == pytest.approx(4.75)
    assert float(sinusoid(18.0)) == pytest.approx(1.25)
    assert float(sinusoid(30.0)) == pytest.approx(4.75)
    assert sinusoid.bound == 4.75
    assert mean_utility(sinusoid) == 3.0


def test_sinusoid_rejects_negative_utility():
    with pytest.raises(ValueError):
        PeriodicProfile.sinusoid(3.0, 2.0, 24.0)


def test_sampled_interpolates_and_wraps():
    prof = PeriodicProfile.sampled([0.0, 2.0, 4.0, 2.0])
    assert prof.period == 4.0
    np.testing.assert_allclose(eval_utility(prof, [0.5, 3.5, 4.5, -0.5]), [1.0, 1.0, 1.0, 1.0])
    assert mean_utility(prof) == 2.0
    assert prof.bound == 4.0


def test_mean_of_sampled_matches_quadrature():
    rng = np.random.default_rng(0)
    prof = PeriodicProfile.sampled(rng.random(168))
    t = np.linspace(0, 168, 168 * 200 + 1)
    u = prof(t)
    assert mean_utility(prof) == pytest.approx(np.trapezoid(u, t) / 168, rel=1e-9)


def test_fold_weekly_to_daily():
    week = np.tile(np.arange(24.0), 7) + np.repeat(np.arange(7.0), 24)
    daily = PeriodicProfile.sampled(week).fold(24.0)
    np.testing.assert_allclose(daily.values, np.arange(24.0) + 3.0)
    with pytest.raises(ValueError):
        PeriodicProfile.sampled(week).fold(25.0)


def test_sampled_rejects_negative():
    with pytest.raises(ValueError):
        PeriodicProfile.sampled([1.0, -1.0])


def test_zero_noise_is_identity(sinusoid, rng):
    path = sample_noise_path(NoiseModel("ou", 0.0, 1.0), 48.0, rng)
    t = np.linspace(0, 48, 97)
    np.testing.assert_array_equal(corrupted_utility(sinusoid, path, t), sinusoid(t))


def test_noise_path_horizon_checked(rng):
    path = sample_noise_path(NoiseModel("white", 1.0), 10.0, rng)
    with pytest.raises(ValueError):
        path(10.5)


def test_noise_integral_exact():
    path = NoisePath(0.0, 0.5, np.array([0.0, 1.0, 0.0, -1.0]))
    assert float(path.integral(0.0, 1.5)) == pytest.approx(0.25)
    assert float(path.integral(0.25, 0.5)) == pytest.approx(0.1875)
    assert float(path(0.75)) == pytest.approx(0.5)


def test_ou_stationary_variance(rng):
    m = NoiseModel("ou", sigma=0.5, theta=2.0, dt=0.25)
    paths = sample_noise_paths(m, 20.0, rng, 4000)
    v = np.array([p.values for p in paths])
    assert m.stationary_variance == pytest.approx(0.0625)
    # every time slice has the stationary variance, whatever dt is
    assert v[:, 0].var() == pytest.approx(0.0625, rel=0.08)
    assert v[:, -1].var() == pytest.approx(0.0625, rel=0.08)


def test_ou_autocorrelation(rng):
    m = NoiseModel("ou", sigma=1.0, theta=1.0, dt=0.5)
    v = np.array([p.values for p in sample_noise_paths(m, 10.0, rng, 20000)])
    r = np.corrcoef(v[:, 4], v[:, 6])[0, 1]
    assert r == pytest.approx(math.exp(-1.0), abs=0.02)


def test_white_noise_moments(rng):
    v = sample_noise_path(NoiseModel("white", 2.0), 10_000.0, rng).values
    assert abs(v.mean()) < 0.05
    assert v.std() == pytest.approx(2.0, rel=0.02)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel("pink", 1.0)
    with pytest.raises(ValueError):
        NoiseModel("ou", 1.0, theta=0.0)


@settings(max_examples=40, deadline=None)
@given(a=hs.floats(0.0, 5.0), extra=hs.floats(0.0, 5.0), p=hs.floats(0.5, 200.0),
       t=hs.floats(-1e4, 1e4))
def test_sinusoid_bounded_and_periodic(a, extra, p, t):
    prof = PeriodicProfile.sinusoid(a, a + extra, p)
    u = float(prof(t))
    assert -1e-9 <= u <= prof.bound + 1e-9
    assert float(prof(t + p)) == pytest.approx(u, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(vals=hs.lists(hs.floats(0.0, 100.0), min_size=2, max_size=50), t=hs.floats(-1e3, 1e3))
def test_sampled_bounded(vals, t):
    prof = PeriodicProfile.sampled(vals, 0.5)
    u = float(prof(t))
    assert min(vals) - 1e-9 <= u <= max(vals) + 1e-9
