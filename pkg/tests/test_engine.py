import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hs

from periodic_loss import engine, stochastic as st, theory
from periodic_loss.utility import NoiseModel, NoisePath, PeriodicProfile


def const(v):
    return lambda rng, size: np.full(size, float(v))


def test_deterministic_cycles(rng):
    tr = engine.simulate_cell(const(10), const(2), rng, n_cycles=3)
    np.testing.assert_array_equal(tr.d, [12.0, 24.0, 36.0])
    np.testing.assert_array_equal(tr.down_start, [10.0, 22.0, 34.0])


def test_horizon_truncates_last_cycle(rng):
    tr = engine.simulate_cell(const(10), const(2), rng, horizon=30.0)
    assert tr.truncated
    assert tr.d[-1] == 30.0
    assert tr.downtime(30.0) == pytest.approx(4.0)


def test_simulate_cell_needs_one_stop(rng, base_models):
    with pytest.raises(ValueError):
        engine.simulate_cell(*base_models, rng)
    with pytest.raises(ValueError):
        engine.simulate_cell(*base_models, rng, n_cycles=5, horizon=5.0)


def test_trace_reproducible(base_models):
    a = engine.simulate_cell(*base_models, np.random.default_rng(4), horizon=500.0)
    b = engine.simulate_cell(*base_models, np.random.default_rng(4), horizon=500.0)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_loss_integral_closed_form(sinusoid):
    # integral of A sin(2 pi t / p) + c over [a, b]
    a, b = 3.3, 17.9
    exact = 3.0 * (b - a) - 1.75 * 24 / (2 * math.pi) * (math.cos(2 * math.pi * b / 24) - math.cos(2 * math.pi * a / 24))
    assert engine.loss_integral(sinusoid, a, b) == pytest.approx(exact, rel=1e-10)


def test_loss_integral_sampled_profile():
    prof = PeriodicProfile.sampled([0.0, 2.0])  # triangle wave, mean 1
    assert engine.loss_integral(prof, 0.0, 20.0) == pytest.approx(20.0, rel=1e-9)
    assert engine.loss_integral(prof, 0.0, 1.0) == pytest.approx(1.0, rel=1e-9)


def test_loss_integral_with_noise():
    prof = PeriodicProfile.constant(2.0)
    noise = NoisePath(0.0, 1.0, np.array([0.0, 1.0, 1.0, 0.0]))
    assert engine.loss_integral(prof, 0.0, 3.0, noise) == pytest.approx(6.0 + 2.0)


def test_zero_repair_gives_zero_loss(sinusoid, rng):
    tr = engine.simulate_cell(st.InterArrivalModel.exponential(0.5), const(0), rng, n_cycles=50)
    s = engine.loss_series_by_cycle(tr, sinusoid)
    assert np.all(s.per_cycle == 0)


def test_constant_utility_network_equals_downtime(base_models):
    K = 2.5
    prof = PeriodicProfile.constant(K)
    gens = engine.cell_generators(np.random.SeedSequence(3), 5)
    traces = [engine.simulate_cell(*base_models, g, horizon=300.0) for g in gens]
    grid = np.arange(1.0, 301.0)
    run = engine.loss_series_by_time(traces, prof, grid)
    for g in (0, 99, 299):
        T = grid[g]
        expected = K * np.mean([tr.downtime(T) for tr in traces]) / T
        assert run.aggregate[g] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_network_aggregate_recomputable(sinusoid, base_models):
    gens = engine.cell_generators(np.random.SeedSequence(8), 3)
    traces = [engine.simulate_cell(*base_models, g, horizon=200.0) for g in gens]
    grid = np.array([50.0, 123.4, 200.0])
    run = engine.loss_series_by_time(traces, sinusoid, grid)
    for g, T in enumerate(grid):
        per_cell = [sum(engine.loss_integral(sinusoid, a, min(d, T)) for a, d in zip(tr.down_start, tr.d) if a < T)
                    for tr in traces]
        assert run.aggregate[g] == pytest.approx(np.mean(per_cell) / T, rel=1e-10)


def test_running_loss_definition(sinusoid, base_models, rng):
    tr = engine.simulate_cell(*base_models, rng, n_cycles=40)
    s = engine.loss_series_by_cycle(tr, sinusoid)
    np.testing.assert_allclose(s.running_by_cycle, np.cumsum(s.per_cycle) / tr.d)


@settings(max_examples=20, deadline=None)
@given(seed=hs.integers(0, 2**32), lam=hs.floats(0.05, 5.0), mu=hs.floats(0.05, 5.0))
def test_running_loss_bounded(seed, lam, mu):
    sinusoid = PeriodicProfile.sinusoid(1.75, 3.0, 24.0)
    rng = np.random.default_rng(seed)
    tr = engine.simulate_cell(st.InterArrivalModel.exponential(lam), st.MaintenanceModel.exponential(mu),
                              rng, n_cycles=50)
    s = engine.loss_series_by_cycle(tr, sinusoid)
    assert np.all(s.per_cycle >= 0)
    assert np.all((s.running_by_cycle >= 0) & (s.running_by_cycle <= sinusoid.bound + 1e-12))
    assert np.all(np.diff(tr.d) > 0)
    assert np.all(tr.down_start[1:] >= tr.d[:-1])


# -- convergence stage -------------------------------------------------------


def test_stage_constant_series():
    assert engine.convergence_stage(np.full(10, 2.0), 2.0) == 1
    assert engine.convergence_stage(np.full(10, 2.0), 2.0, times=np.arange(10.0)) == 0.0


def test_stage_algebraic_oracle():
    n = np.arange(1, 1001)
    series = 3.0 * (1 + 1 / n)
    # 1/n < 0.1 (1 + 1/n)  <=>  n > 9
    assert engine.convergence_stage(series, 3.0) == 10


def test_stage_not_reached():
    assert engine.convergence_stage(np.array([1.0, 1.0, 5.0]), 1.0) is None


def test_stage_persistence_uses_last_violation():
    s = np.array([1.0, 5.0, 1.0, 1.0, 5.0, 1.0, 1.0])
    assert engine.convergence_stage(s, 1.0) == 6


def test_stage_rejects_bad_limit():
    with pytest.raises(ValueError):
        engine.convergence_stage(np.ones(3), 0.0)


@settings(max_examples=50, deadline=None)
@given(series=hs.lists(hs.floats(0.01, 10.0), min_size=1, max_size=60), limit=hs.floats(0.1, 5.0))
def test_stage_definition(series, limit):
    s = np.array(series)
    k = engine.convergence_stage(s, limit)
    rel = np.abs(s - limit) / s
    if k is None:
        assert rel[-1] >= 0.1
    else:
        assert np.all(rel[k - 1:] < 0.1)
        assert k == 1 or rel[k - 2] >= 0.1


# -- replication -------------------------------------------------------------


def test_summary_single_value():
    s = engine.replicate(lambda seed: 7.0, 1, 0)
    assert s.median == s.mean == s.q10 == s.q90 == 7.0


def test_summary_unreached_counts_high():
    s = engine.summarize([1.0, None, None])
    assert s.not_reached == 2
    assert s.median is None
    assert s.q10 == 1.0


def test_replicate_deterministic(sinusoid, base_models):
    lim = theory.expected_loss_limit(theory.LimitInputs(1 / 0.019, 1 / 0.47, 3.0))
    study = engine.CellStudy(*base_models, sinusoid, 500, lim)
    a = engine.replicate(study, 8, 99)
    b = engine.replicate(study, 8, 99)
    assert a == b
    assert a != engine.replicate(study, 8, 100)


def test_replicate_threads_do_not_change_result(sinusoid, base_models):
    lim = theory.expected_loss_limit(theory.LimitInputs(1 / 0.019, 1 / 0.47, 3.0))
    study = engine.CellStudy(*base_models, sinusoid, 300, lim)
    assert engine.replicate(study, 4, 5, threads=2) == engine.replicate(study, 4, 5)


def test_noise_shares_renewal_streams(sinusoid, base_models):
    lim = theory.expected_loss_limit(theory.LimitInputs(1 / 0.019, 1 / 0.47, 3.0))
    clean = engine.NetworkStudy(*base_models, sinusoid, 4, 100.0, lim)
    noisy = engine.NetworkStudy(*base_models, sinusoid, 4, 100.0, lim, noise=NoiseModel("ou", 0.01, 1.0))
    seed = np.random.SeedSequence(1)
    a, b = clean.run(seed), noisy.run(seed)
    for ta, tb in zip(a.traces, b.traces):
        np.testing.assert_array_equal(ta.x, tb.x)
    assert np.max(np.abs(a.aggregate - b.aggregate)) < 0.05


def test_mean_loss_per_cycle_near_ibar(sinusoid, base_models):
    tr = engine.simulate_cell(*base_models, np.random.default_rng(21), n_cycles=10_000)
    s = engine.loss_series_by_cycle(tr, sinusoid)
    assert s.per_cycle[100:].mean() == pytest.approx(3.0 / 0.47, rel=0.05)


def test_late_cycles_uncorrelated(sinusoid, base_models):
    study = engine.CellStudy(*base_models, sinusoid, 60, 1.0)
    seeds = np.random.SeedSequence(31).spawn(3000)
    I = np.array([study.series(s).per_cycle for s in seeds])
    a, b = I[:, 20], I[:, 45]
    cov = np.cov(a, b)[0, 1]
    se = a.std() * b.std() / math.sqrt(len(a))
    assert abs(cov) < 3 * se
