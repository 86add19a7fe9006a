import math

import numpy as np
import pytest

from blinkcorr import (
    PhotoPhysicalParams,
    Trajectory,
    estimate_g,
    g_total,
    light_fraction,
    log_edges,
    log_grid,
    read_trajectory,
    simulate_periods,
    simulate_photons,
    statistics_from_params,
    write_trajectory,
)
from blinkcorr.errors import InsufficientDataError
from blinkcorr.simulate import _EmissionSampler


def poisson_trajectory(rate, duration, seed):
    rng = np.random.Generator(np.random.Philox(key=[seed, 99]))
    n = rng.poisson(rate * duration)
    times = np.sort(rng.uniform(0.0, duration, n))
    return Trajectory(times=times, duration=duration)


def test_trajectory_validation():
    Trajectory(times=np.array([0.1, 0.2]), duration=1.0)
    Trajectory(times=np.empty(0), duration=1.0)
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.2, 0.1]), duration=1.0)
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.1, 1.2]), duration=1.0)
    with pytest.raises(ValueError):
        Trajectory(times=np.array([-0.1, 0.2]), duration=1.0)
    with pytest.raises(ValueError):
        Trajectory(times=np.array([0.1]), duration=0.0)


def test_periods_deterministic(reference_stats):
    a = simulate_periods(reference_stats, 5.0, seed=7)
    b = simulate_periods(reference_stats, 5.0, seed=7)
    assert np.array_equal(a, b)
    c = simulate_periods(reference_stats, 5.0, seed=8)
    assert a.shape != c.shape or not np.array_equal(a, c)


def test_periods_record_is_contiguous(reference_stats):
    rec = simulate_periods(reference_stats, 5.0, seed=7)
    assert rec[0, 1] == 0.0
    assert rec[-1, 2] == 5.0
    assert np.max(np.abs(rec[1:, 1] - rec[:-1, 2])) == 0.0
    states = rec[:, 0]
    # Light alternates with some dark type, dark always returns to light.
    for prev, cur in zip(states[:-1], states[1:]):
        if prev == 0.0:
            assert cur in (1.0, 2.0)
        else:
            assert cur == 0.0


def test_period_dwell_statistics(reference_stats):
    rec = simulate_periods(reference_stats, 120.0, seed=123)
    interior = rec[1:-1]
    light = interior[interior[:, 0] == 0.0]
    dwells = light[:, 2] - light[:, 1]
    n = dwells.size
    assert n > 1000
    mean_expected = reference_stats.T_L
    # Exponential dwell: standard error of the mean is mean / sqrt(n).
    z = (dwells.mean() - mean_expected) / (mean_expected / math.sqrt(n))
    assert abs(z) < 3.5

    dark1 = int(np.sum(interior[:, 0] == 1.0))
    dark2 = int(np.sum(interior[:, 0] == 2.0))
    p1_expected = reference_stats.p_LD[0] / sum(reference_stats.p_LD)
    total = dark1 + dark2
    z_branch = (dark1 - total * p1_expected) / math.sqrt(
        total * p1_expected * (1.0 - p1_expected)
    )
    assert abs(z_branch) < 3.5


def test_light_fraction_converges(reference_stats):
    rec = simulate_periods(reference_stats, 120.0, seed=321)
    frac = light_fraction(rec)
    assert frac == pytest.approx(reference_stats.P_L, abs=0.01)
    with pytest.raises(ValueError):
        light_fraction(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        light_fraction(np.zeros((3, 2)))


def test_non_blinking_record_is_one_period():
    from blinkcorr import period_statistics

    st = period_statistics((0.0, 0.0), (430.0, 2400.0))
    rec = simulate_periods(st, 3.0, seed=5)
    assert rec.shape == (1, 3)
    assert rec[0, 0] == 0.0
    assert light_fraction(rec) == 1.0


def test_emission_sampler_mean_wait():
    a, w = 3.3e8, 2.9e8
    sampler = _EmissionSampler(a, w)
    assert sampler.mean_wait == pytest.approx(
        (a * a + 2.0 * w * w) / (a * w * w), rel=1e-12
    )
    rng = np.random.Generator(np.random.Philox(key=[42, 0]))
    draws = sampler.sample(rng, 200_000)
    z = (draws.mean() - sampler.mean_wait) / (draws.std() / math.sqrt(draws.size))
    assert abs(z) < 4.0
    assert np.all(draws >= 0.0)


def test_emission_sampler_antibunching():
    # Waiting times shorter than a tenth of the decay time are rare
    # compared with a Poisson process of the same mean rate.
    sampler = _EmissionSampler(3.3e8, 2.9e8)
    rng = np.random.Generator(np.random.Philox(key=[43, 0]))
    draws = sampler.sample(rng, 100_000)
    cut = 0.1 / 3.3e8
    frac_short = np.mean(draws < cut)
    poisson_frac = 1.0 - math.exp(-cut / sampler.mean_wait)
    assert frac_short < 0.2 * poisson_frac


def test_photons_only_in_light_periods(reference_params, reference_stats):
    p = PhotoPhysicalParams(
        A31=3.3e5,
        Omega31=2.9e5,
        A32=reference_params.A32,
        A21=reference_params.A21,
        I_sc=0.0,
    )
    rec = simulate_periods(reference_stats, 2.0, seed=11)
    traj = simulate_photons(rec, p, seed=11)
    assert len(traj) > 1000
    light = rec[rec[:, 0] == 0.0]
    idx = np.searchsorted(light[:, 1], traj.times, side="right") - 1
    assert np.all(idx >= 0)
    assert np.all(traj.times <= light[idx, 2] + 1e-12)


def test_photons_deterministic(reference_stats):
    p = PhotoPhysicalParams(
        A31=3.3e5, Omega31=2.9e5, A32=(34.0, 249.0), A21=(430.0, 2400.0), I_sc=1e4
    )
    rec = simulate_periods(statistics_from_params(p), 2.0, seed=3)
    a = simulate_photons(rec, p, seed=3)
    b = simulate_photons(rec, p, seed=3)
    assert np.array_equal(a.times, b.times)
    c = simulate_photons(rec, p, seed=4)
    assert a.times.size != c.times.size or not np.array_equal(a.times, c.times)


def test_photon_rate_matches_intensity(reference_stats):
    from blinkcorr import light_intensity

    p = PhotoPhysicalParams(
        A31=3.3e5, Omega31=2.9e5, A32=(34.0, 249.0), A21=(430.0, 2400.0), I_sc=0.0
    )
    rec = simulate_periods(reference_stats, 20.0, seed=17)
    traj = simulate_photons(rec, p, seed=17)
    light_time = light_fraction(rec) * 20.0
    expected = light_intensity(p.A31, p.Omega31) * light_time
    z = (len(traj) - expected) / math.sqrt(expected)
    # Renewal counting is sub-Poissonian here, so 4 sigma is generous.
    assert abs(z) < 4.0


def test_estimate_g_flat_for_poisson():
    edges = log_edges(1e-5, 1e-1, 6)
    for rate, seed in ((2e4, 1), (2e5, 2)):
        traj = poisson_trajectory(rate, 20.0, seed)
        series = estimate_g(traj, edges)
        z = (series.g - 1.0) / series.sigma
        assert np.max(np.abs(z)) < 4.0
        assert np.mean(np.abs(z)) < 1.5


def test_estimate_g_sigma_shrinks_with_duration():
    edges = log_edges(1e-5, 1e-2, 5)
    short = estimate_g(poisson_trajectory(5e4, 4.0, 10), edges)
    long = estimate_g(poisson_trajectory(5e4, 16.0, 10), edges)
    ratio = np.median(short.sigma / long.sigma)
    assert 1.4 < ratio < 2.8


def test_estimate_g_recovers_blinking_curve(reference_stats):
    # Slowed copy of the reference system: optical rates scaled by 1e-3,
    # metastable rates by 1e-1, background off. The occupations are
    # unchanged, so the curve keeps its plateau at 1/P_L while both knees
    # move into a cheaply simulable window.
    p = PhotoPhysicalParams(
        A31=3.3e5, Omega31=2.9e5, A32=(3.4, 24.9), A21=(43.0, 240.0), I_sc=0.0
    )
    stats = statistics_from_params(p)
    assert stats.P_L == pytest.approx(reference_stats.P_L, rel=1e-12)

    rec = simulate_periods(stats, 60.0, seed=2024)
    traj = simulate_photons(rec, p, seed=2024)
    series, windows = estimate_g(
        traj, log_edges(3e-4, 3e-2, 10), with_windows=True
    )
    model = np.array(
        [
            np.mean(g_total(np.geomspace(a, b, 9), p))
            for a, b in windows
        ]
    )
    z = (series.g - model) / series.sigma
    assert np.mean(np.abs(z) < 3.0) >= 0.9
    assert np.max(np.abs(z)) < 5.0

    # The plateau region pins the inverse light fraction. The reported
    # sigma carries a normalization term common to all bins, so the
    # weighted mean cannot beat the per-bin error; bound by it.
    plateau = (series.tau > 5e-4) & (series.tau < 3e-3)
    assert plateau.sum() >= 5
    est = np.average(series.g[plateau], weights=series.sigma[plateau] ** -2)
    bound = 3.0 * float(np.median(series.sigma[plateau]))
    assert abs(est - 1.0 / stats.P_L) < bound


def test_estimate_g_validation():
    traj = poisson_trajectory(1e4, 2.0, 5)
    with pytest.raises(ValueError):
        estimate_g(traj, np.array([1e-3]))
    with pytest.raises(ValueError):
        estimate_g(traj, np.array([1e-3, 5e-4]))
    with pytest.raises(ValueError):
        estimate_g(traj, np.array([0.0, 1e-3]))
    with pytest.raises(InsufficientDataError):
        estimate_g(traj, np.array([0.5, 1.0, 2.0]))
    tiny = Trajectory(times=np.array([0.5]), duration=1.0)
    with pytest.raises(InsufficientDataError):
        estimate_g(tiny, log_edges(1e-3, 1e-1, 5))


def test_estimate_g_drops_long_bins():
    traj = poisson_trajectory(1e4, 2.0, 6)
    series = estimate_g(traj, log_edges(1e-4, 10.0, 4))
    assert series.tau[-1] <= 0.2


def test_log_edges_matches_log_grid():
    assert np.array_equal(log_edges(1e-6, 1e-2, 7), log_grid(1e-6, 1e-2, 7))


def test_trajectory_file_round_trip(tmp_path, reference_stats):
    p = PhotoPhysicalParams(
        A31=3.3e5, Omega31=2.9e5, A32=(34.0, 249.0), A21=(430.0, 2400.0), I_sc=1e4
    )
    rec = simulate_periods(reference_stats, 1.0, seed=9)
    traj = simulate_photons(rec, p, seed=9)
    path = str(tmp_path / "traj.txt")
    write_trajectory(traj, path)
    again = read_trajectory(path)
    assert np.array_equal(again.times, traj.times)
    assert again.duration == traj.duration
    assert again.seed == traj.seed
    assert again.periods is None


def test_read_trajectory_rejects_malformed(tmp_path):
    path = tmp_path / "traj.txt"
    path.write_text("0.1\n0.2\n")
    with pytest.raises(ValueError):
        read_trajectory(str(path))
    path.write_text("# duration = 1.0\n0.1\nnope\n")
    with pytest.raises(ValueError):
        read_trajectory(str(path))
