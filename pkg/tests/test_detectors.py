import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sprintsim.detectors import (
    ClickHistogram,
    DetectorConfig,
    click_probability,
    forward_matrix,
    sample_click_counts,
    simulate_clicks,
)
from sprintsim.fockops import make_distribution, thin, total_variation

configs = st.builds(
    lambda N, eta, frac: DetectorConfig(N=N, eta=eta, N_d=int(frac * N)),
    st.integers(1, 8), st.floats(0.0, 1.0), st.floats(0.0, 1.0))


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(eta=1.5)
    with pytest.raises(ValueError):
        DetectorConfig(N=3, N_d=4)
    with pytest.raises(ValueError):
        DetectorConfig(N=0)


def test_small_cases():
    cfg = DetectorConfig()
    assert click_probability(0, 0, cfg) == 1.0
    assert click_probability(1, 1, cfg) == pytest.approx(1 / 3, abs=1e-15)
    assert click_probability(0, 1, cfg) == pytest.approx(2 / 3, abs=1e-15)
    with pytest.raises(ValueError):
        click_probability(6, 1, cfg)
    with pytest.raises(ValueError):
        click_probability(0, -1, cfg)


@given(configs, st.integers(0, 25))
def test_forward_matrix_column_stochastic(cfg, K):
    A = forward_matrix(cfg, K)
    assert A.shape == (cfg.live + 1, K + 1)
    assert np.all(A >= 0)
    assert np.allclose(A.sum(axis=0), 1.0, atol=1e-10)
    assert A[0, 0] == 1.0


@given(configs, st.integers(0, 20))
def test_expected_clicks_monotone(cfg, K):
    A = forward_matrix(cfg, K)
    mean = np.arange(cfg.live + 1) @ A
    assert np.all(np.diff(mean) >= -1e-12)
    assert np.all(mean <= cfg.live + 1e-12)


def _occupancy_chain(cfg, k):
    """Distinct live detectors hit, as a Markov chain over photons (independent oracle)."""
    p = np.zeros(cfg.live + 1)
    p[0] = 1.0
    for _ in range(k):
        new = cfg.eta * (cfg.live - np.arange(cfg.live + 1)) / cfg.N
        nxt = p * (1 - new)
        nxt[1:] += (p * new)[:-1]
        p = nxt
    return p


@given(configs, st.integers(0, 30))
def test_formula_matches_occupancy_chain(cfg, k):
    col = np.array([click_probability(n, k, cfg) for n in range(cfg.live + 1)])
    assert np.allclose(col, _occupancy_chain(cfg, k), atol=1e-12)


def test_row_matches_sampling_k10():
    cfg = DetectorConfig()
    rng = np.random.default_rng(12345)
    M = 200_000
    h = np.bincount(sample_click_counts(10, cfg, M, rng), minlength=6) / M
    for n in range(6):
        p = click_probability(n, 10, cfg)
        assert abs(h[n] - p) <= 3 * math.sqrt(p * (1 - p) / M) + 1e-12


def test_dead_detectors_reduce_range():
    cfg = DetectorConfig(N=5, N_d=2)
    rng = np.random.default_rng(1)
    counts = sample_click_counts(8, cfg, 20000, rng)
    assert counts.max() <= 3
    h = np.bincount(counts, minlength=4) / counts.size
    A = forward_matrix(cfg, 8)[:, 8]
    assert np.abs(h - A).max() < 0.02


def test_large_cascade_thins_poisson():
    cfg = DetectorConfig(N=400, eta=0.3)
    mu = 3.0
    pin = make_distribution("poisson", mu, tail=1e-12)
    A = forward_matrix(cfg, pin.cutoff)
    clicks = A @ pin.p
    assert total_variation(clicks, thin(pin, 0.3)) < 0.01


def test_simulate_clicks_examples():
    assert simulate_clicks([np.array([1.0, 2.0])], DetectorConfig(eta=0.0), 0)[0].n_clicks == 0
    rec = simulate_clicks([np.array([5.0])], DetectorConfig(eta=1.0), 0)[0]
    assert rec.n_clicks == 1 and rec.times[0] == 5.0
    rec = simulate_clicks([np.array([0.0, 10.0])], DetectorConfig(N=1, eta=1.0, dead_time=60.0), 0)[0]
    assert rec.n_clicks == 1
    rec = simulate_clicks([np.array([0.0, 70.0])], DetectorConfig(N=1, eta=1.0, dead_time=60.0), 0)[0]
    assert rec.n_clicks == 2 and rec.n_detectors == 1


def test_simulate_clicks_deterministic():
    times = [np.sort(np.random.default_rng(i).uniform(0, 200, size=i % 7)) for i in range(50)]
    a = simulate_clicks(times, DetectorConfig(), 99)
    b = simulate_clicks(times, DetectorConfig(), 99)
    assert all(np.array_equal(x.times, y.times) and np.array_equal(x.detectors, y.detectors) for x, y in zip(a, b))


def test_simulate_clicks_matches_formula_without_dead_time():
    cfg = DetectorConfig(dead_time=0.0)
    k, M = 6, 20000
    recs = simulate_clicks([np.zeros(k)] * M, cfg, 7)
    h = np.bincount([r.n_detectors for r in recs], minlength=6) / M
    col = forward_matrix(cfg, k)[:, k]
    assert np.all(np.abs(h - col) <= 4 * np.sqrt(col * (1 - col) / M) + 1e-3)


def test_histogram_csv_round_trip():
    h = ClickHistogram(np.array([5, 3, 0, 1]), "T")
    back = ClickHistogram.from_csv(h.to_csv())
    assert np.array_equal(back.counts, h.counts) and back.M == 9
    assert h.to_csv().splitlines()[0] == "n,count"
    with pytest.raises(ValueError):
        ClickHistogram(np.array([1, -1]))
