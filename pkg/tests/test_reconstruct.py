import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sprintsim.detectors import ClickHistogram, DetectorConfig, forward_matrix
from sprintsim.fockops import make_distribution, total_variation
from sprintsim.reconstruct import (
    InfeasibleMeanError,
    default_kmax,
    maxent_solve,
    objective,
    pseudo_inverse,
    reconstruct_with_uncertainty,
    select_lambda,
)

CFG = DetectorConfig()


def _feasible_perturbations(x, A, rng, count, scale):
    """Random directions in the null space of the two constraints, scaled to stay >= 0."""
    n = np.arange(A.shape[0])
    C = np.vstack([np.ones(A.shape[1]), n @ A])
    _, _, vt = np.linalg.svd(C)
    null = vt[2:].T
    out = []
    for _ in range(count):
        d = null @ rng.normal(size=null.shape[1])
        d *= scale / np.abs(d).max()
        neg = d < 0
        if neg.any():
            d *= min(1.0, 0.999 * np.min(x[neg] / -d[neg]))
        out.append(x + d)
    return out


def test_noiseless_recovery():
    truth = make_distribution("poisson", 5.0, tail=1e-10)
    A = forward_matrix(CFG, truth.cutoff)
    sol = maxent_solve(A @ truth.p, A, 1e-6)
    assert total_variation(sol.x, truth) < 0.02
    assert sol.mean_residual < 1e-6 and sol.norm_residual < 1e-6 and sol.stationarity < 1e-6


def test_vacuum_column():
    A = forward_matrix(CFG, 10)
    sol = maxent_solve(A[:, 0], A, 0.1)
    assert sol.x.p[0] == pytest.approx(1.0)


def test_infeasible_mean():
    A = forward_matrix(CFG, 2)
    P = np.zeros(6)
    P[5] = 1.0
    with pytest.raises(InfeasibleMeanError):
        maxent_solve(P, A, 0.1)


def test_input_validation():
    A = forward_matrix(CFG, 5)
    with pytest.raises(ValueError):
        maxent_solve(np.ones(3) / 3, A, 0.1)
    with pytest.raises(ValueError):
        maxent_solve(np.ones(6) / 6, A, -1.0)


def test_large_lambda_maximises_entropy():
    truth = make_distribution("poisson", 2.0, tail=1e-8)
    A = forward_matrix(CFG, truth.cutoff)
    P = A @ truth.p
    sol = maxent_solve(P, A, 1e3)
    x = sol.x.p

    def H(v):
        v = v[v > 0]
        return -np.sum(v * np.log(v))

    rng = np.random.default_rng(0)
    worse = [H(y) for y in _feasible_perturbations(x, A, rng, 10_000, 0.05)]
    assert max(worse) <= H(x) + 1e-9


@pytest.mark.parametrize("lam", [1e-3, 0.05, 1.0])
def test_direct_optimality_probe(lam):
    truth = make_distribution("poisson", 3.0, tail=1e-8)
    A = forward_matrix(CFG, truth.cutoff)
    rng = np.random.default_rng(3)
    P = rng.multinomial(5000, A @ truth.p) / 5000
    sol = maxent_solve(P, A, lam)
    phi = objective(sol.x.p, P, A, lam)
    others = [objective(y, P, A, lam) for y in _feasible_perturbations(sol.x.p, A, rng, 1000, 0.02)]
    assert min(others) >= phi - 1e-12
    assert np.isfinite(phi)


def test_permuting_detectors_leaves_solution():
    # relabelling detectors leaves P_meas, and therefore the solution, unchanged
    truth = make_distribution("poisson", 4.0, tail=1e-8)
    A = forward_matrix(CFG, truth.cutoff)
    P = A @ truth.p
    a = maxent_solve(P, A, 0.01)
    b = maxent_solve(P.copy(), forward_matrix(DetectorConfig(N=5, eta=1 / 3), truth.cutoff), 0.01)
    assert np.array_equal(a.x.p, b.x.p)


def test_select_lambda_properties():
    truth = make_distribution("poisson", 5.0, tail=1e-10)
    A = forward_matrix(CFG, truth.cutoff)
    P = A @ truth.p
    lam, warn = select_lambda(P, A, 10 ** 12)
    assert lam < 1e-3
    rng = np.random.default_rng(5)
    Pn = rng.multinomial(10 ** 4, P) / 10 ** 4
    lams = [select_lambda(Pn, A, M)[0] for M in (10 ** 4, 5000, 2500)]
    assert lams[0] <= lams[1] <= lams[2]


def test_select_lambda_shot_noise_recovery():
    # single realisations at M = 1e4 scatter around TV ~ 0.035; test the typical case
    truth = make_distribution("poisson", 5.0, tail=1e-10)
    A = forward_matrix(CFG, truth.cutoff)
    M = 10 ** 4
    tvs = []
    for seed in range(20):
        P = np.random.default_rng(seed).multinomial(M, A @ truth.p) / M
        lam, _ = select_lambda(P, A, M)
        tvs.append(total_variation(maxent_solve(P, A, lam).x, truth))
    assert np.median(tvs) < 0.05


def test_default_kmax():
    from scipy.stats import poisson

    K = default_kmax(5 / 3, 1 / 3)
    assert poisson.sf(K, 5.0) < 1e-6 <= poisson.sf(K - 1, 5.0)
    assert default_kmax(0.0, 0.5) == 0


def test_bootstrap_degenerate_and_errors():
    hist = ClickHistogram(np.array([0, 0, 100, 0, 0, 0]))
    sol = reconstruct_with_uncertainty(hist, CFG, B=5, seed=1)
    assert np.allclose(sol.lower, sol.x.p) and np.allclose(sol.upper, sol.x.p)
    with pytest.raises(ValueError):
        reconstruct_with_uncertainty(hist, CFG, B=1)
    with pytest.raises(ValueError):
        reconstruct_with_uncertainty(ClickHistogram(np.zeros(6)), CFG, B=5)


def test_bootstrap_deterministic():
    hist = ClickHistogram(np.array([300, 400, 200, 80, 20, 0]))
    a = reconstruct_with_uncertainty(hist, CFG, B=4, seed=9)
    b = reconstruct_with_uncertainty(hist, CFG, B=4, seed=9)
    assert np.array_equal(a.lower, b.lower) and np.array_equal(a.x.p, b.x.p)


def test_pseudo_inverse_is_unconstrained():
    A = forward_matrix(CFG, 12)
    rng = np.random.default_rng(2)
    P = rng.multinomial(500, A @ make_distribution("poisson", 3.0).padded(13)[:13]) / 500
    x = pseudo_inverse(P, A)
    assert np.allclose(A @ x, P, atol=1e-8)


@given(st.floats(0.2, 8.0), st.sampled_from([1e-4, 1e-2, 0.3, 3.0]))
def test_solution_invariants(mu, lam):
    truth = make_distribution("poisson", mu, tail=1e-9)
    A = forward_matrix(CFG, max(truth.cutoff, 5))
    P = A @ truth.padded(A.shape[1])
    sol = maxent_solve(P, A, lam)
    assert sol.x.p.min() >= 0
    assert sol.norm_residual < 1e-6 and sol.mean_residual < 1e-6
    assert sol.stationarity < 1e-6
