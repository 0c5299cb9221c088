"""Oracle cross-checks run by ``sprintsim validate``.

Each check returns ``{"name", "passed", "detail"}``.  Sizes are kept small
enough for the suite to finish in a few minutes on one core.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import analytic, fockops
from .detectors import DetectorConfig, click_probability, forward_matrix, sample_click_counts
from .dynamics import CHANNELS, build_model, default_space, evolve_master, run_trajectories, trajectory_statistics
from .params import NumericsConfig, PhysicalParams, PulseSpec
from .reconstruct import maxent_solve

DEFAULT_SEED = 20150701


def _check(name, passed, **detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def check_analytic():
    s = analytic.summary(PhysicalParams())
    ok = round(s["4C"], 2) == 8.24 and round(s["t0"], 4) == -0.7167
    return _check("analytic_values", ok, four_c=s["4C"], t0=s["t0"])


def check_fockops():
    th = fockops.make_distribution("thermal", 2.0)
    sub, _ = fockops.apply_annihilation(th)
    po = fockops.make_distribution("poisson", 5.0)
    ext = fockops.apply_extraction(po)
    ok = abs(sub.mean - 2 * th.mean) < 1e-6 and abs(ext.mean - 4.0067) < 1e-4
    return _check("fock_operators", ok, thermal_subtracted_mean=sub.mean, poisson5_extracted_mean=ext.mean)


def check_click_model(seed, samples=100_000, k_max=12, sigmas=4.0):
    """Inclusion-exclusion P(n|k) against brute-force sampling."""
    cfg = DetectorConfig()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7, 0)))
    worst = 0.0
    for k in range(k_max + 1):
        hist = np.bincount(sample_click_counts(k, cfg, samples, rng), minlength=cfg.live + 1) / samples
        for n in range(cfg.live + 1):
            p = click_probability(n, k, cfg)
            sd = math.sqrt(max(p * (1 - p), 1.0 / samples) / samples)
            worst = max(worst, abs(hist[n] - p) / sd)
    A = forward_matrix(cfg, k_max)
    ok = worst < sigmas and abs(A.sum(axis=0) - 1).max() < 1e-12
    return _check("click_model_vs_sampling", ok, worst_sigma=worst, samples=samples)


def check_empty_cavity():
    """Long square pulse through the empty cavity transmits |t0|^2."""
    p = PhysicalParams().ideal()
    num = NumericsConfig(fock_a=2, fock_b=2)
    pulse = PulseSpec(shape="square", width=4000.0, n_bar=0.05)
    m = build_model(p, pulse, default_space(p, num)).with_coupling(0.0)
    got = evolve_master(m, numerics=num).means["T"] / pulse.n_bar
    want = analytic.empty_cavity_t0(p.kappa_ex, p.kappa_i) ** 2
    return _check("empty_cavity_transmission", abs(got - want) < 1e-3, simulated=got, analytic=want)


def check_trajectories_vs_master(seed, threads=None, n_traj=400, n_bar=1.0):
    """MCWF ensemble means against the Lindblad solution (3 standard errors)."""
    p = PhysicalParams().ideal()
    num = NumericsConfig(n_traj=n_traj, master_seed=seed)
    pulse = replace(PulseSpec(), n_bar=n_bar)
    m = build_model(p, pulse, default_space(p, num))
    me = evolve_master(m, numerics=num).means
    st = trajectory_statistics(run_trajectories(m, numerics=num, threads=threads), pulse.window)
    z = {c: abs(st.means[c] - me[c]) / max(st.sems[c], 1e-12) for c in ("T", "R")}
    total = sum(st.means[c] for c in CHANNELS)
    ok = all(v < 3.0 for v in z.values()) and abs(sum(me.values()) - n_bar) < 1e-3
    return _check("trajectories_vs_master", ok, z=z, master=me, trajectory_total=total, n_traj=n_traj)


def check_maxent_noiseless():
    """Exact click probabilities of Poisson(5) map back to Poisson(5)."""
    cfg = DetectorConfig()
    truth = fockops.make_distribution("poisson", 5.0, tail=1e-10)
    A = forward_matrix(cfg, truth.cutoff)
    sol = maxent_solve(A @ truth.p, A, 0.0)
    tv = fockops.total_variation(sol.x, truth)
    return _check("maxent_noiseless", tv < 0.02 and sol.converged, tv=tv)


def run_checks(seed=None, threads=None) -> list:
    seed = DEFAULT_SEED if seed is None else int(seed)
    return [
        check_analytic(),
        check_fockops(),
        check_click_model(seed),
        check_maxent_noiseless(),
        check_empty_cavity(),
        check_trajectories_vs_master(seed, threads),
    ]
