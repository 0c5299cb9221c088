"""Maximum-entropy inversion of click statistics into photon-number distributions.

Minimises ``Phi[x] = ||A x - P||^2 + lam^2 sum x ln x`` over the simplex with
the mean-click constraint ``sum_n n (A x)_n = sum_n n P_n``.  The problem is
solved through its smooth convex dual in ``w`` (one multiplier per click
number) and ``theta`` (the mean constraint):

    G(w, theta) = logsumexp(A^T w + theta c) - w.P - theta m + lam^2/4 |w|^2,

with ``c_k = sum_n n A[n, k]`` and ``m = sum_n n P_n``.  The primal solution is
``x = softmax(A^T w + theta c)`` and the fit residual is ``A x - P = -lam^2 w / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats as _stats
from scipy.special import logsumexp, softmax

from .detectors import ClickHistogram, DetectorConfig, forward_matrix
from .fockops import PhotonNumberDistribution

__all__ = [
    "MaxEntSolution",
    "InfeasibleMeanError",
    "maxent_solve",
    "select_lambda",
    "default_kmax",
    "reconstruct_with_uncertainty",
    "pseudo_inverse",
    "objective",
]

LAMBDA_RANGE = (1e-6, 1e2)
ENTROPY_FLOOR = 1e-12


class InfeasibleMeanError(ValueError):
    """The measured mean click number is outside what A can produce on the simplex."""


@dataclass
class MaxEntSolution:
    x: PhotonNumberDistribution
    lam: float
    chi2: float
    norm_residual: float
    mean_residual: float
    stationarity: float
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    converged: bool = True
    iterations: int = 0
    lambda_warning: bool = False
    extras: dict = field(default_factory=dict)

    def report(self) -> dict:
        return {
            "lambda": self.lam,
            "chi2": self.chi2,
            "norm_residual": self.norm_residual,
            "mean_residual": self.mean_residual,
            "stationarity": self.stationarity,
            "converged": self.converged,
            "iterations": self.iterations,
            "lambda_warning": self.lambda_warning,
            **self.extras,
        }


def objective(x, P, A, lam: float) -> float:
    """Phi[x] with 0 ln 0 = 0."""
    x = np.asarray(x, float)
    r = A @ x - P
    pos = x > 0
    return float(r @ r + lam ** 2 * np.sum(x[pos] * np.log(x[pos])))


def _stationarity(x, P, A, lam, c):
    """Natural residual of the KKT conditions on the simplex with the mean constraint."""
    g = 2.0 * A.T @ (A @ x - P) + lam ** 2 * (np.log(np.maximum(x, ENTROPY_FLOOR)) + 1.0)
    sup = x > 1e-9
    B = np.vstack([np.ones(sup.sum()), c[sup]]).T
    nu = np.linalg.lstsq(B, g[sup], rcond=None)[0]
    s = g - nu[0] - nu[1] * c
    return float(np.max(np.abs(np.minimum(x, s))))


def _solution(x, P, A, lam, c, m, it, converged):
    x = np.clip(x, 0.0, None)
    x = x / x.sum()
    r = A @ x - P
    return MaxEntSolution(
        x=PhotonNumberDistribution(x), lam=float(lam), chi2=float(r @ r),
        norm_residual=abs(float(x.sum()) - 1.0), mean_residual=abs(float(c @ x) - m),
        stationarity=_stationarity(x, P, A, lam, c), converged=converged, iterations=it)


def maxent_solve(P_meas, A, lam: float, tol: float = 1e-12, max_iter: int = 500) -> MaxEntSolution:
    """Regularised inversion for a fixed ``lam``.

    ``lam = 0`` is taken as the small-``lam`` limit, i.e. the maximum-entropy
    member of the least-squares set.  Raises :class:`InfeasibleMeanError` when
    the measured mean cannot be reached.
    """
    P = np.asarray(P_meas, dtype=float)
    A = np.asarray(A, dtype=float)
    if P.ndim != 1 or A.ndim != 2 or A.shape[0] != P.size:
        raise ValueError(f"shape mismatch: A {A.shape}, P_meas {P.shape}")
    if np.any(P < 0) or abs(P.sum() - 1.0) > 1e-9:
        raise ValueError("P_meas must be a probability vector")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    n = np.arange(A.shape[0])
    c = n @ A
    m = float(n @ P)
    K = A.shape[1]
    scale = max(c.max() - c.min(), 1.0)
    if m < c.min() - 1e-12 * scale or m > c.max() + 1e-12 * scale:
        raise InfeasibleMeanError(f"measured mean {m:.6g} clicks outside reachable range "
                                  f"[{c.min():.6g}, {c.max():.6g}] of A")
    # boundary means force x onto the extreme columns
    for edge in (c.min(), c.max()):
        if abs(m - edge) <= 1e-12 * scale and c.max() > c.min():
            x = np.where(np.isclose(c, edge, rtol=0, atol=1e-12 * scale), 1.0, 0.0)
            return _solution(x, P, A, lam, c, m, 0, True)

    lam_eff = max(lam, LAMBDA_RANGE[0])
    J = np.vstack([A, c])
    target = np.append(P, m)
    # small lam: follow a path of decreasing lam from a well-conditioned start,
    # rescaling the multipliers by (lam_prev / lam)^2 at each stage
    path = [lam_eff]
    while path[-1] < _CONTINUATION_START:
        path.append(path[-1] * _CONTINUATION_FACTOR)
    z = np.zeros(J.shape[0])
    total = 0
    prev = None
    for lam_k in reversed(path):
        if prev is not None:
            z = z * (prev / lam_k) ** 2
        z, it, converged = _dual_newton(J, target, lam_k, z, tol, max_iter)
        total += it
        prev = lam_k
    x = softmax(J.T @ z)
    sol = _solution(x, P, A, lam, c, m, total, converged)
    if not converged and sol.stationarity < 1e-6 and sol.mean_residual < 1e-6:
        sol.converged = True
    return sol


_CONTINUATION_START = 1e-2
_CONTINUATION_FACTOR = math.sqrt(10.0)


def _dual_newton(J, target, lam, z, tol, max_iter):
    mu = 0.25 * lam ** 2
    reg = np.append(np.full(J.shape[0] - 1, 2.0 * mu), 0.0)

    def G(v):
        return logsumexp(J.T @ v) - v @ target + mu * (v[:-1] @ v[:-1])

    g_val = G(z)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x = softmax(J.T @ z)
        Jx = J @ x
        grad = Jx - target + reg * z
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        H = (J * x) @ J.T - np.outer(Jx, Jx) + np.diag(reg)
        step = -np.linalg.lstsq(H, grad, rcond=1e-14)[0]
        slope = grad @ step
        if slope >= 0:
            step, slope = -grad, -(grad @ grad)
        if -slope < 1e-26:
            # Newton decrement below round-off
            converged = True
            break
        t = 1.0
        while True:
            z_new = z + t * step
            g_new = G(z_new)
            if g_new <= g_val + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if g_new >= g_val:
            break
        z, g_val = z_new, g_new
    return z, it, converged


def select_lambda(P_meas, A, M: int, iterations: int = 40, bounds=LAMBDA_RANGE):
    """Largest ``lam`` whose fit stays within shot noise.

    Bisects ``log lam`` on ``bounds`` for ``||A x(lam) - P||^2 <=
    sum P (1 - P) / M``.  Returns ``(lam, warning)``; ``warning`` is True when
    even the lower bound misses the tolerance.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    P = np.asarray(P_meas, dtype=float)
    tol = float(np.sum(P * (1.0 - P)) / M)
    lo, hi = math.log(bounds[0]), math.log(bounds[1])

    def ok(log_lam):
        return maxent_solve(P, A, math.exp(log_lam)).chi2 <= tol

    if not ok(lo):
        return bounds[0], True
    if ok(hi):
        return bounds[1], False
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return math.exp(lo), False


def default_kmax(mean_clicks: float, eta: float, tail: float = 1e-6) -> int:
    """Smallest K with Poisson(mean_clicks/eta) tail P(k > K) below ``tail``."""
    if eta <= 0.0:
        raise ValueError("eta must be positive to estimate a photon-number cutoff")
    mu = mean_clicks / eta
    if mu <= 0.0:
        return 0
    k = int(_stats.poisson.isf(tail, mu))
    while k > 0 and _stats.poisson.sf(k - 1, mu) < tail:
        k -= 1
    while _stats.poisson.sf(k, mu) >= tail:
        k += 1
    return k


def reconstruct_with_uncertainty(hist: ClickHistogram, cfg: DetectorConfig, B: int = 100,
                                 K_max: int | None = None, lam: float | None = None,
                                 seed: int = 0) -> MaxEntSolution:
    """Point solution plus a 16/84 percentile band from ``B`` multinomial resamples.

    Each resample repeats the whole retrieval, including the choice of
    ``lam`` by :func:`select_lambda`, unless a fixed ``lam`` is given.
    Resample ``b`` uses the stream ``(seed, b)``.
    """
    if B < 2:
        raise ValueError(f"need at least 2 bootstrap rounds, got {B}")
    if hist.M == 0:
        raise ValueError("empty histogram")
    if hist.counts.size > cfg.live + 1 and hist.counts[cfg.live + 1:].any():
        raise ValueError(f"histogram has counts above N - N_d = {cfg.live}")
    counts = np.zeros(cfg.live + 1, dtype=np.int64)
    counts[: min(hist.counts.size, cfg.live + 1)] = hist.counts[: cfg.live + 1]
    P = counts / counts.sum()
    if K_max is None:
        K_max = max(default_kmax(float(np.arange(P.size) @ P), cfg.eta), cfg.live)
    A = forward_matrix(cfg, K_max)

    def solve(Pm):
        if lam is None:
            lam_b, warn_b = select_lambda(Pm, A, hist.M)
        else:
            lam_b, warn_b = lam, False
        s = maxent_solve(Pm, A, lam_b)
        s.lambda_warning = warn_b
        return s

    sol = solve(P)
    draws = np.empty((B, K_max + 1))
    for b in range(B):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(b,)))
        draws[b] = solve(rng.multinomial(hist.M, P) / hist.M).x.p
    sol.lower = np.percentile(draws, 16, axis=0)
    sol.upper = np.percentile(draws, 84, axis=0)
    sol.extras = {"K_max": int(K_max), "bootstrap_rounds": int(B), "M": int(hist.M)}
    return sol


def pseudo_inverse(P_meas, A) -> np.ndarray:
    """Naive ``pinv(A) P`` baseline; not a physical distribution (entries may be negative)."""
    return np.linalg.pinv(np.asarray(A, float)) @ np.asarray(P_meas, float)
