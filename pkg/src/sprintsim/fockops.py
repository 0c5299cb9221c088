"""Photon-number distributions and the single-mode subtraction/extraction maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _stats

__all__ = [
    "PhotonNumberDistribution",
    "make_distribution",
    "apply_annihilation",
    "apply_extraction",
    "stats",
    "thin",
    "shift",
    "total_variation",
]

TAIL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PhotonNumberDistribution:
    """Probabilities ``p[n]`` for n = 0..K."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("distribution must be a non-empty 1-d array")
        if np.any(p < -1e-15):
            raise ValueError("negative probability")
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "p", p)

    @property
    def cutoff(self) -> int:
        return self.p.size - 1

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.p.size)

    @property
    def mean(self) -> float:
        return float(self.n @ self.p)

    def padded(self, size: int) -> np.ndarray:
        out = np.zeros(max(size, self.p.size))
        out[: self.p.size] = self.p
        return out


def _normalized(p: np.ndarray) -> PhotonNumberDistribution:
    p = np.asarray(p, dtype=float)
    return PhotonNumberDistribution(p / p.sum())


def make_distribution(kind: str, parameter, tail: float = TAIL_TOL) -> PhotonNumberDistribution:
    """Poisson/thermal with the given mean, or a Fock state ``|parameter>``.

    The cutoff is the smallest K whose discarded tail is below ``tail``.
    """
    if kind == "fock":
        n = int(parameter)
        if n != parameter or n < 0:
            raise ValueError(f"fock state needs a non-negative integer, got {parameter!r}")
        p = np.zeros(n + 1)
        p[n] = 1.0
        return PhotonNumberDistribution(p)
    mu = float(parameter)
    if not mu >= 0.0:
        raise ValueError(f"mean photon number must be >= 0, got {parameter!r}")
    if mu == 0.0:
        return PhotonNumberDistribution(np.array([1.0]))
    if kind == "poisson":
        k = int(_stats.poisson.isf(tail, mu)) + 1
        while _stats.poisson.sf(k, mu) >= tail:
            k += 1
        p = _stats.poisson.pmf(np.arange(k + 1), mu)
    elif kind == "thermal":
        q = mu / (1.0 + mu)
        # P(n > K) = q^(K+1)
        k = max(int(np.ceil(np.log(tail) / np.log(q))) - 1, 0)
        p = (1.0 - q) * q ** np.arange(k + 1)
    else:
        raise ValueError(f"unknown distribution kind {kind!r}")
    return _normalized(p)


def apply_annihilation(dist: PhotonNumberDistribution) -> tuple[PhotonNumberDistribution, float]:
    """Post-selected action of ``a``: ``p'_m ~ (m+1) p_{m+1}``.

    Returns the renormalised distribution and the unnormalised branch weight
    ``<n>`` (success probability up to the subtraction strength).
    """
    w = dist.n[1:] * dist.p[1:]
    weight = float(w.sum())
    if weight <= 0.0:
        raise ValueError("annihilation of the vacuum: no n >= 1 component")
    return _normalized(w), weight


def apply_extraction(dist: PhotonNumberDistribution) -> PhotonNumberDistribution:
    """Deterministic extraction ``s = |0><0| + sum_n |n-1><n|``."""
    p = dist.p
    if p.size == 1:
        return PhotonNumberDistribution(p.copy())
    out = p[1:].copy()
    out[0] += p[0]
    return PhotonNumberDistribution(out)


def stats(dist: PhotonNumberDistribution, g2: bool = True) -> tuple[float, float, float | None]:
    """Mean, variance and ``<n(n-1)>/<n>^2`` by direct summation."""
    n = dist.n
    mean = float(n @ dist.p)
    var = float(((n - mean) ** 2) @ dist.p)
    if not g2:
        return mean, var, None
    if mean <= 0.0:
        raise ValueError("g2 undefined for zero mean")
    return mean, var, float((n * (n - 1)) @ dist.p) / mean ** 2


def shift(dist: PhotonNumberDistribution, k: int = 1) -> PhotonNumberDistribution:
    """Apply the extraction map ``k`` times."""
    for _ in range(k):
        dist = apply_extraction(dist)
    return dist


def thin(dist: PhotonNumberDistribution, efficiency: float) -> PhotonNumberDistribution:
    """Binomial thinning: each photon survives independently with ``efficiency``."""
    K = dist.cutoff
    out = np.zeros(K + 1)
    for n, pn in enumerate(dist.p):
        if pn:
            out[: n + 1] += pn * _stats.binom.pmf(np.arange(n + 1), n, efficiency)
    return _normalized(out)


def total_variation(p, q) -> float:
    """TV distance between two probability vectors (zero-padded to equal length)."""
    p = p.p if isinstance(p, PhotonNumberDistribution) else np.asarray(p, float)
    q = q.p if isinstance(q, PhotonNumberDistribution) else np.asarray(q, float)
    m = max(p.size, q.size)
    pp = np.zeros(m)
    qq = np.zeros(m)
    pp[: p.size] = p
    qq[: q.size] = q
    return 0.5 * float(np.abs(pp - qq).sum())
