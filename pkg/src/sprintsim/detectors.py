"""Cascade of non-photon-number-resolving detectors on each output port.

Every photon is detected with total efficiency ``eta`` and lands on one of
``N`` balanced detectors.  A detector registers at most one click per dead
time; ``N_d`` detectors are dead from the start of the pulse.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "DetectorConfig",
    "ClickHistogram",
    "ClickRecord",
    "click_probability",
    "forward_matrix",
    "simulate_clicks",
    "sample_click_counts",
]


@dataclass(frozen=True)
class DetectorConfig:
    N: int = 5
    eta: float = 1.0 / 3.0
    dead_time: float = 60.0
    N_d: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta!r}")
        if not self.dead_time >= 0.0:
            raise ValueError(f"dead_time must be >= 0, got {self.dead_time!r}")
        if int(self.N_d) != self.N_d or not 0 <= self.N_d <= self.N:
            raise ValueError(f"N_d must be an integer in [0, N], got {self.N_d!r}")

    @property
    def live(self) -> int:
        return int(self.N - self.N_d)


@dataclass(frozen=True, eq=False)
class ClickHistogram:
    """Number of repetitions ``counts[n]`` that produced ``n`` clicks."""

    counts: np.ndarray
    port: str = ""

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("counts must be a non-empty 1-d array")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise ValueError("counts must be non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def M(self) -> int:
        return int(self.counts.sum())

    @property
    def probabilities(self) -> np.ndarray:
        if self.M == 0:
            raise ValueError("empty histogram")
        return self.counts / self.M

    @classmethod
    def from_clicks(cls, clicks, n_max: int, port: str = "") -> "ClickHistogram":
        clicks = np.asarray(clicks, dtype=np.int64)
        if clicks.size and clicks.max() > n_max:
            raise ValueError(f"click count {clicks.max()} exceeds n_max={n_max}")
        return cls(np.bincount(clicks, minlength=n_max + 1), port)

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "count"])
        for n, c in enumerate(self.counts):
            w.writerow([n, int(c)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, port: str = "") -> "ClickHistogram":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("histogram CSV has no rows")
        n = np.array([int(r["n"]) for r in rows])
        out = np.zeros(n.max() + 1, dtype=np.int64)
        out[n] = [int(r["count"]) for r in rows]
        return cls(out, port)


def click_probability(n: int, k: int, cfg: DetectorConfig) -> float:
    """P(n clicks | k photons) by inclusion-exclusion over the clicking detectors.

    ``C(N', n) * sum_i (-1)^(n-i) C(n, i) [1 - eta (1 - (i + N_d)/N)]^k`` with
    ``N' = N - N_d`` live detectors.  The alternating sum is evaluated in exact
    rational arithmetic (``eta`` taken as its exact binary value), so large
    cascades do not suffer cancellation.
    """
    live = cfg.live
    if n < 0 or n > live:
        raise ValueError(f"n must lie in [0, N - N_d] = [0, {live}], got {n}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if n > k:
        return 0.0
    return float(_click_probability_exact(int(n), int(k), Fraction(cfg.eta), int(cfg.N), int(cfg.N_d)))


@lru_cache(maxsize=65536)
def _click_probability_exact(n: int, k: int, eta: Fraction, N: int, N_d: int) -> Fraction:
    s = Fraction(0)
    for i in range(n + 1):
        q = 1 - eta * (1 - Fraction(i + N_d, N))
        s += (-1) ** (n - i) * math.comb(n, i) * q ** k
    return math.comb(N - N_d, n) * s


def forward_matrix(cfg: DetectorConfig, K_max: int) -> np.ndarray:
    """``A[n, k] = P(n | k)`` for n = 0..N-N_d and k = 0..K_max."""
    if K_max < 0:
        raise ValueError(f"K_max must be >= 0, got {K_max}")
    return np.array([[click_probability(n, k, cfg) for k in range(K_max + 1)]
                     for n in range(cfg.live + 1)])


def sample_click_counts(k: int, cfg: DetectorConfig, samples: int, rng: np.random.Generator,
                        chunk: int = 200_000) -> np.ndarray:
    """Brute-force clicks for ``k`` photons, no intra-pulse dead time.

    Each photon is detected with probability ``eta`` on a uniformly random
    detector; detectors ``0..N_d-1`` are dead.  Returns the number of distinct
    live detectors hit, per sample.
    """
    out = np.empty(samples, dtype=np.int64)
    for lo in range(0, samples, chunk):
        m = min(chunk, samples - lo)
        if k == 0:
            out[lo:lo + m] = 0
            continue
        det = rng.random((m, k)) < cfg.eta
        where = rng.integers(0, cfg.N, size=(m, k))
        hit = np.zeros((m, cfg.N + 1), dtype=bool)
        rows = np.repeat(np.arange(m), k)
        hit[rows, np.where(det, where, cfg.N).ravel()] = True
        out[lo:lo + m] = hit[:, cfg.N_d:cfg.N].sum(axis=1)
    return out


@dataclass
class ClickRecord:
    """Registered clicks of one repetition on one port."""

    times: np.ndarray
    detectors: np.ndarray

    @property
    def n_clicks(self) -> int:
        return int(self.times.size)

    @property
    def n_detectors(self) -> int:
        """Distinct detectors that fired: the quantity the click formula describes."""
        return int(np.unique(self.detectors).size)


def simulate_clicks(photon_times, cfg: DetectorConfig, seed: int) -> list:
    """Apply efficiency, random routing and per-detector dead time to photon arrivals.

    ``photon_times`` is a sequence (one entry per repetition) of arrival-time
    arrays in ns.  Repetition ``i`` uses its own stream derived from
    ``(seed, i)``.  Returns one :class:`ClickRecord` per repetition.
    """
    out = []
    for i, times in enumerate(photon_times):
        t = np.sort(np.asarray(times, dtype=float))
        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(i,)))
        survive = rng.random(t.size) < cfg.eta
        where = rng.integers(0, cfg.N, size=t.size)
        last = np.full(cfg.N, -np.inf)
        ct, cd = [], []
        for tj, ok, d in zip(t, survive, where):
            if not ok or d < cfg.N_d:
                continue
            if tj - last[d] < cfg.dead_time:
                continue
            last[d] = tj
            ct.append(tj)
            cd.append(d)
        out.append(ClickRecord(np.array(ct, dtype=float), np.array(cd, dtype=np.int64)))
    return out
