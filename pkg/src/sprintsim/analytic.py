"""Closed-form weak-drive steady state of the lossy Lambda-cavity system.

These are the reference values the dynamics are checked against.  All inputs
are rates in MHz; every output is dimensionless (or MHz for the optimal
coupling) so no 2*pi factors appear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params import PhysicalParams

__all__ = [
    "SteadyStateCoefficients",
    "empty_cavity_t0",
    "cooperativity4C",
    "sprint_coefficients",
    "optimal_kappa_ex",
    "optimal_reflection",
    "polarization_impurity_estimate",
    "reflected_purity",
    "ideal_extractor_efficiency",
    "summary",
]


@dataclass(frozen=True)
class SteadyStateCoefficients:
    t0: float
    r: float
    t: float
    g: float
    gamma: float
    kappa_i: float
    kappa_ex: float

    @property
    def R(self) -> float:
        return self.r * self.r

    @property
    def T(self) -> float:
        return self.t * self.t

    @property
    def loss(self) -> float:
        return 1.0 - self.R - self.T

    @property
    def four_c(self) -> float:
        return cooperativity4C(self.g, self.gamma, self.kappa_i, self.kappa_ex)

    @property
    def Gamma(self) -> float:
        """Cavity-enhanced emission rate into one direction, ``2C*gamma`` (MHz)."""
        return 0.5 * self.four_c * self.gamma


def empty_cavity_t0(kappa_ex: float, kappa_i: float) -> float:
    """Amplitude transmission past the bare cavity (no reflection)."""
    if kappa_ex + kappa_i <= 0.0:
        raise ValueError("kappa_ex + kappa_i must be positive")
    return -(kappa_ex - kappa_i) / (kappa_ex + kappa_i)


def cooperativity4C(g: float, gamma: float, kappa_i: float, kappa_ex: float) -> float:
    """4C = 2 g^2 / ((kappa_i + kappa_ex) gamma)."""
    return 2.0 * g * g / ((kappa_i + kappa_ex) * gamma)


def sprint_coefficients(params: PhysicalParams, g: float | None = None) -> SteadyStateCoefficients:
    """Weak-drive, resonant amplitudes for an atom starting in alpha.

    ``r = kappa_ex/(kappa_ex+kappa_i) * 4C/(4C+1)`` and ``t = t0 + r``.
    """
    g = params.g_mean if g is None else g
    t0 = empty_cavity_t0(params.kappa_ex, params.kappa_i)
    fc = cooperativity4C(g, params.gamma, params.kappa_i, params.kappa_ex)
    r = params.kappa_ex / (params.kappa_ex + params.kappa_i) * fc / (fc + 1.0)
    return SteadyStateCoefficients(t0=t0, r=r, t=t0 + r, g=g, gamma=params.gamma,
                                   kappa_i=params.kappa_i, kappa_ex=params.kappa_ex)


def optimal_kappa_ex(g: float, gamma: float, kappa_i: float) -> float:
    """Fiber coupling that maximises R: ``kappa_i * sqrt(1 + 2 g^2/(kappa_i gamma))``."""
    if kappa_i <= 0.0 or gamma <= 0.0:
        raise ValueError("kappa_i and gamma must be positive")
    return kappa_i * math.sqrt(1.0 + 2.0 * g * g / (kappa_i * gamma))


def optimal_reflection(g: float, gamma: float, kappa_i: float) -> float:
    """r at the optimal coupling, exactly ``(s-1)/(s+1)`` with ``s = kappa_ex/kappa_i``."""
    s = math.sqrt(1.0 + 2.0 * g * g / (kappa_i * gamma))
    return (s - 1.0) / (s + 1.0)


def polarization_impurity_estimate(refractive_index: float) -> float:
    """Overlap of the TM mode with the undesired circular polarization."""
    n = refractive_index
    if not n > 1.0:
        raise ValueError(f"refractive index must exceed 1, got {n}")
    return 0.5 - n * math.sqrt(n * n - 1.0) / (2.0 * n * n - 1.0)


def reflected_purity(n_photons: int) -> float:
    """Purity n/(2n-1) of the reflected (or transmitted) state for n input photons."""
    if int(n_photons) != n_photons or n_photons < 1:
        raise ValueError(f"purity needs an integer photon number >= 1, got {n_photons}")
    n = int(n_photons)
    return n / (2.0 * n - 1.0)


def ideal_extractor_efficiency(kappa_ex: float, kappa_i: float) -> float:
    """1 - (empty-cavity loss): what a lossless extractor behind this cavity would give."""
    return empty_cavity_t0(kappa_ex, kappa_i) ** 2


def summary(params: PhysicalParams) -> dict:
    """All closed-form quantities for a parameter set (JSON-ready)."""
    c = sprint_coefficients(params)
    kopt = optimal_kappa_ex(params.g_mean, params.gamma, params.kappa_i) if params.kappa_i > 0 else None
    out = {
        "4C": c.four_c,
        "t0": c.t0,
        "empty_cavity_loss": 1.0 - c.t0 ** 2,
        "ideal_extractor_efficiency": ideal_extractor_efficiency(params.kappa_ex, params.kappa_i),
        "r": c.r,
        "t": c.t,
        "R": c.R,
        "T": c.T,
        "loss": c.loss,
        "Gamma_MHz": c.Gamma,
        "optimal_kappa_ex": kopt,
        "optimal_r": optimal_reflection(params.g_mean, params.gamma, params.kappa_i) if kopt else None,
        "polarization_impurity_silica": polarization_impurity_estimate(1.45),
        "polarization_impurity_sin": polarization_impurity_estimate(2.0),
        "purity": {str(n): reflected_purity(n) for n in (1, 2, 5, 11)},
    }
    return out
