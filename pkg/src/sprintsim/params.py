"""Physical and numerical parameters, unit conventions and config loading.

All rates are configured as ordinary frequencies in MHz and all times in ns.
Time evolution uses angular rates, ``2*pi*nu``; :func:`rate_per_ns` gives the
value in rad/ns that the integrators consume.  Dimensionless formulas (the
cooperativity, steady-state amplitudes) take the raw MHz numbers, since the
``2*pi`` cancels in every ratio.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from scipy.special import erf

__all__ = [
    "ConfigError",
    "Branching",
    "MultilevelSpec",
    "PhysicalParams",
    "PulseSpec",
    "NumericsConfig",
    "load_and_validate",
    "load_document",
    "to_angular",
    "rate_per_ns",
    "serialize",
    "C1_PLUS_RB87",
    "C1_MINUS_RB87",
    "DELTA_E1_RB87",
]

# |<F'=1,0|d|F=1,-+1>| / |<F'=0,0|d|F=1,-+1>| with signs; see
# scripts/derive_multilevel_couplings.py
C1_PLUS_RB87 = -math.sqrt(5.0) / 2.0
C1_MINUS_RB87 = math.sqrt(5.0) / 2.0
# 87Rb 5P3/2 F'=1 - F'=0 splitting, MHz
DELTA_E1_RB87 = 72.2

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class ConfigError(ValueError):
    """Raised when a configuration document or parameter set is invalid."""


def to_angular(rate_MHz: float) -> float:
    """Angular rate in rad/us for a frequency given in MHz."""
    return 2.0 * math.pi * rate_MHz


def rate_per_ns(rate_MHz: float) -> float:
    """Angular rate in rad/ns, the unit used by the integrators."""
    return to_angular(rate_MHz) * 1e-3


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _finite(name: str, value: Any) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    _check(math.isfinite(v), f"{name}: must be finite, got {value!r}")
    return v


@dataclass(frozen=True)
class Branching:
    """Spontaneous-emission branching ratios out of an excited level."""

    b_alpha: float = 1.0 / 3.0
    b_beta: float = 1.0 / 3.0
    b_dark: float = 1.0 / 3.0

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            _check(v >= 0.0, f"branching.{f.name}: must be >= 0, got {v}")
        total = self.b_alpha + self.b_beta + self.b_dark
        _check(abs(total - 1.0) <= 1e-12, f"branching: ratios must sum to 1, got {total!r}")

    @classmethod
    def ideal(cls) -> "Branching":
        return cls(0.5, 0.5, 0.0)


@dataclass(frozen=True)
class MultilevelSpec:
    """Second excited level (F'=1 analog) sharing both ground states.

    ``c1_plus`` scales the mode-a coupling alpha -> e1, ``c1_minus`` the
    mode-b coupling beta -> e1, both relative to the e0 legs.
    """

    enabled: bool = False
    delta_e1: float = DELTA_E1_RB87
    c1_plus: float = C1_PLUS_RB87
    c1_minus: float = C1_MINUS_RB87

    def validate(self, allow_same_sign: bool = False) -> None:
        _finite("multilevel.delta_e1", self.delta_e1)
        for name in ("c1_plus", "c1_minus"):
            v = _finite(f"multilevel.{name}", getattr(self, name))
            _check(abs(v) <= 2.0, f"multilevel.{name}: |c1| must be <= 2, got {v}")
        if self.enabled and not allow_same_sign:
            prod = self.c1_plus * self.c1_minus
            _check(prod < 0.0, f"multilevel: c1_plus*c1_minus must be < 0 when enabled, got {prod}")


@dataclass(frozen=True)
class PhysicalParams:
    """Cavity, atom and imperfection parameters.  Rates in MHz."""

    g_mean: float = 24.0
    g_sd: float = 9.0
    gamma: float = 3.0
    kappa_i: float = 6.6
    kappa_ex: float = 40.0
    delta_c: float = 0.0
    delta_a: float = 0.0
    p_imp: float = 0.04
    multilevel: MultilevelSpec = field(default_factory=MultilevelSpec)
    branching: Branching = field(default_factory=Branching)
    rayleigh_h: float = 0.0

    def validate(self) -> None:
        for name in ("g_mean", "g_sd", "gamma", "kappa_i", "kappa_ex", "rayleigh_h"):
            v = _finite(name, getattr(self, name))
            _check(v >= 0.0, f"{name}: rates must be >= 0, got {v}")
        _check(self.gamma > 0.0, f"gamma: must be > 0, got {self.gamma}")
        _check(self.kappa_i + self.kappa_ex > 0.0,
               f"kappa_i + kappa_ex: must be > 0, got {self.kappa_i + self.kappa_ex}")
        _finite("delta_c", self.delta_c)
        _finite("delta_a", self.delta_a)
        p = _finite("p_imp", self.p_imp)
        _check(0.0 <= p <= 1.0, f"p_imp: must lie in [0, 1], got {p}")
        self.branching.validate()
        self.multilevel.validate()

    @property
    def kappa(self) -> float:
        """Total cavity amplitude decay rate, MHz."""
        return self.kappa_i + self.kappa_ex

    def ideal(self) -> "PhysicalParams":
        """Loss-only three-level version: no impurity, no F'=1, no dark decay."""
        return replace(self, p_imp=0.0, multilevel=replace(self.multilevel, enabled=False),
                       branching=Branching.ideal(), rayleigh_h=0.0)


@dataclass(frozen=True)
class PulseSpec:
    """Input pulse in mode a.

    ``width`` is the FWHM of the photon flux ``|eps(t)|^2`` for a Gaussian
    (centred at t=0) and the duration for a square pulse (starting at t=0).
    The envelope is normalised so that its flux integrates to ``n_bar`` over
    the simulation window.
    """

    shape: str = "gaussian"
    width: float = 85.0
    n_bar: float = 1.0
    t_start: float | None = None
    t_end: float | None = None

    def validate(self) -> None:
        _check(self.shape in ("gaussian", "square"),
               f"pulse.shape: must be 'gaussian' or 'square', got {self.shape!r}")
        w = _finite("pulse.width", self.width)
        _check(w > 0.0, f"pulse.width: must be > 0, got {w}")
        n = _finite("pulse.n_bar", self.n_bar)
        _check(n >= 0.0, f"pulse.n_bar: must be >= 0, got {n}")
        t0, t1 = self.window
        _check(t1 > t0, f"pulse window: t_end must exceed t_start, got [{t0}, {t1}]")
        if self.shape == "square":
            _check(t0 <= 0.0 and t1 >= self.width,
                   f"pulse window [{t0}, {t1}] must contain the square pulse [0, {self.width}]")

    @property
    def window(self) -> tuple[float, float]:
        if self.shape == "gaussian":
            t0 = -3.0 * self.width if self.t_start is None else float(self.t_start)
            t1 = 3.0 * self.width if self.t_end is None else float(self.t_end)
        else:
            t0 = 0.0 if self.t_start is None else float(self.t_start)
            t1 = self.width + 100.0 if self.t_end is None else float(self.t_end)
        return t0, t1

    @property
    def sigma(self) -> float:
        """Standard deviation of the Gaussian flux profile, ns."""
        return self.width * FWHM_TO_SIGMA

    @property
    def amplitude(self) -> float:
        """Peak of eps(t), in sqrt(photons/ns)."""
        if self.n_bar == 0.0:
            return 0.0
        t0, t1 = self.window
        if self.shape == "gaussian":
            s = self.sigma
            norm = s * math.sqrt(math.pi / 2.0) * (erf(t1 / (s * math.sqrt(2.0))) - erf(t0 / (s * math.sqrt(2.0))))
        else:
            norm = self.width
        return math.sqrt(self.n_bar / norm)

    def envelope(self, t):
        """eps(t), real and non-negative; zero outside the window."""
        import numpy as np

        t = np.asarray(t, dtype=float)
        t0, t1 = self.window
        amp = self.amplitude
        if self.shape == "gaussian":
            out = amp * np.exp(-t * t / (4.0 * self.sigma ** 2))
            return np.where((t >= t0) & (t <= t1), out, 0.0)
        return np.where((t >= 0.0) & (t < self.width), amp, 0.0)

    def flux(self, t):
        return self.envelope(t) ** 2


@dataclass(frozen=True)
class NumericsConfig:
    """Truncation, step sizes and Monte Carlo settings.

    ``dt`` (ns) is the fine RK4 step; ``None`` picks ``0.01 / max angular
    rate``.  ``coarse_dt`` is the step of the precomputed propagators used when
    every trajectory shares the same coupling.
    """

    fock_a: int = 4
    fock_b: int = 4
    dt: float | None = None
    coarse_dt: float = 0.5
    n_traj: int = 2000
    master_seed: int = 20150701

    def validate(self) -> None:
        for name in ("fock_a", "fock_b", "n_traj", "master_seed"):
            v = getattr(self, name)
            _check(isinstance(v, int) and not isinstance(v, bool),
                   f"numerics.{name}: must be an integer, got {v!r}")
        _check(self.fock_a >= 2, f"numerics.fock_a: must be >= 2, got {self.fock_a}")
        _check(self.fock_b >= 2, f"numerics.fock_b: must be >= 2, got {self.fock_b}")
        _check(self.n_traj >= 1, f"numerics.n_traj: must be >= 1, got {self.n_traj}")
        _check(0 <= self.master_seed < 2 ** 64,
               f"numerics.master_seed: must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.dt is not None:
            v = _finite("numerics.dt", self.dt)
            _check(v > 0.0, f"numerics.dt: must be > 0, got {v}")
        v = _finite("numerics.coarse_dt", self.coarse_dt)
        _check(v > 0.0, f"numerics.coarse_dt: must be > 0, got {v}")


# ----------------------------------------------------------------------------
# JSON documents

_SECTIONS = ("pulse", "numerics", "detector", "scenario")


def _build(cls, doc: dict, prefix: str, nested: dict | None = None):
    names = {f.name for f in fields(cls)}
    nested = nested or {}
    kwargs = {}
    for key, value in doc.items():
        if key not in names:
            raise ConfigError(f"{prefix}{key}: unknown key")
        if key in nested:
            kwargs[key] = nested[key](value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'document'}: {exc}") from None


def _branching(value) -> Branching:
    if isinstance(value, (list, tuple)):
        _check(len(value) == 3, f"branching: expected 3 ratios, got {len(value)}")
        return Branching(*(_finite(f"branching[{i}]", v) for i, v in enumerate(value)))
    _check(isinstance(value, dict), f"branching: expected an object or a list, got {value!r}")
    b = _build(Branching, value, "branching.")
    return Branching(*(_finite(f"branching.{f.name}", getattr(b, f.name)) for f in fields(b)))


def _multilevel(value) -> MultilevelSpec:
    _check(isinstance(value, dict), f"multilevel: expected an object, got {value!r}")
    spec = _build(MultilevelSpec, value, "multilevel.")
    _check(isinstance(spec.enabled, bool), f"multilevel.enabled: expected a boolean, got {spec.enabled!r}")
    return spec


def load_document(source: str | Path | dict | None) -> dict:
    """Parse a JSON config given as a dict, a JSON string or a file path."""
    if source is None:
        return {}
    if isinstance(source, dict):
        doc = source
    elif isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    else:
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    return doc


def load_and_validate(source=None) -> tuple[PhysicalParams, PulseSpec, NumericsConfig]:
    """Load a config document and return validated parameter objects.

    Absent keys take their defaults; unknown keys are rejected.  The optional
    ``detector`` and ``scenario`` sections are accepted here and parsed by
    their own modules.
    """
    doc = dict(load_document(source))
    sections = {name: doc.pop(name, {}) for name in _SECTIONS}
    for name, sec in sections.items():
        _check(isinstance(sec, dict), f"{name}: expected an object, got {sec!r}")
    phys = _build(PhysicalParams, doc, "", {"multilevel": _multilevel, "branching": _branching})
    pulse = _build(PulseSpec, sections["pulse"], "pulse.")
    numerics = _build(NumericsConfig, sections["numerics"], "numerics.")
    phys.validate()
    pulse.validate()
    numerics.validate()
    return phys, pulse, numerics


def serialize(phys: PhysicalParams, pulse: PulseSpec | None = None,
              numerics: NumericsConfig | None = None) -> dict:
    """Inverse of :func:`load_and_validate` (JSON-ready dict)."""
    doc = asdict(phys)
    if pulse is not None:
        doc["pulse"] = asdict(pulse)
    if numerics is not None:
        doc["numerics"] = asdict(numerics)
    return doc
