"""Second excited level (F'=1 analog) and its effect on the extraction efficiency.

The e1 level is coupled to both ground states through the same cavity modes
as e0, with relative strengths ``c1_plus`` (alpha, mode a) and ``c1_minus``
(beta, mode b).  When the products of the two legs have opposite signs for e0
and e1 the Raman amplitudes through the two levels cancel near resonance.

Detuning convention for scans: ``delta`` is the offset of probe and cavity
from the e0 line towards e1, so the atom sees ``delta_a = -delta`` and e1 sits
at ``delta_e1 - delta``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .hilbert import AtomLevelSet, CompositeSpace, annihilation_op, projector, transition_op
from .params import MultilevelSpec, NumericsConfig, PhysicalParams, PulseSpec, rate_per_ns

__all__ = [
    "MultilevelSpec",
    "extend_model",
    "weak_drive_efficiency",
    "DetuningScan",
    "detuning_scan",
]

# weak, long probe: flux far below the cavity-enhanced rate
WEAK_PROBE = PulseSpec(shape="square", width=600.0, n_bar=0.01)


def extend_model(model, spec: MultilevelSpec, allow_same_sign: bool = False):
    """Add e1 (energy, couplings, decay channels) to a base model.

    ``allow_same_sign`` bypasses the opposite-sign check, for constructive
    interference studies.
    """
    from .dynamics import _spontaneous

    spec.validate(allow_same_sign=allow_same_sign)
    space = model.space
    if not space.levels.e1:
        raise ValueError("extend_model needs a space that includes the e1 level")
    p = model.params
    a = annihilation_op(space, "a")
    b = annihilation_op(space, "b")
    ad, bd = a.conj().T, b.conj().T
    s_a1 = transition_op(space, "e1", "alpha")
    s_b1 = transition_op(space, "e1", "beta")
    q = p.p_imp
    cpl = spec.c1_plus * (math.sqrt(1.0 - q) * ad @ s_a1 + math.sqrt(q) * bd @ s_a1)
    cpl = cpl + spec.c1_minus * (math.sqrt(1.0 - q) * bd @ s_b1 + math.sqrt(q) * ad @ s_b1)
    H0 = model.H0 + rate_per_ns(p.delta_a + spec.delta_e1) * projector(space, "e1")
    Hg = model.Hg + cpl + cpl.conj().T
    jumps = list(model.jumps) + [(c, op.tocsr()) for c, op in
                                 _spontaneous(space, p, "e1", rate_per_ns(p.gamma))]
    return replace(model, H0=H0.tocsr(), Hg=Hg.tocsr(), jumps=jumps)


def weak_drive_efficiency(params: PhysicalParams, spec: MultilevelSpec | None = None,
                          probe: PulseSpec = WEAK_PROBE, fock: int = 1,
                          allow_same_sign: bool = False) -> float:
    """Reflected photons per input photon from a master-equation run.

    ``spec=None`` gives the three-level value.  A weak probe keeps at most one
    photon in the cavity, so ``fock=1`` is exact to first order in the flux.
    """
    from .dynamics import build_model, evolve_master

    base = replace(params, multilevel=replace(params.multilevel, enabled=False))
    levels = AtomLevelSet(e1=spec is not None, dark=params.branching.b_dark > 0.0)
    space = CompositeSpace(levels, fock, fock)
    model = build_model(base, probe, space)
    if spec is not None:
        model = extend_model(model, spec, allow_same_sign=allow_same_sign)
    flux = evolve_master(model, numerics=NumericsConfig(fock_a=fock, fock_b=fock))
    return flux.means["R"] / probe.n_bar


@dataclass
class DetuningScan:
    """Efficiency with e1 on a grid of probe detunings (MHz).

    ``baseline`` is the three-level efficiency on resonance, the operating
    point the detuning is meant to restore.  ``three_level`` holds the
    three-level efficiency at each detuning when requested (else None).
    """

    detuning: np.ndarray
    efficiency: np.ndarray
    baseline: float
    three_level: np.ndarray | None = None

    @property
    def degradation(self) -> np.ndarray:
        return 1.0 - self.efficiency / self.baseline

    def interior_minimum(self) -> bool:
        i = int(np.argmin(self.degradation))
        return 0 < i < self.detuning.size - 1

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["detuning_MHz", "efficiency", "degradation"])
        for d, e, g in zip(self.detuning, self.efficiency, self.degradation):
            w.writerow([repr(float(d)), repr(float(e)), repr(float(g))])
        return buf.getvalue()


def _detuned(params: PhysicalParams, delta: float) -> PhysicalParams:
    return replace(params, delta_a=params.delta_a - delta)


def detuning_scan(params: PhysicalParams, spec: MultilevelSpec, grid, probe: PulseSpec = WEAK_PROBE,
                  allow_same_sign: bool = False, three_level: bool = False) -> DetuningScan:
    """Weak-drive efficiency versus probe detuning.

    Degradation is ``1 - eff(delta) / eff_3level(0)``.  A disabled spec
    evaluates the three-level model on the grid instead.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("detuning grid must be non-empty")
    base = weak_drive_efficiency(params, None, probe)
    if spec.enabled:
        eff = [weak_drive_efficiency(_detuned(params, d), spec, probe, allow_same_sign=allow_same_sign)
               for d in grid]
    else:
        eff = [base if d == 0.0 else weak_drive_efficiency(_detuned(params, d), None, probe) for d in grid]
    local = None
    if three_level:
        local = np.array([weak_drive_efficiency(_detuned(params, d), None, probe) for d in grid])
    return DetuningScan(detuning=grid, efficiency=np.array(eff), baseline=base, three_level=local)
