"""Driven atom-cavity dynamics: Lindblad integration and quantum-jump trajectories.

The coherent input enters as a c-number drive on mode a; the transmitted
output is photon-counted through ``T = eps(t) - sqrt(2 kappa_ex) a``, so the
jump records directly give transmitted and reflected click times.

Units: time in ns, rates in rad/ns, ``eps`` in sqrt(photons/ns).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import _kernels
from .hilbert import (
    AtomLevelSet,
    CompositeSpace,
    annihilation_op,
    basis_state,
    identity,
    number_op,
    projector,
    transition_op,
)
from .params import NumericsConfig, PhysicalParams, PulseSpec, rate_per_ns

__all__ = [
    "CHANNELS",
    "PORT_CHANNELS",
    "NumericalError",
    "ModelOperators",
    "FluxSeries",
    "TrajectoryRecord",
    "TrajectoryStatistics",
    "default_space",
    "build_model",
    "fine_dt",
    "evolve_master",
    "run_trajectories",
    "trajectory_statistics",
    "trajectory_seed",
]

CHANNELS = ("T", "R", "LossA", "LossB", "SpontAlpha", "SpontBeta", "SpontDark")
CH = {name: i for i, name in enumerate(CHANNELS)}
PORT_CHANNELS = {"T": 0, "R": 1}
_PROP_BLOCK_BYTES = 96 * 2 ** 20


class NumericalError(RuntimeError):
    """Integration failed (step-size instability, truncation non-convergence)."""


def default_space(params: PhysicalParams, numerics: NumericsConfig | None = None) -> CompositeSpace:
    numerics = numerics or NumericsConfig()
    levels = AtomLevelSet(e1=params.multilevel.enabled, dark=params.branching.b_dark > 0.0)
    return CompositeSpace(levels, numerics.fock_a, numerics.fock_b)


@dataclass
class ModelOperators:
    """Hamiltonian pieces and ordered jump operators.

    ``H(t) = H0 + g * Hg + eps(t) * Hd`` with ``g`` in rad/ns.  Because the T
    jump operator carries the c-number ``eps``, ``Hd`` is half of the physical
    drive ``i sqrt(2 kappa_ex) (a^dag - a)``; the dissipator supplies the rest.
    ``jumps`` lists
    ``(channel, operator)`` for every channel except T, whose operator is
    ``eps(t) * 1 - K_T``.  Several operators may share a channel label (decay
    from e0 and from e1 into the same ground state).
    """

    space: CompositeSpace
    params: PhysicalParams
    pulse: PulseSpec
    g: float
    H0: sp.csr_matrix
    Hg: sp.csr_matrix
    Hd: sp.csr_matrix
    K_T: sp.csr_matrix
    jumps: list = field(default_factory=list)

    @property
    def g_rad(self) -> float:
        return rate_per_ns(self.g)

    def hamiltonian(self, t: float, g: float | None = None) -> sp.csr_matrix:
        g_rad = self.g_rad if g is None else rate_per_ns(g)
        eps = float(self.pulse.envelope(t))
        return (self.H0 + g_rad * self.Hg + eps * self.Hd).tocsr()

    def jump_operators(self, t: float) -> list:
        eps = float(self.pulse.envelope(t))
        out = [("T", (eps * identity(self.space) - self.K_T).tocsr())]
        out.extend(self.jumps)
        return out

    def with_coupling(self, g: float) -> "ModelOperators":
        """Same operators at another coupling; ``g=0`` is the empty cavity."""
        return replace(self, g=float(g))

    def with_pulse(self, pulse: PulseSpec) -> "ModelOperators":
        return replace(self, pulse=pulse)

    def generator_parts(self):
        """``dA0, dAg, dE`` with ``d psi/dt = (dA0 + g dAg + eps dE - eps^2/2) psi``."""
        static = sum((op.conj().T @ op for _, op in self.jumps), sp.csr_matrix(self.H0.shape, dtype=complex))
        KdK = self.K_T.conj().T @ self.K_T
        dA0 = -1j * self.H0 - 0.5 * (static + KdK)
        dAg = -1j * self.Hg
        dE = -1j * self.Hd + 0.5 * (self.K_T + self.K_T.conj().T)
        return dA0.tocsr(), dAg.tocsr(), dE.tocsr()

    def max_rate(self, g: float | None = None) -> float:
        """Largest configured angular rate (rad/ns) that the step must resolve."""
        p = self.params
        g = self.g if g is None else g
        rates = [g, p.kappa_i + p.kappa_ex, p.gamma, abs(p.delta_c), abs(p.delta_a), p.rayleigh_h]
        if self.space.levels.e1:
            rates.append(abs(p.delta_a + p.multilevel.delta_e1))
            rates.append(g * max(abs(p.multilevel.c1_plus), abs(p.multilevel.c1_minus)))
        return rate_per_ns(max(rates))


def build_model(params: PhysicalParams, pulse: PulseSpec, space: CompositeSpace | None = None,
                g: float | None = None) -> ModelOperators:
    """Operators for the Lambda system (plus dark level and, if enabled, e1)."""
    space = space or default_space(params)
    lv = space.levels
    if params.branching.b_dark > 0.0 and not lv.dark:
        raise ValueError("branching.b_dark > 0 needs a space with the dark level")
    if params.multilevel.enabled and not lv.e1:
        raise ValueError("multilevel enabled but the space has no e1 level")
    a = annihilation_op(space, "a")
    b = annihilation_op(space, "b")
    ad, bd = a.conj().T, b.conj().T
    kex = rate_per_ns(params.kappa_ex)
    ki = rate_per_ns(params.kappa_i)
    gam = rate_per_ns(params.gamma)

    H0 = rate_per_ns(params.delta_c) * (number_op(space, "a") + number_op(space, "b"))
    H0 = H0 + rate_per_ns(params.delta_a) * projector(space, "e0")
    if params.rayleigh_h:
        H0 = H0 + rate_per_ns(params.rayleigh_h) * (ad @ b + bd @ a)

    s_ae = transition_op(space, "e0", "alpha")
    s_be = transition_op(space, "e0", "beta")
    p = params.p_imp
    cpl = math.sqrt(1.0 - p) * (ad @ s_ae + bd @ s_be) + math.sqrt(p) * (ad @ s_be + bd @ s_ae)
    Hg = cpl + cpl.conj().T
    # D[eps - K] already carries (i/2) eps (K^dag - K); the explicit term supplies
    # the other half of the drive i sqrt(2 kappa_ex) eps (a^dag - a)
    Hd = 0.5j * math.sqrt(2.0 * kex) * (ad - a)
    K_T = math.sqrt(2.0 * kex) * a

    jumps = [("R", math.sqrt(2.0 * kex) * b)]
    if ki > 0.0:
        jumps += [("LossA", math.sqrt(2.0 * ki) * a), ("LossB", math.sqrt(2.0 * ki) * b)]
    jumps += _spontaneous(space, params, "e0", gam)

    model = ModelOperators(space=space, params=params, pulse=pulse,
                           g=params.g_mean if g is None else float(g),
                           H0=H0.tocsr(), Hg=Hg.tocsr(), Hd=Hd.tocsr(), K_T=K_T.tocsr(),
                           jumps=[(c, op.tocsr()) for c, op in jumps])
    if params.multilevel.enabled:
        from .multilevel import extend_model

        model = extend_model(model, params.multilevel)
    return model


def _spontaneous(space, params, level, gam):
    br = params.branching
    out = []
    for name, target, frac in (("SpontAlpha", "alpha", br.b_alpha), ("SpontBeta", "beta", br.b_beta),
                               ("SpontDark", "dark", br.b_dark)):
        if frac > 0.0:
            out.append((name, math.sqrt(2.0 * gam * frac) * transition_op(space, level, target)))
    return out


def fine_dt(model: ModelOperators, numerics: NumericsConfig | None = None, g_max: float | None = None) -> float:
    if numerics is not None and numerics.dt is not None:
        return float(numerics.dt)
    return 0.01 / model.max_rate(g_max)


def _grid(pulse: PulseSpec, dt: float) -> tuple[float, float, int]:
    t0, t1 = pulse.window
    n = max(int(math.ceil((t1 - t0) / dt - 1e-9)), 1)
    return t0, (t1 - t0) / n, n


def _pulse_array(pulse: PulseSpec) -> np.ndarray:
    t0, t1 = pulse.window
    if pulse.shape == "gaussian":
        return np.array([0.0, pulse.amplitude, 1.0 / (4.0 * pulse.sigma ** 2), t0, t1 + 1e-9])
    return np.array([1.0, pulse.amplitude, 0.0, 0.0, pulse.width])


def _union_csr(*mats):
    pattern = sum((abs(m) for m in mats), sp.csr_matrix(mats[0].shape)).tocsr()
    pattern.sort_indices()
    rows = np.repeat(np.arange(pattern.shape[0]), np.diff(pattern.indptr))
    cols = pattern.indices
    datas = [np.asarray(m.tocsr()[rows, cols]).ravel().astype(np.complex128) for m in mats]
    return pattern.indptr.astype(np.int64), cols.astype(np.int64), datas


# ----------------------------------------------------------------------------
# master equation


@dataclass
class FluxSeries:
    """Per-channel photon flux ``<L^dag L>(t)`` in photons/ns and its integrals."""

    t: np.ndarray
    flux: dict
    means: dict
    trace_drift: float = 0.0

    def cumulative(self, channel: str) -> np.ndarray:
        f = self.flux[channel]
        out = np.zeros_like(f)
        out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(self.t))
        return out

    @property
    def loss(self) -> np.ndarray:
        return self.flux["LossA"] + self.flux["LossB"]

    @property
    def spont(self) -> np.ndarray:
        return self.flux["SpontAlpha"] + self.flux["SpontBeta"] + self.flux["SpontDark"]

    def total_mean(self) -> float:
        return float(sum(self.means.values()))


def evolve_master(model: ModelOperators, pulse: PulseSpec | None = None, numerics: NumericsConfig | None = None,
                  rho0: np.ndarray | None = None, dt: float | None = None, record_every: int = 1) -> FluxSeries:
    """Integrate the Lindblad equation over the pulse window with fixed-step RK4.

    Fluxes are recorded on every grid point and integrated with the trapezoid
    rule.  Raises :class:`NumericalError` if the trace drifts by more than 1e-4.
    """
    if pulse is not None:
        model = model.with_pulse(pulse)
    pulse = model.pulse
    D = model.space.dim
    dA0, dAg, dE = model.generator_parts()
    M = (dA0 + model.g_rad * dAg).tocsr()
    I = sp.identity(D, dtype=complex, format="csr")
    K = model.K_T
    S0 = sp.kron(M, I) + sp.kron(I, M.conj()) + sp.kron(K, K.conj())
    for _, L in model.jumps:
        S0 = S0 + sp.kron(L, L.conj())
    S1 = sp.kron(dE, I) + sp.kron(I, dE.conj()) - sp.kron(K, I) - sp.kron(I, K.conj())
    indptr, indices, (s0, s1) = _union_csr(S0.tocsr(), S1.tocsr())

    # Tr(X rho) = vec(X^T) . vec(rho) for row-major vec
    labels = [c for c in CHANNELS[1:] if any(c == name for name, _ in model.jumps)]
    feats = [(K + K.conj().T).T.toarray().ravel(), (K.conj().T @ K).T.toarray().ravel()]
    for c in labels:
        X = sum(op.conj().T @ op for name, op in model.jumps if name == c)
        feats.append(X.T.toarray().ravel())
    feats = np.ascontiguousarray(np.array(feats, dtype=np.complex128))

    if rho0 is None:
        psi = basis_state(model.space, "alpha")
        rho0 = np.outer(psi, psi.conj())
    rho = np.ascontiguousarray(np.asarray(rho0, dtype=np.complex128).ravel().copy())
    h = dt if dt is not None else fine_dt(model, numerics)
    t0, h, n = _grid(pulse, h)
    out = np.zeros((n + 1, feats.shape[0]))
    trace_idx = np.arange(D, dtype=np.int64) * (D + 1)
    drift = _kernels.run_master(rho, t0, h, n, indptr, indices, s0, s1, _pulse_array(pulse),
                                feats, trace_idx, out)
    if not np.isfinite(drift) or drift > 1e-4:
        raise NumericalError(f"trace drifted by {drift:.3g} (> 1e-4); reduce numerics.dt (now {h:.4g} ns)")

    t = t0 + h * np.arange(n + 1)
    eps = pulse.envelope(t)
    flux = {"T": eps ** 2 - eps * out[:, 0] + out[:, 1]}
    for i, c in enumerate(labels):
        flux[c] = out[:, 2 + i]
    for c in CHANNELS:
        flux.setdefault(c, np.zeros(n + 1))
    means = {c: float(np.trapezoid(f, t)) for c, f in flux.items()}
    sl = slice(None, None, record_every)
    return FluxSeries(t=t[sl], flux={c: f[sl] for c, f in flux.items()}, means=means, trace_drift=float(drift))


# ----------------------------------------------------------------------------
# quantum trajectories


@dataclass
class TrajectoryRecord:
    """Jump events of one trajectory; ``channels`` hold indices into CHANNELS."""

    index: int
    times: np.ndarray
    channels: np.ndarray
    final_level: str
    final_norm: float = 1.0
    g: float | None = None

    def count(self, channel: str) -> int:
        return int(np.count_nonzero(self.channels == CH[channel]))

    def times_of(self, channel: str) -> np.ndarray:
        return self.times[self.channels == CH[channel]]


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Independent stream for trajectory ``index``, fixed by (master_seed, index)."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


def _uniforms(master_seed, indices, n_u):
    out = np.empty((len(indices), n_u))
    for row, idx in enumerate(indices):
        out[row] = np.random.default_rng(trajectory_seed(master_seed, idx)).random(n_u)
    return out


def _propagators(dA, dE, pulse, t0, dt, k0, k1):
    """Fourth-order commutator-free Magnus propagators for steps k0..k1-1."""
    sq3 = math.sqrt(3.0)
    c1, c2 = 0.5 - sq3 / 6.0, 0.5 + sq3 / 6.0
    a1, a2 = (3.0 - 2.0 * sq3) / 12.0, (3.0 + 2.0 * sq3) / 12.0
    D = dA.shape[0]
    eye = np.eye(D)
    out = np.empty((k1 - k0, D, D), dtype=np.complex128)
    for k in range(k0, k1):
        t = t0 + k * dt
        e1 = float(pulse.envelope(t + c1 * dt))
        e2 = float(pulse.envelope(t + c2 * dt))
        G1 = dA + e1 * dE - 0.5 * e1 * e1 * eye
        G2 = dA + e2 * dE - 0.5 * e2 * e2 * eye
        U = scipy.linalg.expm(dt * (a1 * G1 + a2 * G2)) @ scipy.linalg.expm(dt * (a2 * G1 + a1 * G2))
        out[k - k0] = U
    return out


def run_trajectories(model: ModelOperators, pulse: PulseSpec | None = None,
                     numerics: NumericsConfig | None = None, g_values=None,
                     indices=None, threads: int | None = None, max_jumps: int | None = None) -> list:
    """Monte Carlo wavefunction trajectories starting in ``|alpha, 0, 0>``.

    Each trajectory draws its uniforms from ``trajectory_seed(master_seed, i)``
    and writes only its own outputs, so results do not depend on ``threads``
    or on execution order.  With a common coupling the non-Hermitian evolution
    is applied through precomputed step propagators (``numerics.coarse_dt``);
    with per-trajectory couplings (``g_values``, MHz) fixed RK4 steps are used.
    Jump times are refined on ``step/100`` sub-steps.
    """
    numerics = numerics or NumericsConfig()
    if pulse is not None:
        model = model.with_pulse(pulse)
    pulse = model.pulse
    idx = np.arange(numerics.n_traj) if indices is None else np.asarray(indices, dtype=np.int64)
    n = idx.size
    D = model.space.dim
    if g_values is None:
        g_arr = np.full(n, model.g)
    else:
        g_arr = np.asarray(g_values, dtype=float)
        if g_arr.shape != (n,):
            raise ValueError(f"g_values must have one entry per trajectory ({n}), got {g_arr.shape}")
    shared = bool(np.all(g_arr == g_arr[0])) if n else True
    threads = threads or os.cpu_count() or 1

    dA0, dAg, dE = model.generator_parts()
    indptr, indices_csr, (d0, dg, de) = _union_csr(dA0, dAg, dE)
    pulse_arr = _pulse_array(pulse)
    ops = [(-1.0) * model.K_T] + [op for _, op in model.jumps]
    op_channel = np.array([0] + [CH[c] for c, _ in model.jumps], dtype=np.int64)
    J = sp.vstack(ops, format="csr")
    J.sort_indices()
    j_indptr, j_indices = J.indptr.astype(np.int64), J.indices.astype(np.int64)
    j_data = J.data.astype(np.complex128)

    if shared:
        t0, dt, nsteps = _grid(pulse, numerics.coarse_dt)
    else:
        t0, dt, nsteps = _grid(pulse, fine_dt(model, numerics, g_max=float(g_arr.max(initial=0.0))))

    if max_jumps is None:
        max_jumps = int(2.0 * pulse.n_bar + 10.0 * math.sqrt(pulse.n_bar) + 16)
    status = np.zeros(n, dtype=np.int64)
    times, chans, counts, final_psi = _run(model, idx, g_arr, shared, max_jumps, numerics.master_seed,
                                           t0, dt, nsteps, indptr, indices_csr, d0, dg, de, pulse_arr,
                                           j_indptr, j_indices, j_data, len(ops), threads, status)
    redo = np.flatnonzero(status)
    if redo.size:
        sub = run_trajectories(model, None, numerics, g_values=g_arr[redo], indices=idx[redo],
                               threads=threads, max_jumps=4 * max_jumps)
        # rerun keeps the stream: uniforms for index i are a prefix-stable sequence
        by_index = {rec.index: rec for rec in sub}
    else:
        by_index = {}

    levels = model.space.levels.names
    shape = model.space.shape
    records = []
    for row in range(n):
        i = int(idx[row])
        if i in by_index:
            records.append(by_index[i])
            continue
        k = counts[row]
        psi = final_psi[row]
        nrm = float(np.vdot(psi, psi).real)
        pops = (np.abs(psi.reshape(shape)) ** 2).sum(axis=(1, 2))
        records.append(TrajectoryRecord(index=i, times=times[row, :k].copy(),
                                        channels=op_channel[chans[row, :k]],
                                        final_level=levels[int(np.argmax(pops))],
                                        final_norm=nrm, g=float(g_arr[row])))
    return records


def _run(model, idx, g_arr, shared, max_jumps, seed, t0, dt, nsteps, indptr, indices, d0, dg, de, pulse_arr,
         j_indptr, j_indices, j_data, n_ops, threads, status):
    n = idx.size
    D = model.space.dim
    n_u = 2 * max_jumps + 2
    uniforms = _uniforms(seed, idx, n_u)
    g_rad = np.array([rate_per_ns(g) for g in g_arr])
    psi_all = np.zeros((n, D), dtype=np.complex128)
    psi_all[:, model.space.flatten(model.space.levels.index("alpha"), 0, 0)] = 1.0
    thresh = uniforms[:, 0].copy()
    u_pos = np.ones(n, dtype=np.int64)
    n_jumps = np.zeros(n, dtype=np.int64)
    out_times = np.zeros((n, max_jumps))
    out_ops = np.zeros((n, max_jumps), dtype=np.int64)

    chunks = np.array_split(np.arange(n), max(1, min(threads, n)))
    chunks = [(int(c[0]), int(c[-1]) + 1) for c in chunks if c.size]

    def work(lo, hi, k0, k1, props):
        _kernels.run_chunk(lo, hi, k0, k1, t0, dt, props, shared, indptr, indices, d0, dg, de, g_rad,
                           pulse_arr, j_indptr, j_indices, j_data, n_ops, uniforms, psi_all, thresh,
                           u_pos, n_jumps, status, out_times, out_ops)

    if shared:
        dA = (sp.csr_matrix((d0, indices, indptr), shape=(D, D)) +
              g_rad[0] * sp.csr_matrix((dg, indices, indptr), shape=(D, D))).toarray()
        dE = sp.csr_matrix((de, indices, indptr), shape=(D, D)).toarray()
        block = max(1, _PROP_BLOCK_BYTES // (16 * D * D))
        steps = [(k, min(k + block, nsteps)) for k in range(0, nsteps, block)]
    else:
        steps = [(0, nsteps)]
    empty = np.zeros((1, 1, 1), dtype=np.complex128)
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        for k0, k1 in steps:
            props = _propagators(dA, dE, model.pulse, t0, dt, k0, k1) if shared else empty
            list(pool.map(lambda c: work(c[0], c[1], k0, k1, props), chunks))
    return out_times, out_ops, n_jumps, psi_all


# ----------------------------------------------------------------------------
# ensemble statistics


@dataclass
class TrajectoryStatistics:
    """Ensemble summaries of a list of trajectory records.

    ``counts[c]`` holds the per-trajectory jump count of channel ``c``;
    ``g2[port]`` is None where the port saw no photons.  ``joint`` is the
    (t_R, t_T) histogram over records with exactly one R and one T jump.
    """

    n: int
    counts: dict
    means: dict
    sems: dict
    distributions: dict
    g2: dict
    g2_sem: dict
    bin_edges: np.ndarray
    time_hist: dict
    joint: np.ndarray
    joint_pairs: np.ndarray

    def ordering_ratio(self) -> float | None:
        """mass(t_T < t_R) / mass(t_T > t_R) over the single-R single-T records."""
        if self.joint_pairs.size == 0:
            return None
        tr, tt = self.joint_pairs[:, 0], self.joint_pairs[:, 1]
        before = np.count_nonzero(tt < tr)
        after = np.count_nonzero(tt > tr)
        return before / after if after else float("inf")


def _g2(m: np.ndarray):
    m = m.astype(float)
    mean = m.mean()
    if mean <= 0.0:
        return None, None
    g2 = (m * (m - 1.0)).mean() / mean ** 2
    if m.size < 2:
        return g2, None
    # delta method on (<m(m-1)>, <m>)
    x = m * (m - 1.0)
    c = np.cov(np.vstack([x, m])) / m.size
    grad = np.array([1.0 / mean ** 2, -2.0 * x.mean() / mean ** 3])
    return g2, float(np.sqrt(max(grad @ c @ grad, 0.0)))


def trajectory_statistics(records: list, window: tuple[float, float], bin_ns: float = 2.0) -> TrajectoryStatistics:
    if not records:
        raise ValueError("trajectory_statistics needs at least one record")
    n = len(records)
    counts = {c: np.array([r.count(c) for r in records]) for c in CHANNELS}
    means = {c: float(v.mean()) for c, v in counts.items()}
    sems = {c: float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0 for c, v in counts.items()}
    dists = {}
    g2, g2s = {}, {}
    for port in PORT_CHANNELS:
        m = counts[port]
        dists[port] = np.bincount(m, minlength=1) / n
        g2[port], g2s[port] = _g2(m)
    t0, t1 = window
    nb = max(int(math.ceil((t1 - t0) / bin_ns - 1e-9)), 1)
    edges = t0 + bin_ns * np.arange(nb + 1)
    hist = {}
    for port in PORT_CHANNELS:
        ts = np.concatenate([r.times_of(port) for r in records]) if n else np.zeros(0)
        hist[port] = np.histogram(ts, bins=edges)[0]
    pairs = []
    for r in records:
        if r.count("R") == 1 and r.count("T") == 1:
            pairs.append((r.times_of("R")[0], r.times_of("T")[0]))
    pairs = np.array(pairs, dtype=float).reshape(-1, 2)
    joint = np.histogram2d(pairs[:, 0], pairs[:, 1], bins=[edges, edges])[0] if pairs.size else np.zeros((nb, nb))
    return TrajectoryStatistics(n=n, counts=counts, means=means, sems=sems, distributions=dists, g2=g2,
                                g2_sem=g2s, bin_edges=edges, time_hist=hist, joint=joint, joint_pairs=pairs)
