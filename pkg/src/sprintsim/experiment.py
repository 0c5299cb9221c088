"""Scenario harness: trajectories -> detector cascade -> reconstruction -> figure tables.

A scenario sweeps the mean input photon number with and without the atom,
optionally samples the coupling per trajectory (one atom transit per pulse),
and writes plotting-ready CSV tables plus a manifest with seeds, parameters
and file digests.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .detectors import ClickHistogram, DetectorConfig, simulate_clicks
from .dynamics import (
    CHANNELS,
    NumericalError,
    build_model,
    default_space,
    evolve_master,
    run_trajectories,
    trajectory_statistics,
)
from .fockops import PhotonNumberDistribution, make_distribution, shift, thin
from .params import (
    Branching,
    ConfigError,
    NumericsConfig,
    PhysicalParams,
    PulseSpec,
    _build,
    load_and_validate,
    load_document,
    serialize,
)
from .reconstruct import MaxEntSolution, reconstruct_with_uncertainty

__all__ = [
    "Toggles",
    "ScenarioConfig",
    "PointResult",
    "RunArtifacts",
    "sample_coupling",
    "effective_params",
    "truncation_check",
    "run_scenario",
    "write_figures",
    "scalar_summary",
    "compare_with_reference",
    "build_manifest",
    "make_reference",
    "figure_tables",
    "mixture_model",
    "load_scenario",
]

DEFAULT_SWEEP = (0.2, 0.5, 1.0, 2.5, 5.8, 11.3)
DEFAULT_DISTRIBUTION_POINTS = (2.5, 5.8, 11.3)
TRUNCATION_TOL = 0.01


@dataclass(frozen=True)
class Toggles:
    """Independent switches for each modelled effect."""

    atom_present: bool = True
    g_spread: bool = True
    p_imp: bool = True
    multilevel: bool = False
    dark_branching: bool = True
    detector_model: bool = True
    reconstruction: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    base: PhysicalParams = field(default_factory=PhysicalParams)
    pulse: PulseSpec = field(default_factory=PulseSpec)
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    sweep: tuple = DEFAULT_SWEEP
    toggles: Toggles = field(default_factory=Toggles)
    distribution_points: tuple = DEFAULT_DISTRIBUTION_POINTS
    bootstrap: int = 100
    postselect_redetect: bool = False
    truncation_check: bool = True
    bin_ns: float = 2.0

    def __post_init__(self):
        sweep = tuple(float(x) for x in self.sweep)
        if not sweep:
            raise ConfigError("scenario.sweep: must be non-empty")
        if any(not (x >= 0.0 and math.isfinite(x)) for x in sweep):
            raise ConfigError(f"scenario.sweep: values must be finite and >= 0, got {self.sweep}")
        object.__setattr__(self, "sweep", sweep)
        pts = tuple(float(x) for x in self.distribution_points)
        object.__setattr__(self, "distribution_points", pts)
        if self.bootstrap < 2:
            raise ConfigError(f"scenario.bootstrap: must be >= 2, got {self.bootstrap}")
        if not self.bin_ns > 0.0:
            raise ConfigError(f"scenario.bin_ns: must be > 0, got {self.bin_ns}")

    @property
    def n_traj(self) -> int:
        return self.numerics.n_traj

    @property
    def master_seed(self) -> int:
        return self.numerics.master_seed

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, numerics=replace(self.numerics, master_seed=int(seed)))


def load_scenario(source=None) -> ScenarioConfig:
    """Full scenario from a config document (physics, pulse, numerics, detector, scenario)."""
    doc = load_document(source)
    phys, pulse, numerics = load_and_validate(doc)
    det_doc = doc.get("detector", {})
    try:
        detector = _build(DetectorConfig, det_doc, "detector.")
    except ValueError as exc:
        raise ConfigError(f"detector: {exc}") from None
    sc = dict(doc.get("scenario", {}))
    toggles = _build(Toggles, sc.pop("toggles", {}), "scenario.toggles.")
    for f in fields(Toggles):
        if not isinstance(getattr(toggles, f.name), bool):
            raise ConfigError(f"scenario.toggles.{f.name}: expected a boolean")
    for key in ("base", "pulse", "numerics", "detector"):
        if key in sc:
            raise ConfigError(f"scenario.{key}: unknown key")
    sc = {**sc, "toggles": toggles, "base": phys, "pulse": pulse, "numerics": numerics, "detector": detector}
    return _build(ScenarioConfig, sc, "scenario.")


def sample_coupling(g_mean: float, g_sd: float, count: int, seed) -> np.ndarray:
    """Gaussian couplings (MHz) truncated at g >= 1 by redrawing."""
    if g_sd < 0.0:
        raise ValueError(f"g_sd must be >= 0, got {g_sd}")
    if g_sd == 0.0:
        return np.full(count, float(g_mean))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    rng = np.random.default_rng(ss)
    g = rng.normal(g_mean, g_sd, size=count)
    bad = g < 1.0
    while bad.any():
        g[bad] = rng.normal(g_mean, g_sd, size=int(bad.sum()))
        bad = g < 1.0
    return g


def effective_params(config: ScenarioConfig) -> PhysicalParams:
    """Base parameters with the toggled effects switched off."""
    p = config.base
    t = config.toggles
    if not t.p_imp:
        p = replace(p, p_imp=0.0)
    p = replace(p, multilevel=replace(p.multilevel, enabled=bool(t.multilevel)))
    if not t.dark_branching:
        p = replace(p, branching=Branching.ideal())
    p.validate()
    return p


def truncation_check(params: PhysicalParams, pulse: PulseSpec, numerics: NumericsConfig,
                     tol: float = TRUNCATION_TOL) -> dict:
    """Master-equation means at the configured cutoffs and one photon more per mode.

    Raises :class:`NumericalError` when the transmitted or reflected mean moves
    by more than ``tol`` (relative).
    """
    out = {"fock": [numerics.fock_a, numerics.fock_b], "n_bar": pulse.n_bar, "g": params.g_mean}
    means = []
    for extra in (0, 1):
        num = replace(numerics, fock_a=numerics.fock_a + extra, fock_b=numerics.fock_b + extra)
        model = build_model(params, pulse, default_space(params, num))
        means.append(evolve_master(model, numerics=num).means)
    drift = {}
    for c in ("T", "R"):
        a, b = means[0][c], means[1][c]
        drift[c] = abs(a - b) / max(abs(b), 1e-12)
    out["means"] = {c: means[0][c] for c in ("T", "R")}
    out["means_plus_one"] = {c: means[1][c] for c in ("T", "R")}
    out["relative_drift"] = drift
    out["passed"] = all(v < tol for v in drift.values())
    if not out["passed"]:
        raise NumericalError(f"truncation check failed: relative drift {drift} exceeds {tol:.0%} at "
                             f"fock ({numerics.fock_a}, {numerics.fock_b}); increase numerics.fock_a/fock_b")
    return out


@dataclass
class PointResult:
    n_bar: float
    n_kept: int
    mean: dict
    se: dict
    mean_empty: dict
    se_empty: dict
    g2_R: float | None
    g2_R_se: float | None
    extraction_probability: float
    raw_T: np.ndarray
    raw_T_empty: np.ndarray
    flux_R: np.ndarray
    flux_T: np.ndarray
    flux_T_empty: np.ndarray
    joint: np.ndarray
    ordering_ratio: float | None
    clicks: dict = field(default_factory=dict)
    clicks_empty: dict = field(default_factory=dict)
    reconstruction: MaxEntSolution | None = None
    reconstruction_empty: MaxEntSolution | None = None


@dataclass
class RunArtifacts:
    config: ScenarioConfig
    params: PhysicalParams
    points: list
    bin_edges: np.ndarray
    truncation: dict | None
    provenance: dict

    def point(self, n_bar: float) -> PointResult:
        for p in self.points:
            if abs(p.n_bar - n_bar) < 1e-12:
                return p
        raise KeyError(f"no sweep point at n_bar={n_bar}")


def _param_hash(config: ScenarioConfig) -> str:
    doc = _config_doc(config)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _config_doc(config: ScenarioConfig) -> dict:
    doc = serialize(config.base, config.pulse, config.numerics)
    doc["detector"] = asdict(config.detector)
    doc["scenario"] = {
        "sweep": list(config.sweep),
        "toggles": asdict(config.toggles),
        "distribution_points": list(config.distribution_points),
        "bootstrap": config.bootstrap,
        "postselect_redetect": config.postselect_redetect,
        "truncation_check": config.truncation_check,
        "bin_ns": config.bin_ns,
    }
    return doc


def _stream(seed: int, *key) -> np.random.SeedSequence:
    # keys of length >= 2 never collide with the per-trajectory keys (index,)
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))


def _int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _click_hist(records, port, cfg, seed):
    recs = simulate_clicks([r.times_of(port) for r in records], cfg, seed)
    return ClickHistogram.from_clicks([r.n_detectors for r in recs], cfg.live, port)


def _run_point(config, params, idx, n_bar, threads):
    num = config.numerics
    pulse = replace(config.pulse, n_bar=float(n_bar))
    space = default_space(params, num)
    model = build_model(params, pulse, space)
    window = pulse.window
    t = config.toggles

    empty = run_trajectories(model.with_coupling(0.0), numerics=num, threads=threads)
    if t.atom_present:
        g_values = None
        if t.g_spread:
            g_values = sample_coupling(params.g_mean, params.g_sd, num.n_traj, _stream(num.master_seed, 1, idx))
        recs = run_trajectories(model, numerics=num, g_values=g_values, threads=threads)
    else:
        recs = empty
    if config.postselect_redetect:
        kept = [r for r in recs if r.final_level != "dark"]
        recs = kept or recs[:0]
    if not recs:
        raise NumericalError(f"no trajectories left after postselection at n_bar={n_bar}")
    st = trajectory_statistics(recs, window, config.bin_ns)
    se = trajectory_statistics(empty, window, config.bin_ns)
    nb = len(recs)
    norm = 1.0 / (nb * config.bin_ns)
    flux_R = st.time_hist["R"] * norm
    flux_T = st.time_hist["T"] * norm
    flux_T_empty = se.time_hist["T"] / (len(empty) * config.bin_ns)
    extracted = np.mean([r.final_level != "alpha" for r in recs]) if t.atom_present else 0.0

    res = PointResult(
        n_bar=float(n_bar), n_kept=nb,
        mean={c: st.means[c] for c in CHANNELS}, se={c: st.sems[c] for c in CHANNELS},
        mean_empty={c: se.means[c] for c in CHANNELS}, se_empty={c: se.sems[c] for c in CHANNELS},
        g2_R=st.g2["R"], g2_R_se=st.g2_sem["R"], extraction_probability=float(extracted),
        raw_T=st.distributions["T"], raw_T_empty=se.distributions["T"],
        flux_R=flux_R, flux_T=flux_T, flux_T_empty=flux_T_empty,
        joint=st.joint / nb, ordering_ratio=st.ordering_ratio(),
    )
    if t.detector_model:
        det = config.detector
        for k, port in enumerate(("T", "R")):
            res.clicks[port] = _click_hist(recs, port, det, _int_seed(_stream(num.master_seed, 2, idx, k)))
            res.clicks_empty[port] = _click_hist(empty, port, det, _int_seed(_stream(num.master_seed, 3, idx, k)))
        if t.reconstruction and any(abs(n_bar - p) < 1e-12 for p in config.distribution_points):
            seed = _int_seed(_stream(num.master_seed, 4, idx))
            res.reconstruction = reconstruct_with_uncertainty(res.clicks["T"], det, B=config.bootstrap, seed=seed)
            res.reconstruction_empty = reconstruct_with_uncertainty(res.clicks_empty["T"], det,
                                                                    B=config.bootstrap, seed=seed + 1)
    return res


def run_scenario(config: ScenarioConfig, threads: int | None = None) -> RunArtifacts:
    """Run every sweep point; aborts with :class:`NumericalError` if truncation is not converged."""
    params = effective_params(config)
    config.pulse.validate()
    config.numerics.validate()
    trunc = None
    if config.truncation_check and config.toggles.atom_present:
        pulse = replace(config.pulse, n_bar=max(config.sweep))
        trunc = truncation_check(params, pulse, config.numerics)
    t0, t1 = config.pulse.window
    nbins = max(int(math.ceil((t1 - t0) / config.bin_ns - 1e-9)), 1)
    edges = t0 + config.bin_ns * np.arange(nbins + 1)
    points = [_run_point(config, params, i, n, threads) for i, n in enumerate(config.sweep)]
    prov = {
        "master_seed": config.master_seed,
        "n_traj": config.n_traj,
        "param_hash": _param_hash(config),
        "code_version": __version__,
    }
    return RunArtifacts(config=config, params=params, points=points, bin_edges=edges,
                        truncation=trunc, provenance=prov)


# ----------------------------------------------------------------------------
# output tables


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else ""


def _csv(header, rows) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _nbar_tag(n: float) -> str:
    return f"{n:g}"


def figure_tables(art: RunArtifacts) -> dict:
    """Relative path -> CSV text for every figure table (one directory per figure)."""
    out = {}
    pts = art.points
    out["fig2a/fig2a.csv"] = _csv(
        ["n_bar", "meanR_atom", "meanT_atom", "meanR_empty", "meanT_empty",
         "seR_atom", "seT_atom", "seR_empty", "seT_empty"],
        [[p.n_bar, p.mean["R"], p.mean["T"], p.mean_empty["R"], p.mean_empty["T"],
          p.se["R"], p.se["T"], p.se_empty["R"], p.se_empty["T"]] for p in pts])
    out["fig2b/fig2b.csv"] = _csv(["n_bar", "g2R", "se"], [[p.n_bar, p.g2_R, p.g2_R_se] for p in pts])
    for p in pts:
        if not any(abs(p.n_bar - d) < 1e-12 for d in art.config.distribution_points):
            continue
        if p.reconstruction is not None:
            pin = p.reconstruction_empty.x.p
            pout, lo, hi = p.reconstruction.x.p, p.reconstruction.lower, p.reconstruction.upper
        else:
            pin, pout = p.raw_T_empty, p.raw_T
            lo = hi = None
        K = max(pin.size, pout.size)
        rows = []
        for n in range(K):
            rows.append([n, pin[n] if n < pin.size else 0.0, pout[n] if n < pout.size else 0.0,
                         None if lo is None else (lo[n] if n < lo.size else 0.0),
                         None if hi is None else (hi[n] if n < hi.size else 0.0)])
        out[f"fig2cde/fig2cde_{_nbar_tag(p.n_bar)}.csv"] = _csv(["n", "p_in", "p_out", "lo", "hi"], rows)
        K = max(p.raw_T.size, p.raw_T_empty.size)
        out[f"fig2cde/fig2cde_raw_{_nbar_tag(p.n_bar)}.csv"] = _csv(
            ["n", "p_in", "p_out"],
            [[n, p.raw_T_empty[n] if n < p.raw_T_empty.size else 0.0,
              p.raw_T[n] if n < p.raw_T.size else 0.0] for n in range(K)])
    centers = 0.5 * (art.bin_edges[1:] + art.bin_edges[:-1])

    def flux_table(R, T, Te):
        return _csv(["t_ns", "fluxR", "fluxT", "fluxSum", "fluxT_empty"],
                    [[t, r, tt, r + tt, te] for t, r, tt, te in zip(centers, R, T, Te)])

    def joint_table(J):
        i, j = np.nonzero(J)
        return _csv(["tR_bin", "tT_bin", "weight"],
                    [[centers[a], centers[b], J[a, b]] for a, b in zip(i, j)])

    # unweighted sums over intensities (each point normalised per trajectory)
    out["fig3a/fig3a.csv"] = flux_table(sum(p.flux_R for p in pts), sum(p.flux_T for p in pts),
                                  sum(p.flux_T_empty for p in pts))
    out["fig3b/fig3b.csv"] = joint_table(sum(p.joint for p in pts))
    for p in pts:
        tag = _nbar_tag(p.n_bar)
        out[f"fig3a/fig3a_{tag}.csv"] = flux_table(p.flux_R, p.flux_T, p.flux_T_empty)
        out[f"fig3b/fig3b_{tag}.csv"] = joint_table(p.joint)
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def build_manifest(art: RunArtifacts, tables: dict | None = None) -> dict:
    """Seeds, parameters, headline numbers and the SHA-256 of every table."""
    from .analytic import summary as analytic_summary

    tables = figure_tables(art) if tables is None else tables
    digests = {name: hashlib.sha256(tables[name].encode("utf-8")).hexdigest() for name in sorted(tables)}
    return _jsonable({
        "provenance": art.provenance,
        "config": _config_doc(art.config),
        "effective_params": serialize(art.params),
        "truncation_check": art.truncation,
        "analytic": analytic_summary(art.params),
        "summary": scalar_summary(art),
        "files": digests,
    })


def write_figures(art: RunArtifacts, out_dir, force: bool = False) -> dict:
    """Write all tables and ``manifest.json`` into ``out_dir``; returns the manifest."""
    out_dir = Path(out_dir)
    tables = figure_tables(art)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise FileExistsError(f"{out_dir} is not empty; pass force to overwrite")
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(tables):
        path = out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(tables[name].encode("utf-8"))
    manifest = build_manifest(art, tables)
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    (out_dir / "manifest.json").write_bytes(text.encode("utf-8"))
    return manifest


# ----------------------------------------------------------------------------
# regression gate


def scalar_summary(art: RunArtifacts) -> dict:
    """Flat ``name -> {value, se}`` map of the headline quantities."""
    out = {}
    for p in art.points:
        tag = _nbar_tag(p.n_bar)
        out[f"meanR_atom@{tag}"] = {"value": p.mean["R"], "se": p.se["R"]}
        out[f"meanT_atom@{tag}"] = {"value": p.mean["T"], "se": p.se["T"]}
        out[f"meanR_empty@{tag}"] = {"value": p.mean_empty["R"], "se": p.se_empty["R"]}
        out[f"meanT_empty@{tag}"] = {"value": p.mean_empty["T"], "se": p.se_empty["T"]}
        out[f"g2R@{tag}"] = {"value": p.g2_R, "se": p.g2_R_se}
        q = p.extraction_probability
        out[f"extraction@{tag}"] = {"value": q, "se": math.sqrt(q * (1.0 - q) / p.n_kept)}
    return out


def make_reference(manifest: dict, sigmas: float = 3.0) -> dict:
    """Reference table from a trusted run's manifest."""
    return {
        "provenance": manifest["provenance"],
        "quantities": {k: {"value": v["value"], "se": v["se"], "sigmas": sigmas}
                       for k, v in manifest["summary"].items() if v["value"] is not None},
        "analytic": manifest["analytic"],
        "files": manifest["files"],
    }


def compare_with_reference(result, reference: dict) -> dict:
    """Per-quantity pass/fail of a run against a versioned reference table.

    ``result`` is a :class:`RunArtifacts` or a manifest dict.  Reference
    quantities are ``{"value", "tol"}`` (absolute) or ``{"value", "se",
    "sigmas"}`` (combined standard errors).  Analytic values must match
    exactly.  File digests are compared only when the run has the reference's
    seed and parameter hash.  A quantity missing from the run fails.
    """
    manifest = build_manifest(result) if isinstance(result, RunArtifacts) else result
    summary = manifest.get("summary", {})
    report = {"quantities": {}, "analytic": {}, "files": {}, "passed": True}

    def record(section, name, entry):
        report[section][name] = entry
        report["passed"] = report["passed"] and entry["passed"]

    for name, ref in sorted(reference.get("quantities", {}).items()):
        got = summary.get(name)
        entry = {"expected": ref["value"]}
        if got is None or got.get("value") is None:
            entry.update(value=None, passed=False, reason="missing")
        else:
            v = float(got["value"])
            if "tol" in ref:
                tol = float(ref["tol"])
            else:
                se = float(got.get("se") or 0.0)
                se_ref = float(ref.get("se") or 0.0)
                tol = float(ref.get("sigmas", 3.0)) * math.hypot(se, se_ref)
            entry.update(value=v, tol=tol, passed=bool(abs(v - float(ref["value"])) <= tol))
        record("quantities", name, entry)
    got_analytic = manifest.get("analytic", {})
    for name, want in sorted(reference.get("analytic", {}).items()):
        have = got_analytic.get(name)
        record("analytic", name, {"expected": want, "value": have, "passed": have == want})
    same_run = all(manifest.get("provenance", {}).get(k) == reference.get("provenance", {}).get(k)
                   for k in ("master_seed", "param_hash"))
    report["files_compared"] = same_run
    if same_run:
        files = manifest.get("files", {})
        for name, digest in sorted(reference.get("files", {}).items()):
            record("files", name, {"expected": digest, "value": files.get(name),
                                   "passed": files.get(name) == digest})
    return report


def mixture_model(n_bar: float, extraction_probability: float, transmission: float) -> PhotonNumberDistribution:
    """Transmitted counts if the atom removes exactly one photon with the given probability.

    ``p * thin(shift(Poisson), T) + (1 - p) * thin(Poisson, T)``.
    """
    pin = make_distribution("poisson", n_bar)
    a = thin(shift(pin, 1), transmission).padded(pin.p.size)
    b = thin(pin, transmission).padded(pin.p.size)
    p = extraction_probability
    return PhotonNumberDistribution(p * a + (1.0 - p) * b)
