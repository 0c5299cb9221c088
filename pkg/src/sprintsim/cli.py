"""Command-line entry point: ``sprintsim <subcommand> [flags]``.

Exit status: 0 success, 1 invalid input or failed validation, 2 numerical
non-convergence, 64 usage error.  stdout carries one JSON document; logs go
to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("sprintsim")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 64

SUBCOMMANDS = ("analytic", "fockops", "simulate", "clicks", "reconstruct", "figures", "validate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class ValidationFailure(Exception):
    def __init__(self, summary):
        super().__init__("validation failed")
        self.summary = summary


class NonConvergence(Exception):
    def __init__(self, summary):
        super().__init__("not converged")
        self.summary = summary


# ----------------------------------------------------------------------------
# helpers


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {v}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _config(args):
    from .params import load_document

    return load_document(args.config) if args.config else {}


def _params(args):
    from .params import load_and_validate

    phys, pulse, numerics = load_and_validate(_config(args))
    if args.seed is not None:
        numerics = replace(numerics, master_seed=args.seed)
    return phys, pulse, numerics


def _detector(args):
    from .detectors import DetectorConfig
    from .params import ConfigError, _build

    doc = _config(args).get("detector", {})
    if not isinstance(doc, dict):
        raise ConfigError("detector: expected an object")
    try:
        return _build(DetectorConfig, doc, "detector.")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"detector: {exc}") from None


def _check_out(args, required=True) -> Path | None:
    if args.out is None:
        if required:
            raise ValueError("--out DIR is required for this subcommand")
        return None
    out = Path(args.out)
    if out.exists() and not args.force:
        raise FileExistsError(f"{out} exists; pass --force to overwrite")
    return out


@contextmanager
def _atomic_dir(out: Path, force: bool):
    """Build the output in a sibling temp directory, then move it into place."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
        if out.exists():
            if not force:
                raise FileExistsError(f"{out} exists; pass --force to overwrite")
            if out.is_dir():
                shutil.rmtree(out)
            else:
                out.unlink()
        os.replace(tmp, out)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)


def _write_text(path: Path, text: str) -> None:
    path.write_bytes(text.encode("utf-8"))


def _csv_text(header, rows) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _json(obj) -> str:
    from .experiment import _jsonable

    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False, default=str) + "\n"


def _clean(obj):
    """Replace non-finite floats by None so the summary stays strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


# ----------------------------------------------------------------------------
# subcommands


def cmd_analytic(args) -> dict:
    from .analytic import summary

    phys, _, _ = _params(args)
    out = summary(phys)
    target = _check_out(args, required=False)
    if target is not None:
        with _atomic_dir(target, args.force) as tmp:
            _write_text(tmp / "analytic.json", _json(out))
    return out


def _read_distribution(path: Path):
    from .fockops import PhotonNumberDistribution

    rows = list(csv.DictReader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    if not rows or "n" not in rows[0] or "p" not in rows[0]:
        raise ValueError(f"{path}: expected CSV columns n, p")
    n = np.array([int(r["n"]) for r in rows])
    if np.any(n < 0) or len(set(n.tolist())) != n.size:
        raise ValueError(f"{path}: n must be distinct non-negative integers")
    p = np.zeros(n.max() + 1)
    p[n] = [float(r["p"]) for r in rows]
    return PhotonNumberDistribution(p)


def cmd_fockops(args) -> dict:
    from . import fockops as fo

    if args.input:
        dist = _read_distribution(args.input)
        source = {"input": str(args.input)}
    else:
        dist = fo.make_distribution(args.kind, args.mean)
        source = {"kind": args.kind, "parameter": args.mean}
    weight = None
    if args.op == "annihilate":
        out, weight = fo.apply_annihilation(dist)
    elif args.op == "extract":
        out = fo.shift(dist, args.k)
    elif args.op == "thin":
        out = fo.thin(dist, args.efficiency)
    else:
        out = dist

    def describe(d):
        mean, var, g2 = fo.stats(d, g2=d.mean > 0)
        return {"mean": mean, "variance": var, "g2": g2, "cutoff": d.cutoff}

    summary = {"source": source, "op": args.op, "input": describe(dist), "output": describe(out)}
    if weight is not None:
        summary["branch_weight"] = weight
    target = _check_out(args, required=False)
    if target is not None:
        with _atomic_dir(target, args.force) as tmp:
            _write_text(tmp / "distribution.csv",
                        _csv_text(["n", "p"], [[n, float(v)] for n, v in enumerate(out.p)]))
            _write_text(tmp / "summary.json", _json(summary))
    return summary


def cmd_simulate(args) -> dict:
    from .dynamics import CHANNELS, build_model, default_space, evolve_master, fine_dt, run_trajectories, \
        trajectory_statistics
    from .experiment import sample_coupling, truncation_check

    phys, pulse, numerics = _params(args)
    target = _check_out(args)
    model = build_model(phys, pulse, default_space(phys, numerics))
    summary = {"n_bar": pulse.n_bar, "seeds": {"master_seed": numerics.master_seed}, "n_traj": numerics.n_traj}
    trunc = None
    if not args.skip_truncation_check:
        trunc = truncation_check(phys, pulse, numerics)
    summary["truncation_check"] = trunc
    every = max(1, int(round(args.flux_dt / fine_dt(model, numerics))))
    flux = evolve_master(model, numerics=numerics, record_every=every)
    summary["master"] = {"means": flux.means, "trace_drift": flux.trace_drift}
    g_values = None
    if args.g_spread:
        ss = np.random.SeedSequence(entropy=numerics.master_seed, spawn_key=(1, 0))
        g_values = sample_coupling(phys.g_mean, phys.g_sd, numerics.n_traj, ss)
        summary["seeds"]["coupling_stream"] = [numerics.master_seed, 1, 0]
    recs = run_trajectories(model, numerics=numerics, g_values=g_values, threads=args.threads)
    st = trajectory_statistics(recs, pulse.window)
    summary["trajectories"] = {"means": st.means, "sems": st.sems, "g2": st.g2, "g2_sem": st.g2_sem,
                               "g_spread": bool(args.g_spread)}
    rows = []
    for r in recs:
        for t, c in zip(r.times, r.channels):
            rows.append([r.index, float(t), CHANNELS[c]])
        rows.append([r.index, float(pulse.window[1]), "end:" + r.final_level])
    with _atomic_dir(target, args.force) as tmp:
        _write_text(tmp / "flux.csv", _csv_text(
            ["t_ns", "flux_T", "flux_R", "flux_loss", "flux_spont"],
            zip(flux.t, flux.flux["T"], flux.flux["R"], flux.loss, flux.spont)))
        _write_text(tmp / "jumps.csv", _csv_text(["trajectory_id", "t_ns", "channel"], rows))
        _write_text(tmp / "summary.json", _json(_clean(summary)))
    return summary


def read_jump_log(path):
    """Per-trajectory arrival times by port from a jump log.

    Rows with channel ``end:<level>`` mark the end of a trajectory so that
    trajectories without detections are still counted.
    """
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.DictReader(io.StringIO(text)))
    if rows and not {"trajectory_id", "t_ns", "channel"} <= set(rows[0]):
        raise ValueError(f"{path}: expected CSV columns trajectory_id, t_ns, channel")
    ids = set()
    ended = set()
    times = {"T": {}, "R": {}}
    for r in rows:
        i = int(r["trajectory_id"])
        ids.add(i)
        c = r["channel"]
        if c.startswith("end"):
            ended.add(i)
        elif c in times:
            times[c].setdefault(i, []).append(float(r["t_ns"]))
    n = (max(ids) + 1) if ids else 0
    if ended and len(ended) != n:
        log.warning("jump log has %d end markers for %d trajectory ids", len(ended), n)
    return n, {port: [np.array(sorted(times[port].get(i, []))) for i in range(n)] for port in times}


def cmd_clicks(args) -> dict:
    from .detectors import ClickHistogram, simulate_clicks

    cfg = _detector(args)
    if not args.jumps:
        raise ValueError("--jumps PATH is required")
    if not Path(args.jumps).exists():
        raise FileNotFoundError(f"jump log not found: {args.jumps}")
    target = _check_out(args)
    seed = args.seed if args.seed is not None else 0
    n, times = read_jump_log(args.jumps)
    hists = {}
    for k, port in enumerate(("T", "R")):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(2, k))
        recs = simulate_clicks(times[port], cfg, int(ss.generate_state(1, dtype=np.uint64)[0]))
        hists[port] = ClickHistogram.from_clicks([r.n_detectors for r in recs], cfg.live, port)
    with _atomic_dir(target, args.force) as tmp:
        for port, h in hists.items():
            _write_text(tmp / f"clicks_{port}.csv", h.to_csv())
    return {"repetitions": n, "seed": seed, "detector": vars(cfg) if hasattr(cfg, "__dict__") else str(cfg),
            "histograms": {p: h.counts.tolist() for p, h in hists.items()}}


def cmd_reconstruct(args) -> dict:
    from .detectors import ClickHistogram
    from .reconstruct import reconstruct_with_uncertainty

    cfg = _detector(args)
    if not args.hist:
        raise ValueError("--hist PATH is required")
    path = Path(args.hist)
    if not path.exists():
        raise FileNotFoundError(f"histogram not found: {path}")
    target = _check_out(args)
    hist = ClickHistogram.from_csv(path.read_text(encoding="utf-8"))
    seed = args.seed if args.seed is not None else 0
    sol = reconstruct_with_uncertainty(hist, cfg, B=args.bootstrap, K_max=args.kmax, lam=args.lam, seed=seed)
    report = {**sol.report(), "seed": seed, "mean_photons": sol.x.mean}
    with _atomic_dir(target, args.force) as tmp:
        _write_text(tmp / "distribution.csv", _csv_text(
            ["n", "p", "lo", "hi"],
            [[n, float(p), float(lo), float(hi)] for n, (p, lo, hi) in
             enumerate(zip(sol.x.p, sol.lower, sol.upper))]))
        _write_text(tmp / "report.json", _json(_clean(report)))
    if not sol.converged:
        raise NonConvergence(report)
    return report


def cmd_figures(args) -> dict:
    from .experiment import compare_with_reference, load_scenario, run_scenario, write_figures

    sc = load_scenario(_config(args))
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    target = _check_out(args)
    reference = None
    if args.reference:
        ref_path = Path(args.reference)
        if not ref_path.exists():
            raise FileNotFoundError(f"reference table not found: {ref_path}")
        reference = json.loads(ref_path.read_text(encoding="utf-8"))
    art = run_scenario(sc, threads=args.threads)
    with _atomic_dir(target, args.force) as tmp:
        manifest = write_figures(art, tmp, force=True)
    summary = {"out": str(target), "provenance": manifest["provenance"], "files": manifest["files"],
               "truncation_check": manifest["truncation_check"]}
    if reference is not None:
        report = compare_with_reference(manifest, reference)
        summary["reference"] = report
        if not report["passed"]:
            raise ValidationFailure(summary)
    return summary


def cmd_validate(args) -> dict:
    from .validation import run_checks

    checks = run_checks(seed=args.seed, threads=args.threads)
    summary = {"passed": all(c["passed"] for c in checks), "checks": checks}
    target = _check_out(args, required=False)
    if target is not None:
        with _atomic_dir(target, args.force) as tmp:
            _write_text(tmp / "validate.json", _json(_clean(summary)))
    if not summary["passed"]:
        raise ValidationFailure(summary)
    return summary


COMMANDS = {
    "analytic": cmd_analytic,
    "fockops": cmd_fockops,
    "simulate": cmd_simulate,
    "clicks": cmd_clicks,
    "reconstruct": cmd_reconstruct,
    "figures": cmd_figures,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration document")
    common.add_argument("--out", metavar="DIR", help="output directory (created atomically)")
    common.add_argument("--seed", type=_seed, metavar="U64", help="master seed override")
    common.add_argument("--threads", type=_positive_int, metavar="N", help="worker threads (default: all cores)")
    common.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="sprintsim", description="SPRINT photon-extraction simulator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}",
                                parser_class=_Parser)
    sub.add_parser("analytic", parents=[common], help="closed-form steady-state quantities")
    p = sub.add_parser("fockops", parents=[common], help="photon-number operators on a distribution")
    p.add_argument("--input", metavar="CSV", help="distribution CSV with columns n, p")
    p.add_argument("--kind", choices=("poisson", "thermal", "fock"), default="poisson")
    p.add_argument("--mean", type=float, default=5.0, help="mean (poisson/thermal) or n (fock)")
    p.add_argument("--op", choices=("annihilate", "extract", "thin", "none"), default="extract")
    p.add_argument("--k", type=int, default=1, help="extraction count")
    p.add_argument("--efficiency", type=float, default=1.0, help="thinning efficiency")
    p = sub.add_parser("simulate", parents=[common], help="master equation and trajectories for one pulse")
    p.add_argument("--g-spread", action="store_true", help="sample the coupling per trajectory")
    p.add_argument("--skip-truncation-check", action="store_true")
    p.add_argument("--flux-dt", type=float, default=0.5, help="flux CSV spacing in ns (approximate)")
    p = sub.add_parser("clicks", parents=[common], help="detector cascade applied to a jump log")
    p.add_argument("--jumps", metavar="CSV", help="jump log written by simulate")
    p = sub.add_parser("reconstruct", parents=[common], help="MaxEnt photon-number reconstruction")
    p.add_argument("--hist", metavar="CSV", help="click histogram with columns n, count")
    p.add_argument("--bootstrap", type=_positive_int, default=100)
    p.add_argument("--lam", type=float, default=None, help="fixed lambda (default: discrepancy rule)")
    p.add_argument("--kmax", type=int, default=None)
    p = sub.add_parser("figures", parents=[common], help="regenerate all figure tables")
    p.add_argument("--reference", metavar="JSON", help="reference table to compare against (exit 1 on mismatch)")
    sub.add_parser("validate", parents=[common], help="oracle cross-checks")
    return parser


def main(argv=None) -> int:
    from .dynamics import NumericalError
    from .params import ConfigError
    from .reconstruct import InfeasibleMeanError

    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    status = EXIT_OK
    try:
        summary = COMMANDS[args.command](args)
    except ValidationFailure as exc:
        summary, status = exc.summary, EXIT_INVALID
    except NonConvergence as exc:
        summary, status = exc.summary, EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        summary, status = {"error": str(exc), "kind": "numerical"}, EXIT_NUMERICAL
    except (ConfigError, InfeasibleMeanError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        summary, status = {"error": str(exc), "kind": "invalid"}, EXIT_INVALID
    sys.stdout.write(_json(_clean({"command": args.command, "status": status, **summary})))
    sys.stdout.flush()
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
