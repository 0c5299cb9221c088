"""Regenerate every figure table with the default scenario.

Usage: python scripts/run_figures.py OUT_DIR [--config PATH] [--seed U64] [--threads N] [--force]

The default scenario runs 2000 trajectories per sweep point with the
coupling spread on, which takes hours on one core.  Pass a smaller
``numerics.n_traj`` through ``--config`` for a quicker pass.
"""

import argparse
import sys

from sprintsim.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out")
    ap.add_argument("--config")
    ap.add_argument("--seed")
    ap.add_argument("--threads")
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    argv = ["figures", "--out", args.out]
    for flag in ("config", "seed", "threads"):
        if getattr(args, flag) is not None:
            argv += [f"--{flag}", getattr(args, flag)]
    if args.force:
        argv.append("--force")
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
