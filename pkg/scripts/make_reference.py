"""Regenerate the committed reference table for the quick scenario.

Usage: python scripts/make_reference.py [--threads N]
"""

import argparse
import json
from importlib import resources

from sprintsim.experiment import build_manifest, load_scenario, make_reference, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    data = resources.files("sprintsim") / "data"
    sc = load_scenario(json.loads((data / "quick_scenario.json").read_text()))
    ref = make_reference(build_manifest(run_scenario(sc, threads=args.threads)))
    out = data / "reference_quick.json"
    with resources.as_file(out) as path:
        path.write_text(json.dumps(ref, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    print(out)


if __name__ == "__main__":
    main()
