#!/usr/bin/env python3
"""Wall-layer studies: charge profile match and fast-time decay.

Runs the layer_profile preset (measured rho/eps^2 against the closed
screening form near the wall) and the initial_layer_decay preset (tail
slope of the fast-time charge norm), writing profile.csv/report.json
for each into separate subdirectories.
"""

import argparse
import logging
import sys
from pathlib import Path

from debyeflow.config_io import preset_defaults
from debyeflow.experiments import ExperimentError, run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/layers", help="parent output directory")
    ap.add_argument("--skip-decay", action="store_true")
    ap.add_argument("--skip-profile", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    todo = []
    if not args.skip_profile:
        todo.append("layer_profile")
    if not args.skip_decay:
        todo.append("initial_layer_decay")

    status = 0
    for preset in todo:
        out = Path(args.out) / preset
        try:
            report = run_experiment(preset_defaults(preset), out_dir=out)
        except ExperimentError as exc:
            print(f"{preset} aborted: {exc}", file=sys.stderr)
            status = 3
            continue
        if preset == "layer_profile":
            errs = [e["rel_l2_err"] for e in report["per_epsilon"]]
            print(f"{preset}: rel errors {['%.4f' % e for e in errs]} pass={report['pass']}")
        else:
            print(f"{preset}: tail slope {report['slope']:.4f} "
                  f"bound {report['window'][1]:.4f} pass={report['pass']}")
    return status


if __name__ == "__main__":
    sys.exit(main())
