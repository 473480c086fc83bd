#!/usr/bin/env python3
"""Check the discrete free-energy balance under dt refinement.

Runs the energy_identity preset: three dt levels of the generic 1-D
fixture plus the constant equilibrium sub-run whose balance residual
must vanish exactly.  diag.csv gets the per-snapshot energy, modulated
energy, extrema, and residual of the finest level.
"""

import argparse
import logging
import sys
from dataclasses import replace

from debyeflow.config_io import preset_defaults
from debyeflow.experiments import ExperimentError, run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/energy", help="output directory")
    ap.add_argument("--dt", type=float, default=None, help="coarsest dt level")
    ap.add_argument("--t-end", type=float, default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    cfg = preset_defaults("energy_identity")
    if args.dt is not None:
        cfg = replace(cfg, dt=args.dt)
    if args.t_end is not None:
        cfg = replace(cfg, t_end=args.t_end)
    try:
        report = run_experiment(cfg.validate(), out_dir=args.out)
    except ExperimentError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3

    for entry in report["per_epsilon"]:
        ratio = entry["ratio_vs_prev"]
        print(f"  dt={entry['dt']:.3e}: residual={entry['residual']:.3e}"
              + (f" ratio={ratio:.3f}" if ratio else ""))
    print(f"equilibrium residual: {report['equilibrium_residual']!r}")
    print(f"pass={report['pass']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
