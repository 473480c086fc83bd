"""Command line entry point.

Subcommands:

* ``run``    -- execute a preset at a single eps (quick check; rate
  presets emit a one-row sweep.csv and a structured "insufficient
  points for fit" warning).
* ``sweep``  -- execute the full eps list of a preset.
* ``report`` -- refit report.json from an existing sweep.csv without
  re-running any solver.

Exit codes: 0 artifacts written, 2 configuration or usage error,
3 solver abort (diagnostic payload in error.json).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config_io import (
    ConfigError,
    ExperimentConfig,
    PRESET_NAMES,
    apply_overrides,
    parse_config,
    preset_defaults,
)
from .experiments import ExperimentError, refit_report, run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _parse_eps(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"--eps: expected a comma list of floats, got {text!r}") from None
    if not values:
        raise ConfigError("--eps: empty list")
    return values


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is None and args.preset is None:
        raise ConfigError("one of --config or --preset is required")
    if args.config is not None:
        cfg = parse_config(args.config)
        preset_override = args.preset
    else:
        cfg = preset_defaults(args.preset)
        preset_override = None
    eps = _parse_eps(args.eps) if args.eps else None
    return apply_overrides(
        cfg,
        preset=preset_override,
        eps_list=eps,
        output_dir=args.out,
        strict=True if args.strict else None,
    )


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="experiment config file")
    sub.add_argument("--preset", metavar="NAME", choices=PRESET_NAMES,
                     help="preset name (used alone or to re-base a default config)")
    sub.add_argument("--eps", metavar="LIST",
                     help="comma list of eps values, overrides the config")
    sub.add_argument("--out", metavar="DIR", help="output directory")
    sub.add_argument("--strict", action="store_true",
                     help="treat soft rate-window misses as failures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="debyeflow",
        description="Electro-diffusion channel experiments: runs, sweeps, reports.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="single-eps run of a preset")
    _add_common(p_run)

    p_sweep = subs.add_parser("sweep", help="full eps sweep of a preset")
    _add_common(p_sweep)
    p_sweep.add_argument("--serial", action="store_true",
                         help="disable the per-eps worker pool")

    p_rep = subs.add_parser("report", help="refit report.json from an existing sweep.csv")
    _add_common(p_rep)

    return parser


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    # single-run semantics: collapse the sweep to one eps
    e0 = cfg.eps_list[0]
    cfg = replace(cfg, eps=e0, eps_list=(e0,)).validate()
    report = run_experiment(cfg, parallel=False)
    print(f"{cfg.preset}: pass={report['pass']}  artifacts: {report['paths']}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    report = run_experiment(cfg, parallel=not args.serial)
    slope = report.get("slope")
    slope_txt = f"{slope:.3f}" if isinstance(slope, float) else "n/a"
    print(f"{cfg.preset}: slope={slope_txt}  window={report.get('window')}  "
          f"pass={report['pass']}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    out = Path(args.out if args.out is not None else cfg.output_dir)
    sweep_path = out / "sweep.csv"
    if not sweep_path.exists():
        raise ConfigError(f"{sweep_path}: no sweep.csv to refit; run `sweep` first")
    report = refit_report(cfg, sweep_path, out / "report.json")
    slope = report.get("slope")
    slope_txt = f"{slope:.3f}" if isinstance(slope, float) else "n/a"
    print(f"{cfg.preset}: slope={slope_txt}  pass={report['pass']}  "
          f"wrote {out / 'report.json'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        if exc.payload:
            print(f"diagnostic payload: {exc.payload}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
