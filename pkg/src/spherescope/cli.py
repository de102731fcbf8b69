"""Command-line entry point.

Subcommands run either one pipeline stage (``optics``, ``nanojet``,
``scan``, ``psf``, ``g2``, ``odmr``) or the whole scenario
(``pipeline``).  Exit codes: 0 success, 2 configuration problem,
3 numerical failure inside a stage, 4 pipeline tolerance check failed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    ConfigError,
    apply_cli_overrides,
    default_config,
    parse_config,
)
from .pipeline import (
    OutputLockError,
    RunReport,
    StageFailure,
    _stage_fdtd,
    _stage_g2,
    _stage_odmr,
    _stage_optics,
    _stage_psf,
    _stage_scan,
    _write_report,
    output_lock,
    run_pipeline,
)

_STAGES = {
    "optics": _stage_optics,
    "nanojet": _stage_fdtd,
    "scan": _stage_scan,
    "psf": _stage_psf,
    "g2": _stage_g2,
    "odmr": _stage_odmr,
}


def _seed_type(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit value, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="scenario file; omitted means the calibrated defaults")
    common.add_argument("--seed", type=_seed_type, metavar="U64",
                        help="override the scenario seed")
    common.add_argument("--out", metavar="DIR", help="override the output directory")
    common.add_argument("--format", choices=("csv", "svg", "both"),
                        help="which plot/table formats to emit")
    common.add_argument("--no-fdtd", action="store_true",
                        help="skip the wave solve (pipeline) or fail fast (nanojet)")

    parser = argparse.ArgumentParser(
        prog="spherescope",
        description="Microsphere-assisted imaging simulations: geometric optics, "
                    "nanojet wave solves, synthetic scans, photon statistics and "
                    "magnetic-resonance spectra.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, topic in [
        ("optics", "geometric image relations and magnification curves"),
        ("nanojet", "2-D wave solve of the sphere focus"),
        ("scan", "synthetic confocal maps and SNR comparison"),
        ("psf", "resolution round-trip fits"),
        ("g2", "photon streams and correlation fits"),
        ("odmr", "magnetic-resonance spectra and dip fits"),
        ("pipeline", "all stages plus tolerance checks"),
    ]:
        sub.add_parser(name, parents=[common], help=topic)
    return parser


def _load_config(args):
    config = parse_config(args.config) if args.config else default_config()
    return apply_cli_overrides(config, seed=args.seed, out_dir=args.out,
                               formats=args.format, no_fdtd=args.no_fdtd)


def _print_numbers(report: RunReport) -> None:
    for name, value in report.numbers.items():
        print(f"{name} = {value:.6g}")
    for check in report.checks:
        verdict = "pass" if check.passed else "FAIL"
        print(f"check {check.name}: {check.value:.6g} in "
              f"[{check.low:g}, {check.high:g}] -> {verdict}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    if args.command == "pipeline":
        try:
            report = run_pipeline(config)
        except OutputLockError as exc:
            print(str(exc), file=sys.stderr)
            return 2
        except StageFailure as exc:
            code = 2 if isinstance(exc.cause, (ConfigError, OSError)) else 3
            print(str(exc), file=sys.stderr)
            return code
        _print_numbers(report)
        print(f"report: {report.output_dir}/report.txt")
        return 0 if report.all_passed else 4

    if args.command == "nanojet" and args.no_fdtd:
        print("nanojet asked for with --no-fdtd; nothing to do", file=sys.stderr)
        return 2

    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    stage = _STAGES[args.command]
    try:
        with output_lock(out):
            stage_report = stage(config, out, config.output.formats)
            report = RunReport(stages=[stage_report], checks=[],
                               output_dir=str(out), completed=True)
            _write_report(report, out)
    except OutputLockError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (ConfigError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _print_numbers(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
