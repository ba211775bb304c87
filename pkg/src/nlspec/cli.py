"""Command-line interface.

Subcommands:
  run      execute an experiment config and write its artifacts
  verify   cross-check the shift-rule engine against the commutator oracle
  gaps     print gap sets, shifts, weights and norms for the config's pumps
  spectra  post-process an existing time-series CSV into a spectrum

Exit codes: 0 success, 2 config error, 3 verification failure,
4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_config
from .models import build_model, build_pump
from .pauli import DimensionCapError
from .runner import run_experiment, verify_experiment, write_csv
from .shift_rules import ShiftRuleError, gap_set, rule_for_generator
from .spectra import SpectrumError, envelope_fit, response_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_RESOURCE = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlspec",
        description="Nonlinear response reconstruction for kicked spin systems",
    )
    parser.add_argument("--version", action="version", version=f"nlspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("--config", required=True, help="path to the JSON config")
    run_p.add_argument("--out", default=None, help="output directory (overrides config)")
    run_p.add_argument("--seed", type=int, default=None, help="seed override")
    run_p.add_argument("--threads", type=int, default=None, help="worker count for sweeps")

    ver_p = sub.add_parser("verify", help="oracle cross-check of the reconstruction")
    ver_p.add_argument("--config", required=True)
    ver_p.add_argument("--tolerance", type=float, default=1e-8)
    ver_p.add_argument("--out", default=None, help="optional directory for the report")

    gaps_p = sub.add_parser("gaps", help="print the shift-rule ledger for the pumps")
    gaps_p.add_argument("--config", required=True)
    gaps_p.add_argument("--max-order", type=int, default=None)

    spec_p = sub.add_parser("spectra", help="Fourier post-processing of a series CSV")
    spec_p.add_argument("--input", required=True, help="CSV with a time column first")
    spec_p.add_argument("--column", type=int, default=1, help="value column index")
    spec_p.add_argument("--out", default=None, help="output CSV path")
    spec_p.add_argument("--envelope", action="store_true", help="fit and remove a decay envelope")
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    out = args.out or os.environ.get("NLSPEC_OUT_DIR")
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("NLSPEC_THREADS", "1"))
    result = run_experiment(config, output_dir=out, threads=threads, seed=args.seed)
    print(f"wrote {len(result.files)} files to {result.output_dir}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    config = load_config(args.config)
    report = verify_experiment(config, tolerance=args.tolerance)
    print(f"observable: {report['observable']}  tolerance: {report['tolerance']:.2e}")
    print("order  max|shift rule - commutator|  max|fd - commutator|  oracle scale")
    for row in report["orders"]:
        fd = "-" if row["max_abs_fd_minus_commutator"] is None else f"{row['max_abs_fd_minus_commutator']:.3e}"
        print(
            f"{row['order']:>5}  {row['max_abs_shift_rule_minus_commutator']:>22.3e}  "
            f"{fd:>20}  {row['oracle_scale']:>12.3e}"
        )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify_report.json").write_text(json.dumps(report, indent=2) + "\n")
    if not report["passed"]:
        print(f"FAIL: max deviation {report['max_deviation']:.3e} exceeds tolerance")
        return EXIT_VERIFY
    print(f"PASS: max deviation {report['max_deviation']:.3e}")
    return EXIT_OK


def _cmd_gaps(args) -> int:
    config = load_config(args.config)
    h = build_model(config.model)
    max_order = args.max_order or max(list(config.orders) + [1])
    for i, channel in enumerate(config.pumps):
        generator = build_pump(channel.pump, h.n_sites)
        gaps = gap_set(generator)
        print(f"pump[{i}] kind={channel.pump.kind} support={generator.support}")
        print(f"  gaps ({len(gaps)}): {np.array2string(gaps.gaps, precision=10)}")
        print(f"  unit: {gaps.unit}")
        rule = rule_for_generator(generator, range(max_order + 1))
        print(f"  shifts ({rule.n_shifts}): {np.array2string(rule.shifts, precision=10)}")
        print(f"  condition number: {rule.condition_number:.3e}")
        for r in sorted(rule.coefficients):
            c = rule.coefficients[r]
            print(
                f"  order {r}: residual {rule.residuals[r]:.2e}  "
                f"|c|_1 {np.sum(np.abs(c)):.6g}  |c|_2^2 {np.sum(c * c):.6g}"
            )
            print(f"    c = {np.array2string(c, precision=10)}")
    return EXIT_OK


def _cmd_spectra(args) -> int:
    data = np.loadtxt(args.input, delimiter=",", skiprows=1)
    if data.ndim == 1:
        raise ConfigError("input CSV must have at least two columns")
    times = data[:, 0]
    values = data[:, args.column]
    meta = {}
    if args.envelope:
        fit, values = envelope_fit(values, times)
        meta = {"alpha": fit.alpha, "gamma": fit.gamma, "residual": fit.residual}
        print(f"envelope: alpha={fit.alpha:.6g} gamma={fit.gamma:.6g}")
    spectrum = response_spectrum(values, times=times)
    out = Path(args.out) if args.out else Path(args.input).with_suffix(".spectrum.csv")
    write_csv(
        out,
        ["omega[J]", "magnitude", "real", "imag"],
        zip(
            spectrum.frequencies,
            spectrum.magnitudes,
            spectrum.amplitudes.real,
            spectrum.amplitudes.imag,
        ),
    )
    if meta:
        out.with_suffix(".envelope.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "verify": _cmd_verify,
        "gaps": _cmd_gaps,
        "spectra": _cmd_spectra,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionCapError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ShiftRuleError, SpectrumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
