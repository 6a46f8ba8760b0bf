"""Command-line front end: test, simulate, and power-study subcommands.

Exit codes: 0 on success, 2 on any usage/parse/domain error, reported as
a single machine-parsable stderr line ``<CODE>: <reason>``.
"""

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .errors import DomainError, ParseError
from .field import load_field, write_field
from .simulate import generate_field, power_study, preset_config
from .wstest import multi_lag_test

_METHODS = {"para": ["para"], "nonp": ["nonp"], "both": ["para", "nonp"]}


class _SingleLineParser(argparse.ArgumentParser):
    def error(self, message):
        print(f"E_USAGE: {message}", file=sys.stderr)
        raise SystemExit(2)


def _build_parser() -> argparse.ArgumentParser:
    parser = _SingleLineParser(prog="weaksep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    test = sub.add_parser("test", help="run the weak-separability test on a field file")
    test.add_argument("--input", required=True, help="field CSV to test")
    test.add_argument("--output", required=True, help="where to write the JSON report")
    test.add_argument("--lag", type=float, action="append", default=None,
                      help="lag distance (repeatable)")
    test.add_argument("--lag-z", type=int, action="append", default=None,
                      help="lag as an integer multiple of the grid spacing (repeatable)")
    test.add_argument("--fve", type=float, default=0.9)
    test.add_argument("--method", choices=sorted(_METHODS), default="para")
    test.add_argument("--alpha", type=float, default=0.05)
    test.add_argument("--figures", action="store_true",
                      help="also render PNG figures next to the report")

    sim = sub.add_parser("simulate", help="generate a synthetic field file")
    sim.add_argument("--output", required=True, help="where to write the field CSV")
    sim.add_argument("--preset", choices=["desk", "paper"], default="desk")
    sim.add_argument("--rho12", type=float, default=0.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--replicate", type=int, default=0)

    power = sub.add_parser("power-study", help="Monte Carlo size/power study")
    power.add_argument("--output", required=True, help="where to write the rate CSV")
    power.add_argument("--preset", choices=["desk", "paper"], default="desk")
    power.add_argument("--rho12", type=float, action="append", default=None,
                       help="cross-correlation strength (repeatable)")
    power.add_argument("--lag", type=float, action="append", default=None)
    power.add_argument("--lag-z", type=int, action="append", default=None)
    power.add_argument("--fve", type=float, action="append", default=None)
    power.add_argument("--method", choices=sorted(_METHODS), default="para")
    power.add_argument("--alpha", type=float, default=0.05)
    power.add_argument("--seed", type=int, default=0)
    power.add_argument("--replicates", type=int, default=200)
    power.add_argument("--jobs", type=int, default=1)
    power.add_argument("--figures", action="store_true")
    return parser


def _resolve_lags(args, spacing: float) -> list[float]:
    lags = list(args.lag or [])
    lags.extend(z * spacing for z in (args.lag_z or []))
    return lags


def _validate_common(fve: float, alpha: float) -> None:
    if not (0.0 < fve <= 1.0):
        raise DomainError(f"fve must lie in (0, 1], got {fve}")
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def _cmd_test(args) -> int:
    if not os.path.exists(args.input):
        raise ParseError(f"input file not found: {args.input}")
    _validate_common(args.fve, args.alpha)
    field = load_field(args.input)
    lags = _resolve_lags(args, field.grid.spacing)
    if not lags:
        raise DomainError("test needs at least one --lag or --lag-z")

    results = []
    for method in _METHODS[args.method]:
        report = multi_lag_test(field, lags, fve=args.fve, corr_method=method)
        results.append(
            {
                "method": "parametric" if method == "para" else "nonparametric",
                "per-lag": [r.to_dict() for r in report.reports],
                "dropped-lags": report.dropped_lags,
                "n-lags": report.n_lags,
                "combined-p-value": report.combined_p_value,
                "rejected": report.combined_p_value < args.alpha,
            }
        )
        for rep in report.reports:
            for msg in rep.diagnostics.get("warnings", []):
                print(f"warning: lag {rep.lag:g} [{method}]: {msg}", file=sys.stderr)

    document = {"command": "test", "input": args.input, "alpha": args.alpha, "results": results}
    Path(args.output).write_text(json.dumps(document, indent=2) + "\n", encoding="utf-8")
    if args.figures:
        from .plots import save_test_report_figures

        save_test_report_figures(document, os.path.splitext(args.output)[0])
    return 0


def _cmd_simulate(args) -> int:
    config = preset_config(args.preset, rho12=args.rho12, seed=args.seed)
    field = generate_field(config, replicate=args.replicate)
    write_field(field, args.output)
    return 0


def _cmd_power_study(args) -> int:
    fves = args.fve or [0.9]
    for fve in fves:
        _validate_common(fve, args.alpha)
    rho12_values = args.rho12 if args.rho12 is not None else [0.0]
    methods = _METHODS[args.method]

    all_rows = []
    truncation_rows = []
    for rho12 in rho12_values:
        config = preset_config(args.preset, rho12=rho12, seed=args.seed)
        lags = _resolve_lags(args, config.spacing) or [config.spacing]
        result = power_study(
            config,
            replicates=args.replicates,
            lags=lags,
            fve_levels=fves,
            alpha=args.alpha,
            corr_methods=methods,
            jobs=args.jobs,
        )
        for msg in result.failure_messages:
            print(f"warning: {msg}", file=sys.stderr)
        for row in result.rows:
            all_rows.append(
                {
                    "rho12": row.rho12,
                    "lag": row.lag,
                    "fve": row.fve,
                    "method": row.method,
                    "rejections": row.rejections,
                    "replicates": row.replicates,
                    "rate": row.rate,
                    "failures": row.failures,
                }
            )
        for (lag, fve), counts in sorted(result.truncation_counts.items()):
            for r, count in sorted(counts.items()):
                truncation_rows.append(
                    {"rho12": rho12, "lag": lag, "fve": fve, "R": r, "count": count}
                )

    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho12", "lag", "fve", "method", "rejections", "replicates", "rate", "failures"])
        for row in all_rows:
            writer.writerow(
                [
                    repr(float(row["rho12"])), repr(float(row["lag"])), repr(float(row["fve"])),
                    row["method"], row["rejections"], row["replicates"],
                    repr(float(row["rate"])), row["failures"],
                ]
            )
    root, ext = os.path.splitext(args.output)
    with open(f"{root}_truncation{ext or '.csv'}", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho12", "lag", "fve", "R", "count"])
        for row in truncation_rows:
            writer.writerow(
                [repr(float(row["rho12"])), repr(float(row["lag"])), repr(float(row["fve"])),
                 row["R"], row["count"]]
            )
    if args.figures:
        from .plots import save_power_figures

        save_power_figures(all_rows, root)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "test":
            return _cmd_test(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        return _cmd_power_study(args)
    except ParseError as exc:
        print(f"E_PARSE: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"E_DOMAIN: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"E_IO: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
