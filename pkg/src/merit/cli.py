"""Command-line front end.

Subcommands: ``ingest`` (parse and join the raw files), ``detrend``
(fit and apply the calendar model to an ingested table), ``study``
(run the whole pipeline from a JSON config), ``report`` (emit figures
and tables from a bundle directory), and ``fixture`` (write a
deterministic synthetic dataset).

Exit codes: 0 success, 1 validation/usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .detrend import fit_calendar_model
from .exceptions import DataError, FitError, MeritError, ParameterError
from .ingest import ingest, read_hourly_csv, write_hourly_csv
from .report import write_report
from .study import StudyConfig, run_study, synthetic_fixture, write_fixture


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the CLI contract is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="merit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_ingest = sub.add_parser("ingest", help="parse raw files into an hourly table")
    p_ingest.add_argument("--prices", required=True, help="prices CSV/JSONL path")
    p_ingest.add_argument("--generation", required=True, help="generation CSV/JSONL path")
    p_ingest.add_argument("--out", required=True, help="output directory")

    p_detrend = sub.add_parser("detrend", help="fit the calendar model on an hourly table")
    p_detrend.add_argument("--hourly", required=True, help="hourly.csv from `merit ingest`")
    p_detrend.add_argument("--out", required=True, help="output directory")

    p_study = sub.add_parser("study", help="run the full analysis pipeline")
    p_study.add_argument("--config", required=True, help="JSON study configuration")
    p_study.add_argument("--seed", type=int, default=None, help="override config seed")
    p_study.add_argument("--span", type=float, default=None, help="override EWMSD span")
    p_study.add_argument("--out", default=None, help="override output directory")
    p_study.add_argument("--workers", type=int, default=None, help="override worker count")

    p_report = sub.add_parser("report", help="emit figures/tables from a bundle")
    p_report.add_argument("--bundle", required=True, help="study bundle directory")
    p_report.add_argument("--out", default=None, help="output directory (default: bundle)")
    p_report.add_argument("--trim", type=float, default=None,
                          help="override the inner trim fraction for violin exports")

    p_fix = sub.add_parser("fixture", help="write a deterministic synthetic dataset")
    p_fix.add_argument("--seed", type=int, required=True)
    p_fix.add_argument("--out", required=True, help="output directory")
    p_fix.add_argument("--hours", type=int, default=8760)
    p_fix.add_argument("--noise-std", type=float, default=5.0)

    return parser


def _cmd_ingest(args) -> int:
    records, report = ingest(args.prices, args.generation)
    os.makedirs(args.out, exist_ok=True)
    write_hourly_csv(records, os.path.join(args.out, "hourly.csv"))
    with open(os.path.join(args.out, "ingest_report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    print(f"ingested {len(records)} hourly records -> {args.out}")
    return 0


def _cmd_detrend(args) -> int:
    records = read_hourly_csv(args.hourly)
    timestamps = [r.timestamp for r in records]
    mec = np.array([r.mec for r in records])
    model = fit_calendar_model(timestamps, mec)
    detrended = model.detrend(timestamps, mec)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "detrend_model.json"), "w") as fh:
        fh.write(model.to_json() + "\n")
    with open(os.path.join(args.out, "detrended.csv"), "w", newline="") as fh:
        fh.write("timestamp,mec,detrended_price\n")
        for ts, m, d in zip(timestamps, mec, detrended):
            fh.write(f"{ts.isoformat()},{repr(float(m))},{repr(float(d))}\n")
    print(f"detrended {len(records)} hours -> {args.out}")
    return 0


def _cmd_study(args) -> int:
    config = StudyConfig.from_json_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.span is not None:
        overrides["ewmsd_span"] = args.span
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        config = dataclasses.replace(config, **overrides).validate()
    if not config.output_dir:
        raise ParameterError("no output directory (set output_dir in config or pass --out)")
    bundle = run_study(config)
    written = bundle.write(config.output_dir)
    print(
        f"study complete: {len(bundle.mean_results)} mean fits, "
        f"{len(bundle.quantile_results)} quantile fits, "
        f"{len(bundle.failures)} failures -> {config.output_dir} "
        f"({len(written)} files)"
    )
    return 0


def _cmd_report(args) -> int:
    written = write_report(args.bundle, args.out, trim=args.trim)
    print(f"report written: {len(written)} files -> {args.out or args.bundle}")
    return 0


def _cmd_fixture(args) -> int:
    fixture = synthetic_fixture(args.seed, n_hours=args.hours, noise_std=args.noise_std)
    paths = write_fixture(fixture, args.out)
    config = {
        "prices": paths["prices"],
        "generation": paths["generation"],
        "seed": args.seed,
        "output_dir": os.path.join(args.out, "results"),
    }
    config_path = os.path.join(args.out, "study_config.json")
    with open(config_path, "w") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"fixture written -> {args.out} (study config: {config_path})")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "detrend": _cmd_detrend,
    "study": _cmd_study,
    "report": _cmd_report,
    "fixture": _cmd_fixture,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, FitError, FileNotFoundError) as exc:
        print(f"merit {args.command}: data error: {exc}", file=sys.stderr)
        return 2
    except MeritError as exc:
        print(f"merit {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
