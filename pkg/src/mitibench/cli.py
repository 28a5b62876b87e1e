"""Command-line entry point: ``mitibench <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import calibration as cal
from .device import DeviceModel
from .files import SchemaError, ingest_results, parse_calibration_data, write_results
from .harness import (
    BenchConfig,
    BenchmarkError,
    build_suite,
    calibrated_model,
    load_config,
    run_benchmark,
    run_calibration,
    simulate_suite,
)
from .programs import export_schedules, import_schedules
from .report import load_report, render_report


def _config(args) -> BenchConfig:
    config = load_config(args.config) if args.config else BenchConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def _out(args, config: BenchConfig) -> Path:
    return Path(args.out if args.out else config.output.dir)


def _formats(args, config: BenchConfig):
    return [args.format] if args.format else list(config.output.formats)


def _programmed_model(args, config: BenchConfig) -> DeviceModel:
    if getattr(args, "model", None):
        doc = json.loads(Path(args.model).read_text())
        return DeviceModel.from_dict(doc.get("model", doc))
    return calibrated_model(config, run_calibration(config))


def cmd_calibrate(args) -> int:
    config = _config(args)
    if args.data:
        data, readout = parse_calibration_data(json.loads(Path(args.data).read_text()), config.device)
        result = cal.calibrate(data, readout)
    else:
        result = run_calibration(replace(config, calibration=replace(config.calibration, source="simulate")))
    path = _write_json(_out(args, config) / "calibration.json", result.to_dict())
    print(f"wrote {path}")
    return 0


def cmd_suite(args) -> int:
    config = _config(args)
    suite = build_suite(config, _programmed_model(args, config))
    path = export_schedules(suite, _out(args, config) / "schedule.json", config.device.dt_seconds)
    print(f"wrote {path} ({len(suite)} programs)")
    return 0


def cmd_run(args) -> int:
    config = _config(args)
    if args.schedule:
        suite, _ = import_schedules(args.schedule)
    else:
        suite = build_suite(config, _programmed_model(args, config))
    records = simulate_suite(config.device, suite, config.workers)
    path = write_results(records, _out(args, config) / "results.json", config.device)
    print(f"wrote {path} ({len(records)} records)")
    return 0


def cmd_ingest(args) -> int:
    config = _config(args)
    calibration = run_calibration(config)
    suite = build_suite(config, calibrated_model(config, calibration))
    ingested = ingest_results(args.results, suite, config.device)
    for label in ingested.unknown_labels:
        print(f"skipped unknown label {label}", file=sys.stderr)
    report = run_benchmark(config, results=ingested, calibration=calibration)
    for path in render_report(report, _out(args, config), _formats(args, config)):
        print(f"wrote {path}")
    return 0


def cmd_bench(args) -> int:
    config = _config(args)
    report = run_benchmark(config)
    for path in render_report(report, _out(args, config), _formats(args, config)):
        print(f"wrote {path}")
    for m, score in report.scores().items():
        shown = "n/a" if score is None else f"{score:.4f}"
        print(f"M={m:<4d} normalized error {shown}")
    return 0


def cmd_report(args) -> int:
    report = load_report(args.report)
    for path in render_report(report, args.out or ".", [args.format] if args.format else ["json", "csv"]):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mitibench", description="Pulse-stretching mitigability benchmark.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, config=True):
        p = sub.add_parser(name, help=help_text)
        if config:
            p.add_argument("--config", help="benchmark config JSON")
            p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (default: config output.dir, or cwd for report)")
        p.set_defaults(func=func)
        return p

    p = add("calibrate", cmd_calibrate, "fit a device model from calibration data")
    p.add_argument("--data", help="calibration data JSON; simulated from the config device if omitted")
    p = add("suite", cmd_suite, "write the stretched-program schedule file")
    p.add_argument("--model", help="calibrated model JSON (output of 'calibrate')")
    p = add("run", cmd_run, "simulate a suite and write a results file")
    p.add_argument("--schedule", help="schedule JSON to run instead of building the suite")
    p.add_argument("--model", help="calibrated model JSON used to program amplitudes")
    p = add("ingest", cmd_ingest, "build a report from an external results file")
    p.add_argument("--results", required=True, help="results JSON")
    p.add_argument("--format", choices=("json", "csv"))
    p = add("bench", cmd_bench, "run the benchmark end to end")
    p.add_argument("--format", choices=("json", "csv"))
    p = add("report", cmd_report, "re-render a saved report", config=False)
    p.add_argument("--report", required=True, help="report JSON")
    p.add_argument("--format", choices=("json", "csv"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BenchmarkError, SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
