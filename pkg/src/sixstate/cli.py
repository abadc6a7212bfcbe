"""
Command-line interface.

    sixstate simulate  [options]          run a session, write pulses.csv and a report
    sixstate analyze   LOG [options]      replay a recorded pulse log
    sixstate benchmark [options]          paired no-Eve / intercept-resend runs
    sixstate table     [options]          print and verify the configuration table

Exit codes: 0 on success, 1 on a runtime failure (bad data, I/O, failed
benchmark), 2 on a usage error.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from . import __version__
from .bench import (
    embedded_config_table,
    export_pulse_log,
    ingest_pulse_log,
    interpret_table,
    load_config_table,
    replay,
    verify_config_table,
)
from .config import MAX_SEED, Settings, setup_logging
from .errors import ConfigurationError, SixStateError
from .protocol import (
    AttackModel,
    NoiseModel,
    ProtocolKind,
    SessionConfig,
    SessionRunner,
    reprocess_with_eve,
    sift,
    sift_arrays,
)
from .stats import (
    CorrelationMatrix,
    aggregate_fractions,
    compare_to_benchmarks,
    correlation_matrix,
    lab_points,
    stacked_fractions,
)

logger = logging.getLogger(__name__)


# --- argument types ---

def positive_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{value!r} is not an integer") from exc
    if n < 1:
        raise argparse.ArgumentTypeError(f"{value!r} must be >= 1")
    return n


def seed_int(value: str) -> int:
    try:
        n = int(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{value!r} is not an integer") from exc
    if not 0 <= n <= MAX_SEED:
        raise argparse.ArgumentTypeError(f"seed {value!r} must lie in [0, 2**64)")
    return n


def fraction_float(value: str) -> float:
    try:
        x = float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{value!r} is not a number") from exc
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"{value!r} must be in [0, 1]")
    return x


def finite_float(value: str) -> float:
    try:
        x = float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{value!r} is not a number") from exc
    if not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"{value!r} is not finite")
    return x


def positive_float(value: str) -> float:
    x = finite_float(value)
    if x <= 0:
        raise argparse.ArgumentTypeError(f"{value!r} must be > 0")
    return x


# --- parser ---

def build_parser(settings: Settings) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pulses", type=positive_int, default=settings.pulses, help="Pulses per session")
    common.add_argument("--seed", type=seed_int, default=settings.seed, help="Session seed")
    common.add_argument(
        "--protocol",
        choices=[p.value for p in ProtocolKind],
        default=ProtocolKind.SIX_STATE.value,
    )
    common.add_argument(
        "--eve",
        choices=[a.value for a in AttackModel],
        default=AttackModel.NONE.value,
        help="Attack model",
    )
    common.add_argument("--flip-prob", type=fraction_float, default=0.0, help="Depolarizing probability")
    common.add_argument("--misalign-deg", type=finite_float, default=0.0, help="Channel rotation in degrees")
    common.add_argument(
        "--format",
        choices=["json", "csv"],
        default=None,
        help="Output format (default json; csv for table)",
    )
    common.add_argument("--out", type=Path, default=None, help="Output directory")
    common.add_argument("--config-table", type=Path, default=None, help="CSV overriding the embedded table")
    common.add_argument("--z-max", type=positive_float, default=settings.z_max, help="Benchmark z threshold")
    common.add_argument("--workers", type=positive_int, default=settings.workers, help="Worker threads")
    common.add_argument("--log-level", default=settings.log_level, help="Logging level")
    common.add_argument("--progress", action="store_true", help="Show a progress bar")

    parser = argparse.ArgumentParser(prog="sixstate", description="Six-state QKD simulator and analyzer")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Run a session")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("analyze", parents=[common], help="Analyze a recorded pulse log")
    p.add_argument("log", type=Path, help="Pulse-log CSV")
    p.add_argument(
        "--eve-reprocess",
        action="store_true",
        help="Replace Bob's outcomes with those of an emulated intercept-resend Eve",
    )
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("benchmark", parents=[common], help="Paired no-Eve and intercept-resend runs")
    p.add_argument("--lab-points", action="store_true", help="Also score the tabletop measurements")
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("table", parents=[common], help="Print and verify the configuration table")
    p.set_defaults(handler=cmd_table)
    return parser


# --- writers ---

def _out_dir(args: argparse.Namespace) -> Path:
    out = args.out if args.out is not None else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_json(path: Path, document: object) -> Path:
    """Deterministic JSON: fixed key order, no timestamps, trailing newline."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(document, f, indent=2, allow_nan=False)
        f.write("\n")
    return path


def write_csv(path: Path, rows: List[Dict[str, object]]) -> Path:
    pd.DataFrame(rows).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def _session_config(args: argparse.Namespace, attack: Optional[AttackModel] = None) -> SessionConfig:
    return SessionConfig(
        n_pulses=args.pulses,
        seed=args.seed,
        protocol=ProtocolKind(args.protocol),
        attack=attack if attack is not None else AttackModel(args.eve),
        noise=NoiseModel(flip_prob=args.flip_prob, misalign_deg=args.misalign_deg),
    )


def _table(args: argparse.Namespace):
    return load_config_table(args.config_table) if args.config_table else embedded_config_table()


def _report_document(config: Dict[str, object], summary, matrix: CorrelationMatrix, report, fractions, diagnostics):
    return {
        "config": config,
        "summary": summary.to_dict(),
        "matrix": matrix.to_dict(),
        "fractions": fractions.to_dict(),
        "benchmark": report.to_dict(),
        "diagnostics": diagnostics,
    }


def _write_report(out: Path, fmt: str, document: Dict[str, object], matrix: CorrelationMatrix) -> List[Path]:
    if fmt == "json":
        return [write_json(out / "report.json", document)]
    summary = {k: ("" if v is None else v) for k, v in document["summary"].items()}
    return [
        write_csv(out / "summary.csv", [summary]),
        write_csv(out / "matrix.csv", matrix.to_rows()),
        write_csv(out / "fractions.csv", [document["fractions"]]),
        write_csv(out / "benchmark.csv", document["benchmark"]["entries"]),
    ]


def _print_summary(summary) -> None:
    qber = "undefined" if summary.qber is None else f"{summary.qber:.4f}"
    print(f"Pulses: {summary.n_total}")
    print(f"Sifted: {summary.n_sifted} ({summary.sift_fraction:.4f})")
    print(f"QBER: {qber}")
    print(f"Compromised: {summary.n_compromised} ({summary.compromised_fraction:.4f})")


# --- commands ---

def cmd_simulate(args: argparse.Namespace) -> int:
    config = _session_config(args)
    interpretations = interpret_table(_table(args))
    out = _out_dir(args)

    runner = SessionRunner(workers=args.workers, progress=args.progress)
    records = runner.run(config)
    export_pulse_log(records, out / "pulses.csv", interpretations)

    summary = sift(records)
    matrix = correlation_matrix(records)
    report = compare_to_benchmarks(summary, matrix, config.protocol, config.attack, args.z_max)
    document = _report_document(
        config.to_dict(),
        summary,
        matrix,
        report,
        aggregate_fractions(summary, config.attack),
        {"total_rows": summary.n_total, "kept_rows": summary.n_total, "dropped_rows": 0},
    )
    written = _write_report(out, args.format or "json", document, matrix)
    _print_summary(summary)
    for path in [out / "pulses.csv", *written]:
        print(f"Wrote {path}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    table = _table(args)
    rows, diagnostics = ingest_pulse_log(args.log, table)
    result = replay(rows, interpret_table(table))
    records = result.records
    protocol = ProtocolKind(args.protocol)

    if args.eve_reprocess:
        records = reprocess_with_eve(records, args.seed, protocol)
    has_eve = any(r.eve_basis is not None for r in records)
    attack = AttackModel.INTERCEPT_RESEND if has_eve else AttackModel.NONE

    summary = sift(records)
    matrix = correlation_matrix(records)
    report = compare_to_benchmarks(summary, matrix, protocol, attack, args.z_max)
    config = {
        "input": args.log.name,
        "protocol": protocol.value,
        "attack": attack.value,
        "eve_reprocess": args.eve_reprocess,
        "seed": args.seed if args.eve_reprocess else None,
    }
    document = _report_document(
        config,
        summary,
        matrix,
        report,
        aggregate_fractions(summary, attack),
        diagnostics.to_dict(),
    )
    out = _out_dir(args)
    written = _write_report(out, args.format or "json", document, matrix)
    if diagnostics.dropped:
        print(f"Dropped {diagnostics.dropped} of {diagnostics.total_rows} rows")
    _print_summary(summary)
    for path in written:
        print(f"Wrote {path}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    runner = SessionRunner(workers=args.workers, progress=args.progress)
    runs = {}
    for attack in (AttackModel.NONE, AttackModel.INTERCEPT_RESEND):
        config = _session_config(args, attack)
        arrays = runner.run_arrays(config)
        summary = sift_arrays(arrays)
        matrix = correlation_matrix(arrays)
        report = compare_to_benchmarks(summary, matrix, config.protocol, attack, args.z_max)
        runs[attack] = (config, summary, matrix, report)

    passed = all(report.passed for _, _, _, report in runs.values())
    document = {
        "config": {a.value: c.to_dict() for a, (c, _, _, _) in runs.items()},
        "summary": {a.value: s.to_dict() for a, (_, s, _, _) in runs.items()},
        "matrix": {a.value: m.to_dict() for a, (_, _, m, _) in runs.items()},
        "fractions": stacked_fractions(runs[AttackModel.NONE][1], runs[AttackModel.INTERCEPT_RESEND][1]),
        "benchmark": {
            "z_max": args.z_max,
            "pass": passed,
            "runs": {a.value: r.to_dict() for a, (_, _, _, r) in runs.items()},
        },
        "diagnostics": {"dropped_rows": 0},
    }
    if args.lab_points:
        document["lab_points"] = [e.to_dict() for e in lab_points(args.z_max)]

    out = _out_dir(args)
    if (args.format or "json") == "json":
        written = [write_json(out / "benchmark.json", document)]
    else:
        entries = [
            {"attack": a.value, **e.to_dict()} for a, (_, _, _, r) in runs.items() for e in r.entries
        ]
        written = [
            write_csv(out / "benchmark.csv", entries),
            write_csv(out / "fractions.csv", document["fractions"]),
        ]
        if args.lab_points:
            written.append(write_csv(out / "lab_points.csv", document["lab_points"]))

    for attack, (_, summary, _, report) in runs.items():
        status = "PASS" if report.passed else "FAIL"
        print(f"{attack.value}: {status} (sift={summary.sift_fraction:.4f}, qber={summary.qber})")
        for e in report.failures():
            print(f"  {e.name}: measured={e.measured} expected={e.expected:.6f} z={e.z}")
    for path in written:
        print(f"Wrote {path}")
    return 0 if passed else 1


def cmd_table(args: argparse.Namespace) -> int:
    table = _table(args)
    verification = verify_config_table(table)
    entries = [e.to_dict() for e in table]

    if args.format == "json":
        document = {
            "entries": entries,
            "verification": verification.to_dict(),
            "unresolved": verification.unresolved,
            "mismatches": verification.mismatches,
        }
        if args.out is None:
            print(json.dumps(document, indent=2))
        else:
            print(f"Wrote {write_json(_out_dir(args) / 'table.json', document)}")
        return 0

    if args.out is None:
        print(pd.DataFrame(entries).to_csv(index=False, lineterminator="\n"), end="")
        print()
        print(pd.DataFrame(verification.to_dict()).to_csv(index=False, lineterminator="\n"), end="")
    else:
        out = _out_dir(args)
        print(f"Wrote {write_csv(out / 'table.csv', entries)}")
        print(f"Wrote {write_csv(out / 'verification.csv', verification.to_dict())}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        settings = Settings.from_env()
    except ConfigurationError as exc:
        print(f"sixstate: error: {exc}", file=sys.stderr)
        return 2

    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    try:
        setup_logging(args.log_level.upper(), settings.log_file)
    except ValueError:
        print(f"sixstate: error: unknown log level {args.log_level!r}", file=sys.stderr)
        return 2

    try:
        return args.handler(args)
    except (SixStateError, OSError) as exc:
        logger.debug(f"{args.command} failed", exc_info=True)
        print(f"sixstate: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
