"""Command-line entry point: ``bidopt <subcommand> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench.config import BenchConfig, load_config
from .bench.runner import (
    VARIANTS, emit_report, emit_sweep, log_training_days, macro_config, micro_config, report_tables,
    run_benchmark, sweep_segments,
)
from .bench.synth import synth_macro_records
from .macro.data import read_records, write_records
from .macro.train import save_model, train_macro
from .micro.dt import save_policy, train_micro
from .micro.mdp import read_trajectories, write_trajectories

log = logging.getLogger("bidopt")


def _segments(text: str) -> list[int]:
    """``6-15`` or ``6,8,10``."""
    try:
        if "-" in text:
            lo, hi = (int(x) for x in text.split("-", 1))
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad segment list {text!r}") from None


def _config(args) -> BenchConfig:
    return load_config(args.config, args.seed)


def _out(args, default: str) -> Path:
    return Path(args.out if args.out is not None else default)


def cmd_synth_data(args) -> int:
    cfg = _config(args)
    out = _out(args, "data")
    out.mkdir(parents=True, exist_ok=True)
    records = synth_macro_records(cfg.macro_data.model_copy(update={"seed": cfg.seed}))
    write_records(out / "macro_records.csv", records)
    world = log_training_days(cfg, cfg.seed)
    write_trajectories(out / "trajectories.jsonl", world.trajectories)
    write_records(out / "auction_records.csv", world.records)
    print(f"wrote {len(records)} day records, {len(world.trajectories)} trajectories to {out}")
    return 0


def cmd_train_macro(args) -> int:
    cfg = _config(args)
    overrides = {k: v for k, v in (("segments", args.segments), ("epochs", args.epochs)) if v is not None}
    model, report = train_macro(read_records(args.data), macro_config(cfg, cfg.seed, **overrides))
    path = _out(args, "macro_model.json")
    save_model(path, model, report)
    print(f"wmape={report.wmape:.4f} mape={report.mape:.4f} perf10={report.perf10:.4f} -> {path}")
    return 0


def cmd_train_micro(args) -> int:
    cfg = _config(args)
    overrides = {"beta": args.beta} if args.beta is not None else {}
    model, report = train_micro(read_trajectories(args.traj), micro_config(cfg, cfg.seed, **overrides))
    path = _out(args, "micro_policy.json")
    save_policy(path, model, report)
    print(f"final loss={report.total[-1]:.6f} target return={model.target_return:.4f} -> {path}")
    return 0


def cmd_run_bench(args) -> int:
    cfg = _config(args)
    report = run_benchmark(cfg, args.variants)
    for path in emit_report(report, _out(args, "bench_out")):
        print(path)
    return 0


def cmd_sweep_segments(args) -> int:
    cfg = _config(args)
    sweep = sweep_segments(cfg, args.segments)
    for path in emit_sweep(sweep, _out(args, "sweep_out")):
        print(path)
    print(f"wmape spread across segment counts: {sweep['spread']:.4f}")
    return 0


def cmd_report(args) -> int:
    report = json.loads(Path(args.report).read_text())
    tables = report_tables(report)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in tables.items():
            (out / name).write_text(text)
    print(f"config sha256 {report['config_sha256']}  seeds {report['replicate_seeds']}")
    for v, body in report["variants"].items():
        means = " ".join(f"{m}={x:.4f}" for m, x in body["mean"].items())
        print(f"{v:<20} {means}")
    for note in report.get("notes", []):
        print(f"note: {note}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config; defaults are used for missing keys")
    common.add_argument("--seed", type=int, help="base seed, overrides the config")
    common.add_argument("--out", help="output file or directory")

    p = argparse.ArgumentParser(prog="bidopt", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-data", parents=[common], help="write synthetic day records and logged trajectories")
    s.set_defaults(func=cmd_synth_data)

    s = sub.add_parser("train-macro", parents=[common], help="fit the price-volume model")
    s.add_argument("--data", required=True, help="day-record CSV")
    s.add_argument("--segments", type=int)
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_train_macro)

    s = sub.add_parser("train-micro", parents=[common], help="fit the sequence policy on logged trajectories")
    s.add_argument("--traj", required=True, help="trajectory JSONL")
    s.add_argument("--beta", type=float, help="weight pulling the policy toward the pacing rule")
    s.set_defaults(func=cmd_train_micro)

    s = sub.add_parser("run-bench", parents=[common], help="paired-seed comparison of all variants")
    s.add_argument("--variants", nargs="+", choices=list(VARIANTS), help="subset of variants to run")
    s.set_defaults(func=cmd_run_bench)

    s = sub.add_parser("sweep-segments", parents=[common], help="held-out wmape across segment counts")
    s.add_argument("--segments", type=_segments, default=list(range(6, 16)), help="e.g. 6-15 or 6,10,14")
    s.set_defaults(func=cmd_sweep_segments)

    s = sub.add_parser("report", parents=[common], help="summarise a report.json and re-emit its tables")
    s.add_argument("report", help="path to report.json")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"bidopt: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
