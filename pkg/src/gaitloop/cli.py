"""Command-line entry point: ``gaitloop <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .errors import GaitloopError
from .gait_estimation import estimate_streams
from .imu import FORMAT_TAG, read_imu_csv
from .session.config import load_config
from .session.logs import ConditionRecord, CueLogRecord, StepLogRecord, read_records
from .session.metrics import SessionMetrics, compute_metrics, write_metrics_csv
from .session.plots import emit_plots
from .session.runner import SessionResult, run_session
from .slc_model import SlcRel, TargetSpec, fit_slcrel, read_training_csv, select_targets

log = logging.getLogger("gaitloop")

STRIDE_HEADER = ("foot", "start_t", "end_t", "stride_length", "cadence", "n", "low_confidence")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=default, help="YAML session config")
    p.add_argument("--seed", type=int, default=default, help="override the config seed")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaitloop", description=__doc__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    add("simulate", "run a simulated session and write logs, metrics and plots")
    p = add("replay", "re-run a session from a recorded IMU CSV")
    p.add_argument("--input", help="IMU CSV (defaults to input_log from the config)")
    p = add("fit-slc", "fit the stride/cadence relationship from a training CSV")
    p.add_argument("training", help="CSV with cadence_hz,stride_m,beat_hz")
    p.add_argument("--baseline", type=float, help="baseline cadence in Hz for target selection")
    p = add("estimate", "IMU CSV to stride/cadence CSV")
    p.add_argument("imu", help="IMU CSV")
    p = add("metrics", "recompute metrics from a session directory")
    p.add_argument("run", help="session output directory")
    p = add("plot", "draw charts from a session directory")
    p.add_argument("run", help="session output directory")
    return parser


def _session(args: argparse.Namespace, mode: str) -> SessionResult:
    overrides = {"mode": mode, "seed": args.seed, "out_dir": args.out}
    if mode == "Replay":
        overrides["input_log"] = getattr(args, "input", None)
    cfg = load_config(args.config, **overrides)
    result = run_session(cfg)
    emit_plots(result.metrics, result.out_dir, result.rel, result.targets, result.training)
    _print_metrics(result.metrics)
    print(f"logs written to {result.out_dir}")
    return result


def _print_metrics(m: SessionMetrics) -> None:
    print(f"baseline: {m.n_baseline} strides, mean stride {m.baseline_stride:.4f} m, cadence {m.baseline_cadence:.4f} Hz")
    for c in m.conditions:
        print(
            f"  condition {c.condition} {c.label():<16} steps {c.n_steps:4d}  "
            f"delta stride {c.delta_stride:+.4f} m  cue on {c.percent_on:6.2f}%"
        )


def _write_strides(fh, records) -> None:
    fh.write(FORMAT_TAG + "\n")
    w = csv.writer(fh)
    w.writerow(STRIDE_HEADER)
    for r in records:
        w.writerow(
            [r.foot, repr(r.start_t), repr(r.end_t), repr(r.stride_length), repr(r.cadence), r.n, int(r.low_confidence)]
        )


def _load_run(run: Path) -> tuple[SessionMetrics, dict]:
    steps = read_records(run / "steps.csv", StepLogRecord)
    cues = read_records(run / "cues.csv", CueLogRecord)
    conds = read_records(run / "conditions.csv", ConditionRecord)
    summary_path = run / "session.json"
    summary = {}
    if summary_path.exists():
        text = summary_path.read_text()
        summary = json.loads("\n".join(l for l in text.splitlines() if not l.startswith("#")))
    return compute_metrics(steps, cues, conds), summary


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out) if args.out else None
    try:
        if args.command == "simulate":
            _session(args, "Simulate")
        elif args.command == "replay":
            _session(args, "Replay")
        elif args.command == "fit-slc":
            rows = read_training_csv(args.training)
            rel = fit_slcrel([(c, l) for c, l, _ in rows])
            doc = {"slc": rel.to_dict()}
            if args.baseline is not None:
                doc["targets"] = select_targets(rel, args.baseline).to_dict()
            text = json.dumps(doc, indent=2)
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                (out / "slc.json").write_text(FORMAT_TAG + "\n" + text)
            print(text)
        elif args.command == "estimate":
            records = estimate_streams(read_imu_csv(args.imu))
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                with open(out / "strides.csv", "w", newline="") as fh:
                    _write_strides(fh, records)
            else:
                _write_strides(sys.stdout, records)
        elif args.command == "metrics":
            run = Path(args.run)
            metrics, _ = _load_run(run)
            write_metrics_csv((out or run) / "metrics.csv", metrics)
            _print_metrics(metrics)
        elif args.command == "plot":
            run = Path(args.run)
            metrics, summary = _load_run(run)
            rel = SlcRel.from_dict(summary["slc"]) if "slc" in summary else None
            targets = TargetSpec.from_dict(summary["targets"]) if "targets" in summary else None
            training = read_training_csv(run / "training.csv") if (run / "training.csv").exists() else []
            for path in emit_plots(metrics, out or run, rel, targets, training):
                print(path)
    except (GaitloopError, OSError, ValueError) as exc:
        print(f"gaitloop: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
