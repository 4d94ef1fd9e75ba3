"""Outcome metrics: stride change against baseline and cue on-time per condition."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..errors import NoBaselineError
from ..imu import FORMAT_TAG
from .logs import ConditionRecord, CueLogRecord, StepLogRecord

METRICS_HEADER = (
    "condition",
    "strategy",
    "secondary_task",
    "n_steps",
    "mean_stride",
    "delta_stride",
    "mean_cadence",
    "percent_on",
    "percent_on_final_minute",
)


@dataclass(frozen=True)
class ConditionMetrics:
    condition: int
    strategy: str
    secondary_task: bool
    n_steps: int
    mean_stride: float
    delta_stride: float
    mean_cadence: float
    percent_on: float
    percent_on_final_minute: float

    def label(self) -> str:
        return f"{self.strategy}{' +task' if self.secondary_task else ''}"


@dataclass(frozen=True)
class SessionMetrics:
    baseline_stride: float
    baseline_cadence: float
    n_baseline: int
    conditions: tuple[ConditionMetrics, ...]

    def by_condition(self, strategy: str, secondary_task: bool) -> ConditionMetrics:
        for c in self.conditions:
            if c.strategy == strategy and c.secondary_task == secondary_task:
                return c
        raise KeyError((strategy, secondary_task))


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else math.nan


def on_time(cues: Sequence[CueLogRecord], start: float, end: float) -> float:
    """Seconds the cue is On within ``[start, end)``.

    Cue state changes at each record's ``t`` and holds until the next record;
    before the first record it is Off.
    """
    if end <= start:
        return 0.0
    total = 0.0
    ordered = sorted(cues, key=lambda c: c.t)
    for cur, nxt in zip(ordered, [*ordered[1:], None]):
        if not cur.on:
            continue
        a = max(cur.t, start)
        b = min(nxt.t if nxt is not None else end, end)
        if b > a:
            total += b - a
    return total


def compute_metrics(
    steps: Sequence[StepLogRecord],
    cues: Sequence[CueLogRecord],
    conditions: Sequence[ConditionRecord],
) -> SessionMetrics:
    baseline = [s for s in steps if s.phase == "baseline"]
    if not baseline:
        raise NoBaselineError("no baseline steps in the step log")
    base_l = _mean([s.stride for s in baseline])
    base_f = _mean([s.cadence for s in baseline])
    out = []
    for cond in conditions:
        rows = [s for s in steps if s.phase == "condition" and s.condition == cond.index]
        cue_rows = [c for c in cues if c.condition == cond.index]
        dur = cond.duration
        pct = 100.0 * on_time(cue_rows, cond.start, cond.end) / dur if dur > 0 else math.nan
        final_start = max(cond.start, cond.end - 60.0)
        final = cond.end - final_start
        pct_final = 100.0 * on_time(cue_rows, final_start, cond.end) / final if final > 0 else math.nan
        mean_l = _mean([s.stride for s in rows])
        out.append(
            ConditionMetrics(
                condition=cond.index,
                strategy=cond.strategy,
                secondary_task=cond.secondary_task,
                n_steps=len(rows),
                mean_stride=mean_l,
                delta_stride=mean_l - base_l,
                mean_cadence=_mean([s.cadence for s in rows]),
                percent_on=pct,
                percent_on_final_minute=pct_final,
            )
        )
    return SessionMetrics(base_l, base_f, len(baseline), tuple(out))


def write_metrics_csv(path: str | Path, metrics: SessionMetrics | None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(FORMAT_TAG + "\n")
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for c in metrics.conditions if metrics is not None else ():
            w.writerow(
                [
                    c.condition,
                    c.strategy,
                    int(c.secondary_task),
                    c.n_steps,
                    repr(c.mean_stride),
                    repr(c.delta_stride),
                    repr(c.mean_cadence),
                    repr(c.percent_on),
                    repr(c.percent_on_final_minute),
                ]
            )


def read_metrics_csv(path: str | Path) -> list[ConditionMetrics]:
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or tuple(header) != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        return [
            ConditionMetrics(
                int(r[0]), r[1], r[2] == "1", int(r[3]), *(float(v) for v in r[4:])
            )
            for r in reader
            if r
        ]
