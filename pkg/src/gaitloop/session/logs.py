"""Session log records and their versioned CSV files."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Type, TypeVar

from ..imu import FORMAT_TAG

T = TypeVar("T")


@dataclass(frozen=True, slots=True)
class StepLogRecord:
    n: int
    t: float
    foot: str
    cadence: float
    stride: float
    cue_prev: float  # model input: cue audible when the step began, 0 when Off
    cue_next: float | None
    cue_on: bool
    snapshot_id: int | None
    phase: str  # baseline | training | condition
    condition: int  # -1 outside conditions
    start_t: float
    low_confidence: bool


@dataclass(frozen=True, slots=True)
class CueLogRecord:
    t: float
    freq_hz: float | None
    on: bool
    strategy: str
    condition: int


@dataclass(frozen=True, slots=True)
class ConditionRecord:
    index: int
    strategy: str
    secondary_task: bool
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True, slots=True)
class WalkerTraceRecord:
    n: int
    t: float
    foot: str
    cadence: float
    stride: float
    cue_hz: float | None
    secondary_task: bool
    phase: str
    condition: int


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _parse(raw: str, typ: Any) -> Any:
    typ = str(typ)
    optional = "None" in typ
    if optional and raw == "":
        return None
    if typ.startswith("bool"):
        return raw == "1"
    if typ.startswith("int"):
        return int(raw)
    if typ.startswith("float"):
        return float(raw)
    return raw


def write_records(path: str | Path, records: Iterable[Any], cls: Type[Any]) -> None:
    names = [f.name for f in fields(cls)]
    with open(path, "w", newline="") as fh:
        fh.write(FORMAT_TAG + "\n")
        w = csv.writer(fh)
        w.writerow(names)
        for r in records:
            w.writerow([_fmt(v) for v in astuple(r)])


def read_records(path: str | Path, cls: Type[T]) -> list[T]:
    flds = fields(cls)
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\r\n")
        if first != FORMAT_TAG:
            raise ValueError(f"{path}: missing {FORMAT_TAG} header line")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != [f.name for f in flds]:
            raise ValueError(f"{path}: unexpected columns {header}")
        return [cls(*(_parse(raw, f.type) for raw, f in zip(row, flds))) for row in reader if row]
