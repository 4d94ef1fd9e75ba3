"""IMU samples and the shared CSV ingestion format.

Rows are ``t,ax,ay,az,gx,gy,gz,qw,qx,qy,qz,foot`` with accelerations in m/s^2,
angular rates in deg/s and an optional unit quaternion (sensor to world).
Floats are written with ``repr`` so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import SampleDataError

FORMAT_TAG = "#gaitloop-v1"
IMU_HEADER = ("t", "ax", "ay", "az", "gx", "gy", "gz", "qw", "qx", "qy", "qz", "foot")
FEET = ("L", "R")
NOMINAL_RATE_HZ = 142.0
GRAVITY = 9.80665


@dataclass(frozen=True, slots=True)
class ImuSample:
    t: float
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]
    quat: tuple[float, float, float, float] | None = None

    def validate(self) -> None:
        values = (self.t, *self.accel, *self.gyro, *(self.quat or ()))
        if not all(math.isfinite(v) for v in values):
            raise SampleDataError(f"non-finite value in IMU sample at t={self.t!r}")
        if self.quat is not None:
            norm = math.sqrt(sum(v * v for v in self.quat))
            if abs(norm - 1.0) > 1e-6:
                raise SampleDataError(f"quaternion norm {norm!r} at t={self.t!r} is not 1")


def foot_order(foot: str) -> int:
    return FEET.index(foot)


def samples_from_arrays(
    t: np.ndarray,
    accel: np.ndarray,
    gyro: np.ndarray,
    quat: np.ndarray | None = None,
) -> list[ImuSample]:
    ts = t.tolist()
    acc = accel.tolist()
    gyr = gyro.tolist()
    qs = quat.tolist() if quat is not None else [None] * len(ts)
    return [
        ImuSample(ti, tuple(a), tuple(g), tuple(q) if q is not None else None)
        for ti, a, g, q in zip(ts, acc, gyr, qs)
    ]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_imu_csv(path: str | Path, rows: Iterable[tuple[str, ImuSample]]) -> int:
    """Write ``(foot, sample)`` rows; returns the number of rows written."""
    n = 0
    with open(path, "w", newline="") as fh:
        fh.write(FORMAT_TAG + "\n")
        writer = csv.writer(fh)
        writer.writerow(IMU_HEADER)
        for foot, s in rows:
            q = [_fmt(v) for v in s.quat] if s.quat is not None else ["", "", "", ""]
            writer.writerow(
                [_fmt(s.t), *(_fmt(v) for v in s.accel), *(_fmt(v) for v in s.gyro), *q, foot]
            )
            n += 1
    return n


def iter_imu_csv(path: str | Path) -> Iterator[tuple[str, ImuSample]]:
    with open(path, newline="") as fh:
        lines = (line for line in fh if not line.startswith("#"))
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != IMU_HEADER:
            raise SampleDataError(f"{path}: expected IMU header {','.join(IMU_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(IMU_HEADER):
                raise SampleDataError(f"{path}:{lineno}: expected {len(IMU_HEADER)} columns")
            foot = row[11].strip()
            if foot not in FEET:
                raise SampleDataError(f"{path}:{lineno}: foot must be L or R, got {foot!r}")
            qcols = row[7:11]
            if all(c.strip() == "" for c in qcols):
                quat = None
            else:
                quat = tuple(float(c) for c in qcols)
            yield foot, ImuSample(
                float(row[0]),
                (float(row[1]), float(row[2]), float(row[3])),
                (float(row[4]), float(row[5]), float(row[6])),
                quat,
            )


def read_imu_csv(path: str | Path) -> list[tuple[str, ImuSample]]:
    return list(iter_imu_csv(path))


def split_by_foot(rows: Sequence[tuple[str, ImuSample]]) -> dict[str, list[ImuSample]]:
    out: dict[str, list[ImuSample]] = {f: [] for f in FEET}
    for foot, s in rows:
        out[foot].append(s)
    return out


def merge_streams(streams: dict[str, Sequence[ImuSample]]) -> list[tuple[str, ImuSample]]:
    """Interleave per-foot streams by timestamp; ties go to the left foot."""
    rows = [(foot, s) for foot, seq in streams.items() for s in seq]
    rows.sort(key=lambda r: (r[1].t, foot_order(r[0])))
    return rows
