"""Streaming per-foot pipeline: detector events to StrideRecords.

A stride record for swing k is completed at the next SwingStart of the same
foot, once both its cadence interval and the stance after it are known. The
stance anchors are the stillest samples (minimum aggregate) of the stance
before and after the swing.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import UnboundedStrideError
from ..imu import NOMINAL_RATE_HZ, ImuSample, foot_order
from .detector import DetectorConfig, EventKind, GaitEvent, SwingDetector
from .orientation import OrientationFilter
from .stride import StrideRecord, estimate_stride

log = logging.getLogger(__name__)


@dataclass
class _Stance:
    start_idx: int
    min_agg: float = float("inf")
    first_min: int = -1
    last_min: int = -1

    def add(self, idx: int, agg: float) -> None:
        if agg < self.min_agg:
            self.min_agg = agg
            self.first_min = idx
            self.last_min = idx
        elif agg == self.min_agg:
            self.last_min = idx


class FootTracker:
    def __init__(
        self,
        foot: str,
        detector_config: DetectorConfig | None = None,
        buffer_seconds: float = 6.0,
        rate_hz: float = NOMINAL_RATE_HZ,
        beta: float = 0.1,
    ):
        self.foot = foot
        self.detector = SwingDetector(foot, detector_config)
        self.events: list[GaitEvent] = []
        self.records: list[StrideRecord] = []
        self._orient = OrientationFilter(beta)
        self._buf: deque[tuple[int, ImuSample, tuple]] = deque(maxlen=int(buffer_seconds * rate_hz * 1.1) + 1)
        self._idx = -1
        self._stance: _Stance | None = _Stance(0)
        self._rise: GaitEvent | None = None
        self._fall: GaitEvent | None = None
        self._anchor: int | None = None
        self._prev_t: float | None = None

    def push(self, sample: ImuSample) -> StrideRecord | None:
        event = self.detector.update(sample)
        self._idx += 1
        idx = self._idx
        if sample.quat is not None:
            q = sample.quat
        else:
            dt = 0.0 if self._prev_t is None else sample.t - self._prev_t
            q = self._orient.update(sample.accel, sample.gyro, dt)
        self._prev_t = sample.t
        self._buf.append((idx, sample, q))

        record = None
        if event is None:
            if self._stance is not None:
                self._stance.add(idx, self.detector.last_aggregate)
            return None

        self.events.append(event)
        if event.kind == EventKind.SWING_START:
            stance = self._stance
            if self._rise is not None and self._fall is not None and stance is not None:
                record = self._complete(event, stance.first_min)
            self._rise = event
            self._fall = None
            self._anchor = stance.last_min if stance is not None and stance.last_min >= 0 else None
            self._stance = None
        else:
            self._fall = event
            self._stance = _Stance(idx)
            self._stance.add(idx, self.detector.last_aggregate)
        return record

    def _complete(self, next_rise: GaitEvent, end_anchor: int) -> StrideRecord | None:
        rise, fall = self._rise, self._fall
        assert rise is not None and fall is not None
        try:
            if self._anchor is None or end_anchor < 0:
                raise UnboundedStrideError("no stance anchor recorded")
            first_idx = self._buf[0][0]
            if self._anchor < first_idx:
                raise UnboundedStrideError("start anchor fell out of the sample buffer")
            lo = self._anchor - first_idx
            hi = end_anchor - first_idx
            seg = [self._buf[i] for i in range(lo, hi + 1)]
            est = estimate_stride(
                [s for _, s, _ in seg], (rise, fall), orientations=np.array([q for _, _, q in seg])
            )
        except UnboundedStrideError as exc:
            log.warning("foot %s: dropping stride starting at %r: %s", self.foot, rise.t, exc)
            return None
        rec = StrideRecord(
            foot=self.foot,
            start_t=rise.t,
            end_t=next_rise.t,
            stride_length=est.length,
            cadence=1.0 / (next_rise.t - rise.t),
            n=len(self.records) + 1,
            low_confidence=est.low_confidence,
        )
        self.records.append(rec)
        return rec


def record_sort_key(rec: StrideRecord) -> tuple[float, int, int]:
    return (rec.end_t, foot_order(rec.foot), rec.n)


def estimate_streams(
    streams: dict[str, Sequence[ImuSample]] | Iterable[tuple[str, ImuSample]],
    detector_config: DetectorConfig | None = None,
) -> list[StrideRecord]:
    """Run one tracker per foot and return all strides ordered by completion time."""
    if isinstance(streams, dict):
        items = streams.items()
    else:
        grouped: dict[str, list[ImuSample]] = {}
        for foot, s in streams:
            grouped.setdefault(foot, []).append(s)
        items = grouped.items()
    records: list[StrideRecord] = []
    for foot, samples in items:
        tracker = FootTracker(foot, detector_config)
        for s in samples:
            tracker.push(s)
        records.extend(tracker.records)
    records.sort(key=record_sort_key)
    return records
