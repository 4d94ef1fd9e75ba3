"""Adaptive-threshold swing/stance detector for one foot-mounted IMU.

The decision logic runs once per sample:

1. push the sample into a fixed-length window and aggregate window features;
2. aggregate above ``th_dynamic`` marks swing and re-arms the debounce counter,
   anything else marks not-swing;
3. aggregate below ``th_static`` forces not-swing and advances the debounce
   counter;
4. a swing sample while a rising edge is awaited records a rising edge;
5. a not-swing sample while a falling edge is awaited, with the debounce
   counter elapsed, records a falling edge and re-derives both thresholds from
   the peak aggregate of the finished swing.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from ..errors import OrderingError, SampleDataError
from ..imu import GRAVITY, ImuSample


class EventKind(str, Enum):
    SWING_START = "SwingStart"
    SWING_END = "SwingEnd"


@dataclass(frozen=True, slots=True)
class GaitEvent:
    kind: EventKind
    t: float
    foot: str


@dataclass(frozen=True)
class DetectorConfig:
    window: int = 15
    debounce: int = 7
    th_dynamic_init: float = 1.0
    th_static_init: float = 0.5
    th_floor: float = 1.0
    th_cap: float = 5.0
    peak_fraction: float = 0.5
    static_ratio: float = 1.5
    static_min: float = 2.0
    eps_static: float = 0.25
    gyro_ref_dps: float = 100.0
    accel_ref: float = 1.0
    gravity: float = GRAVITY

    def __post_init__(self) -> None:
        if self.window < 1 or self.debounce < 1:
            raise ValueError("window and debounce must be >= 1")
        if not 0 < self.th_static_init <= self.th_dynamic_init:
            raise ValueError("need 0 < th_static_init <= th_dynamic_init")
        if not 0 < self.th_floor <= self.th_cap:
            raise ValueError("need 0 < th_floor <= th_cap")


def sample_features(sample: ImuSample, cfg: DetectorConfig) -> tuple[float, float]:
    """Per-sample contributions: normalized gyro energy and |‖a‖ - g|."""
    gx, gy, gz = sample.gyro
    ax, ay, az = sample.accel
    energy = (gx * gx + gy * gy + gz * gz) / (cfg.gyro_ref_dps * cfg.gyro_ref_dps)
    dev = abs(math.sqrt(ax * ax + ay * ay + az * az) - cfg.gravity) / cfg.accel_ref
    return energy, dev


class SwingDetector:
    """Mutable per-foot detector state.

    Rising and falling edges are kept as two alternating lists of timestamps.
    ``step`` accepts an already aggregated feature value, which is how the
    decision logic is exercised in isolation; ``update`` computes the
    aggregate from a raw sample first.
    """

    def __init__(self, foot: str = "L", config: DetectorConfig | None = None):
        self.foot = foot
        self.config = config or DetectorConfig()
        cfg = self.config
        self.window: deque[tuple[float, float]] = deque(maxlen=cfg.window)
        self.is_swing: deque[bool] = deque(maxlen=cfg.window)
        self.th_dynamic = cfg.th_dynamic_init
        self.th_static = cfg.th_static_init
        self.debounce_counter = 0
        self.rising_edges: list[float] = []
        self.falling_edges: list[float] = []
        self.step_features: dict[str, float] = {}
        self.last_aggregate = 0.0
        self._awaiting_rising = True
        self._since_falling = cfg.debounce
        self._peak = 0.0
        self._last_t: float | None = None

    @property
    def in_swing(self) -> bool:
        """True between a recorded rising edge and its falling edge."""
        return not self._awaiting_rising

    def aggregate(self) -> float:
        n = len(self.window)
        if n == 0:
            return 0.0
        energy = sum(w[0] for w in self.window) / n
        dev = sum(w[1] for w in self.window) / n
        return max(energy, dev)

    def update(self, sample: ImuSample) -> GaitEvent | None:
        self._check_time(sample.t)
        sample.validate()
        self.window.append(sample_features(sample, self.config))
        return self._decide(sample.t, self.aggregate())

    def step(self, t: float, aggregate: float) -> GaitEvent | None:
        if not math.isfinite(aggregate):
            raise SampleDataError(f"non-finite aggregate at t={t!r}")
        self._check_time(t)
        return self._decide(t, aggregate)

    def _check_time(self, t: float) -> None:
        if not math.isfinite(t):
            raise SampleDataError(f"non-finite timestamp {t!r}")
        if self._last_t is not None and t <= self._last_t:
            raise OrderingError(f"timestamp {t!r} is not after {self._last_t!r}")

    def _decide(self, t: float, agg: float) -> GaitEvent | None:
        cfg = self.config
        self._last_t = t
        self.last_aggregate = agg

        if agg > self.th_dynamic:
            swing = True
            self.debounce_counter = 0
        else:
            swing = False
        if agg < self.th_static:
            swing = False
            self.debounce_counter += 1
        self.is_swing.append(swing)
        self._since_falling += 1

        event = None
        if self._awaiting_rising:
            # refractory period keeps consecutive events >= debounce samples apart
            if swing and self._since_falling >= cfg.debounce:
                self.rising_edges.append(t)
                self._awaiting_rising = False
                self._peak = agg
                event = GaitEvent(EventKind.SWING_START, t, self.foot)
        else:
            self._peak = max(self._peak, agg)
            if not swing and self.debounce_counter >= cfg.debounce:
                self._finish_step(t)
                self.falling_edges.append(t)
                self._awaiting_rising = True
                self._since_falling = 0
                event = GaitEvent(EventKind.SWING_END, t, self.foot)
        return event

    def _finish_step(self, t: float) -> None:
        cfg = self.config
        start = self.rising_edges[-1]
        candidate = cfg.peak_fraction * self._peak
        self.step_features = {"peak": self._peak, "duration": t - start, "candidate": candidate}
        self.th_dynamic = min(max(candidate, cfg.th_floor), cfg.th_cap)
        th_static = cfg.eps_static * max(min(cfg.static_ratio * candidate, self.th_dynamic), cfg.static_min)
        self.th_static = min(th_static, self.th_dynamic)


def detect_swing(state: SwingDetector, sample: ImuSample) -> tuple[SwingDetector, GaitEvent | None]:
    """Functional wrapper around :meth:`SwingDetector.update`."""
    return state, state.update(sample)
