"""Cadence from swing onsets and stride length by zero-velocity-anchored dead reckoning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ..errors import InsufficientDataError, UnboundedStrideError
from ..imu import GRAVITY, ImuSample
from .detector import EventKind, GaitEvent
from .orientation import OrientationFilter, rotate_to_world

# world-frame |a - g| at a stance anchor above this marks the stride low-confidence
STANCE_RESIDUAL_BOUND = 0.5


@dataclass(frozen=True, slots=True)
class StrideRecord:
    foot: str
    start_t: float
    end_t: float
    stride_length: float
    cadence: float
    n: int
    low_confidence: bool = False


class StrideEstimate(NamedTuple):
    length: float
    low_confidence: bool
    anchor_residual: float


def estimate_cadence(events: Sequence[GaitEvent], foot: str) -> float:
    """Reciprocal of the latest SwingStart-to-SwingStart interval for ``foot``."""
    starts = [e.t for e in events if e.foot == foot and e.kind == EventKind.SWING_START]
    if len(starts) < 2:
        raise InsufficientDataError(f"need two SwingStart events for foot {foot}, got {len(starts)}")
    dt = starts[-1] - starts[-2]
    if dt <= 0:
        raise InsufficientDataError("SwingStart events are not increasing in time")
    return 1.0 / dt


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    dt = np.diff(t)[:, None]
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * dt, axis=0)
    return out


def zero_velocity_track(
    t: np.ndarray, accel_world: np.ndarray, gravity: float = GRAVITY
) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and position between two stance anchors (first and last sample).

    Velocity starts at zero and is linearly de-drifted so it is zero again at
    the last sample.
    """
    lin = accel_world - np.array([0.0, 0.0, gravity])
    vel = _cumtrapz(lin, t)
    span = t[-1] - t[0]
    ramp = ((t - t[0]) / span)[:, None]
    vel = vel - vel[-1] * ramp
    vel[-1] = 0.0
    pos = _cumtrapz(vel, t)
    return vel, pos


def estimate_stride(
    samples: Sequence[ImuSample],
    events: tuple[GaitEvent, GaitEvent],
    orientations: np.ndarray | None = None,
    gravity: float = GRAVITY,
    beta: float = 0.1,
) -> StrideEstimate:
    """Horizontal displacement of the foot across one swing.

    ``samples`` must start and end inside stance; ``events`` are the SwingStart
    and SwingEnd of the swing in between. Orientation comes from, in order of
    preference, ``orientations``, the samples' own quaternions, or an internal
    orientation filter seeded at the first (stationary) sample.
    """
    start, end = events
    if start.kind != EventKind.SWING_START or end.kind != EventKind.SWING_END:
        raise UnboundedStrideError("events must be a (SwingStart, SwingEnd) pair")
    if len(samples) < 3:
        raise UnboundedStrideError("segment too short to hold two stance anchors")
    t = np.array([s.t for s in samples])
    if not t[0] < start.t <= end.t <= t[-1]:
        raise UnboundedStrideError(
            f"segment [{t[0]!r}, {t[-1]!r}] does not enclose swing [{start.t!r}, {end.t!r}]"
        )
    accel = np.array([s.accel for s in samples])
    if orientations is None:
        if all(s.quat is not None for s in samples):
            orientations = np.array([s.quat for s in samples])
        else:
            filt = OrientationFilter(beta=beta)
            quats = [filt.update(samples[0].accel, samples[0].gyro, 0.0)]
            for prev, s in zip(samples[:-1], samples[1:]):
                quats.append(filt.update(s.accel, s.gyro, s.t - prev.t))
            orientations = np.array(quats)
    accel_world = rotate_to_world(orientations, accel)
    g_vec = np.array([0.0, 0.0, gravity])
    residual = float(max(np.linalg.norm(accel_world[0] - g_vec), np.linalg.norm(accel_world[-1] - g_vec)))
    _, pos = zero_velocity_track(t, accel_world, gravity)
    length = float(np.hypot(*(pos[-1, :2] - pos[0, :2])))
    return StrideEstimate(length, residual > STANCE_RESIDUAL_BOUND, residual)
