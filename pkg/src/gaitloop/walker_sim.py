"""Simulated walker: cue response model plus foot-IMU synthesis.

The walker stands in for a participant. Its behavioural parameters are
inventions used only to close the loop; the IMU synthesis produces
kinematically exact streams (minimum-jerk swing, motionless stance) so the
estimation pipeline can be checked against known stride and cadence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import InfeasibleGaitError
from .imu import GRAVITY, NOMINAL_RATE_HZ, ImuSample, samples_from_arrays
from .gait_estimation.orientation import DEG, axis_angle_quat, quat_to_matrix


@dataclass(frozen=True)
class WalkerProfile:
    slc_true: tuple[float, ...]
    f_baseline: float
    entrainment_gain: float = 1.0
    noise_f: float = 0.0
    noise_l: float = 0.0
    habituation_rate: float = 0.0
    distraction_penalty: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.entrainment_gain <= 1.0:
            raise ValueError("entrainment_gain must lie in [0, 1]")
        if self.noise_f < 0 or self.noise_l < 0 or self.habituation_rate < 0:
            raise ValueError("noise levels and habituation_rate must be >= 0")
        if not 0.0 <= self.distraction_penalty <= 1.0:
            raise ValueError("distraction_penalty must lie in [0, 1]")
        if self.f_baseline <= 0:
            raise ValueError("f_baseline must be > 0")
        object.__setattr__(self, "slc_true", tuple(float(c) for c in self.slc_true))

    def stride_at(self, cadence: float) -> float:
        return float(np.polyval(self.slc_true, cadence))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "WalkerProfile":
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {
            "slc_true": list(self.slc_true),
            "f_baseline": self.f_baseline,
            "entrainment_gain": self.entrainment_gain,
            "noise_f": self.noise_f,
            "noise_l": self.noise_l,
            "habituation_rate": self.habituation_rate,
            "distraction_penalty": self.distraction_penalty,
        }


@dataclass(frozen=True)
class WalkerState:
    cadence: float
    stride: float
    step: int
    gain: float

    @classmethod
    def initial(cls, profile: WalkerProfile) -> "WalkerState":
        return cls(profile.f_baseline, profile.stride_at(profile.f_baseline), 0, profile.entrainment_gain)


def _cue_freq(cue: Any) -> float | None:
    if cue is None:
        return None
    if hasattr(cue, "freq"):
        return cue.freq
    return float(cue)


def walker_step(
    state: WalkerState,
    profile: WalkerProfile,
    cue: Any,
    rng: np.random.Generator,
    secondary_task: bool = False,
) -> tuple[WalkerState, float, float]:
    """Advance one step. ``cue`` is a frequency in Hz, ``None`` for Off, or a CueCommand.

    Cadence closes ``gain`` of the gap to the cue (to ``f_baseline`` when Off);
    the gain decays by ``habituation_rate`` on every cued step. Observed
    cadence and stride carry additive Gaussian noise of std ``noise_f`` (Hz)
    and ``noise_l`` (m).
    """
    freq = _cue_freq(cue)
    target = profile.f_baseline if freq is None else freq
    c_next = state.cadence + state.gain * (target - state.cadence)
    e_f, e_l = rng.standard_normal(2).tolist()
    cadence = max(c_next + profile.noise_f * e_f, 1e-3)
    stride = float(profile.stride_at(cadence))
    if secondary_task:
        stride *= profile.distraction_penalty
    stride = max(stride + profile.noise_l * e_l, 0.0)
    gain = state.gain * (1.0 - profile.habituation_rate) if freq is not None else state.gain
    return WalkerState(c_next, stride, state.step + 1, gain), cadence, stride


@dataclass(frozen=True)
class GaitShape:
    swing_fraction: float = 0.5
    pitch_deg_per_m: float = 25.0
    clearance_per_m: float = 0.08
    max_swing_speed: float = 20.0
    rate_hz: float = NOMINAL_RATE_HZ

    def __post_init__(self) -> None:
        if not 0.0 < self.swing_fraction <= 0.75:
            raise ValueError("swing_fraction must leave at least 25% stance")


_X_AXIS = np.array([1.0, 0.0, 0.0])
_FORWARD = np.array([0.0, 1.0, 0.0])


def check_feasible(cadence: float, stride: float, shape: GaitShape = GaitShape()) -> None:
    if not (cadence > 0 and math.isfinite(cadence)):
        raise InfeasibleGaitError(f"cadence must be > 0, got {cadence!r}")
    if not (stride >= 0 and math.isfinite(stride)):
        raise InfeasibleGaitError(f"stride must be >= 0, got {stride!r}")
    swing = shape.swing_fraction / cadence
    peak_speed = 1.875 * stride / swing
    if peak_speed > shape.max_swing_speed:
        raise InfeasibleGaitError(
            f"stride {stride:.3f} m at {cadence:.3f} Hz needs swing speed {peak_speed:.1f} m/s "
            f"(cap {shape.max_swing_speed} m/s)"
        )


def cycle_kinematics(
    t: np.ndarray, t0: float, cadence: float, stride: float, shape: GaitShape = GaitShape()
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accel (m/s^2), gyro (deg/s) and quaternions for sample times inside one gait cycle.

    The cycle ``[t0, t0 + 1/cadence)`` is half stance, swing, half stance, so
    swing onsets of consecutive cycles are exactly ``1/cadence`` apart.
    """
    period = 1.0 / cadence
    d = shape.swing_fraction * period
    ts = t0 + 0.5 * (period - d)
    tau = np.clip((t - ts) / d, 0.0, 1.0)

    # minimum-jerk forward displacement: s = 10 tau^3 - 15 tau^4 + 6 tau^5
    acc_fwd = stride * (60 * tau - 180 * tau**2 + 120 * tau**3) / d**2
    h = shape.clearance_per_m * stride
    u = tau * (1 - tau)
    acc_up = h * 64 * (6 * u * (1 - 2 * tau) ** 2 - 6 * u**2) / d**2
    amp = shape.pitch_deg_per_m * stride
    pitch = amp * 0.5 * (1 - np.cos(2 * np.pi * tau))
    pitch_rate = amp * np.pi * np.sin(2 * np.pi * tau) / d

    quat = axis_angle_quat(_X_AXIS, pitch * DEG)
    acc_world = np.outer(acc_fwd, _FORWARD)
    acc_world[:, 2] += acc_up + GRAVITY
    accel = np.einsum("nji,nj->ni", quat_to_matrix(quat), acc_world)
    gyro = np.zeros((len(t), 3))
    gyro[:, 0] = pitch_rate
    return accel, gyro, quat


def synthesize_imu(
    cadence: float,
    stride: float,
    duration: float,
    shape: GaitShape = GaitShape(),
    t0: float = 0.0,
) -> list[ImuSample]:
    """Constant-gait IMU stream for one foot: ``floor(duration * cadence)`` full cycles."""
    check_feasible(cadence, stride, shape)
    n = int(round(duration * shape.rate_hz))
    t = t0 + np.arange(n) / shape.rate_hz
    n_cycles = int(math.floor(duration * cadence + 1e-9))
    k = np.minimum(np.floor((t - t0) * cadence), n_cycles).astype(int)
    accel = np.zeros((n, 3))
    gyro = np.zeros((n, 3))
    quat = np.zeros((n, 4))
    for c in range(n_cycles + 1):
        m = k == c
        if not m.any():
            continue
        s = stride if c < n_cycles else 0.0
        accel[m], gyro[m], quat[m] = cycle_kinematics(t[m], t0 + c / cadence, cadence, s, shape)
    return samples_from_arrays(t, accel, gyro, quat)
