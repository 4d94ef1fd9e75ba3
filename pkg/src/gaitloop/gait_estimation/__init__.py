"""Swing/stance detection, cadence and zero-velocity stride estimation."""

from .detector import DetectorConfig, EventKind, GaitEvent, SwingDetector, detect_swing
from .orientation import OrientationFilter, quat_to_matrix, rotate_to_world
from .stride import StrideEstimate, StrideRecord, estimate_cadence, estimate_stride, zero_velocity_track
from .tracker import FootTracker, estimate_streams, record_sort_key

__all__ = [
    "DetectorConfig",
    "EventKind",
    "FootTracker",
    "GaitEvent",
    "OrientationFilter",
    "StrideEstimate",
    "StrideRecord",
    "SwingDetector",
    "detect_swing",
    "estimate_cadence",
    "estimate_streams",
    "estimate_stride",
    "quat_to_matrix",
    "record_sort_key",
    "rotate_to_world",
    "zero_velocity_track",
]
