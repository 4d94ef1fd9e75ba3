"""Stride-length/cadence relationship fitting and target selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateTrainingDataError
from .imu import FORMAT_TAG

TRAINING_HEADER = ("cadence_hz", "stride_m", "beat_hz")
TARGET_STRIDE_OFFSET = 0.1
TARGET_CADENCE_STEP = 0.1


@dataclass(frozen=True)
class SlcRel:
    """Stride length (m) as a polynomial in cadence (Hz), highest degree first."""

    coeffs: tuple[float, ...]
    degree: int
    residual: float
    domain: tuple[float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if self.degree not in (1, 2) or len(self.coeffs) != self.degree + 1:
            raise ValueError(f"degree {self.degree} does not match {len(self.coeffs)} coefficients")
        if self.residual < 0:
            raise ValueError("residual must be >= 0")
        if not self.domain[1] > self.domain[0]:
            raise ValueError("domain must satisfy f_hi > f_lo")

    def __call__(self, cadence):
        return np.polyval(self.coeffs, cadence)

    def to_dict(self) -> dict:
        return {
            "coeffs": list(self.coeffs),
            "degree": self.degree,
            "residual": self.residual,
            "domain": list(self.domain),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlcRel":
        return cls(tuple(d["coeffs"]), int(d["degree"]), float(d["residual"]), tuple(d["domain"]))


@dataclass(frozen=True)
class TargetSpec:
    f_baseline: float
    f_target: float
    l_target: float
    extrapolated: bool = False
    candidates: tuple[tuple[float, float], ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "f_baseline": self.f_baseline,
            "f_target": self.f_target,
            "l_target": self.l_target,
            "extrapolated": self.extrapolated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSpec":
        return cls(float(d["f_baseline"]), float(d["f_target"]), float(d["l_target"]), bool(d.get("extrapolated", False)))


def _lstsq(f: np.ndarray, y: np.ndarray, degree: int) -> tuple[np.ndarray, float]:
    design = np.vander(f, degree + 1)
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coeffs
    return coeffs, float(resid @ resid)


def fit_slcrel(points: Sequence[tuple[float, float]] | np.ndarray, tie_tol: float = 1e-12) -> SlcRel:
    """Fit degree-1 and degree-2 polynomials and keep the one with lower SSE.

    Residuals closer than ``tie_tol`` (absolute, plus the same relative to the
    linear SSE) count as a tie and resolve to the linear fit, so exact linear
    data is never promoted to degree 2 by round-off. The quadratic is only a
    candidate with at least three distinct cadences.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] < 2:
        raise DegenerateTrainingDataError("points must be (cadence, stride) pairs")
    f, y = pts[:, 0], pts[:, 1]
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
        raise DegenerateTrainingDataError("training data contains non-finite values")
    distinct = np.unique(f)
    if len(pts) < 5 or len(distinct) < 2:
        raise DegenerateTrainingDataError(
            f"need >= 5 points over >= 2 distinct cadences, got {len(pts)} points / {len(distinct)} cadences"
        )
    domain = (float(f.min()), float(f.max()))
    c1, sse1 = _lstsq(f, y, 1)
    best = SlcRel(tuple(c1), 1, sse1, domain)
    if len(distinct) >= 3:
        c2, sse2 = _lstsq(f, y, 2)
        if sse2 < sse1 - tie_tol * (1.0 + sse1):
            best = SlcRel(tuple(c2), 2, sse2, domain)
    return best


def select_targets(rel: SlcRel, f_baseline: float) -> TargetSpec:
    """Pick the +-10% baseline cadence whose SLC stride plus 0.1 m is larger.

    Equal candidates resolve to the lower cadence.
    """
    if not f_baseline > 0:
        raise ValueError("f_baseline must be > 0")
    f_lo = f_baseline * (1.0 - TARGET_CADENCE_STEP)
    f_hi = f_baseline * (1.0 + TARGET_CADENCE_STEP)
    l_lo = float(rel(f_lo)) + TARGET_STRIDE_OFFSET
    l_hi = float(rel(f_hi)) + TARGET_STRIDE_OFFSET
    f_t, l_t = (f_hi, l_hi) if l_hi > l_lo else (f_lo, l_lo)
    lo, hi = rel.domain
    return TargetSpec(f_baseline, f_t, l_t, not lo <= f_t <= hi, ((f_lo, l_lo), (f_hi, l_hi)))


def baseline_cadence(cadences: Iterable[float], how: str = "median") -> float:
    arr = np.asarray(list(cadences), dtype=float)
    if arr.size == 0:
        raise DegenerateTrainingDataError("no baseline cadences")
    if how == "median":
        return float(np.median(arr))
    if how == "mean":
        return float(np.mean(arr))
    raise ValueError(f"unknown aggregation {how!r}")


def write_training_csv(path: str | Path, rows: Iterable[tuple[float, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(FORMAT_TAG + "\n")
        w = csv.writer(fh)
        w.writerow(TRAINING_HEADER)
        for cad, stride, beat in rows:
            w.writerow([repr(float(cad)), repr(float(stride)), repr(float(beat))])


def read_training_csv(path: str | Path) -> list[tuple[float, float, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRAINING_HEADER:
            raise DegenerateTrainingDataError(f"{path}: expected header {','.join(TRAINING_HEADER)}")
        return [(float(a), float(b), float(c)) for a, b, c in reader if a]
