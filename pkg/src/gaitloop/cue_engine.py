"""When to cue and at what frequency.

The trigger looks at the mean stride (and optionally cadence) over the last
few steps. The adaptive strategy picks the cue that minimizes a weighted
distance between the model's predicted gait and the targets, plus a penalty
on changing the cue, using a bounded one-dimensional Nelder-Mead search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

import numpy as np

from .slc_model import TargetSpec


class Strategy(str, Enum):
    FIXED = "Fixed"
    ADAPTIVE = "Adaptive"


class TriggerMode(str, Enum):
    STRIDE_ONLY = "StrideOnly"
    STRIDE_OR_CADENCE = "StrideOrCadence"


class _Predicted(Protocol):
    f_hat: float
    l_hat: float


class GaitModel(Protocol):
    def predict(self, cue: float) -> _Predicted: ...


class _Step(Protocol):
    stride_length: float
    cadence: float


@dataclass(frozen=True)
class OptimizerConfig:
    c_min: float
    c_max: float
    alpha_f: float = 1.5
    alpha_l: float = 10.0
    alpha_e: float = 0.05
    xtol: float = 1e-4
    max_iter: int = 200
    n_scan: int = 11

    def __post_init__(self) -> None:
        if not self.c_min < self.c_max:
            raise ValueError("c_min must be < c_max")
        if min(self.alpha_f, self.alpha_l, self.alpha_e) < 0:
            raise ValueError("cost weights must be >= 0")

    @classmethod
    def for_baseline(cls, f_baseline: float, **kw) -> "OptimizerConfig":
        return cls(c_min=0.65 * f_baseline, c_max=1.35 * f_baseline, **kw)

    def clamp(self, c: float) -> float:
        return min(max(c, self.c_min), self.c_max)


@dataclass(frozen=True)
class TriggerConfig:
    n_window: int = 5
    cadence_band: float = 0.05
    mode: TriggerMode = TriggerMode.STRIDE_ONLY
    abs_deviation: bool = False

    def __post_init__(self) -> None:
        if self.n_window < 1:
            raise ValueError("n_window must be >= 1")
        if self.cadence_band < 0:
            raise ValueError("cadence_band must be >= 0")
        object.__setattr__(self, "mode", TriggerMode(self.mode))


@dataclass(frozen=True, slots=True)
class CueCommand:
    freq: float | None  # None is Off
    issued_at: float
    strategy: Strategy
    converged: bool = True

    @property
    def on(self) -> bool:
        return self.freq is not None


@dataclass(frozen=True, slots=True)
class OptimizeResult:
    freq: float
    cost: float
    converged: bool
    n_eval: int


def cost(c: float, model: GaitModel, targets: TargetSpec, c_prev: float, cfg: OptimizerConfig) -> float:
    pred = model.predict(c)
    return (
        cfg.alpha_f * (targets.f_target - pred.f_hat) ** 2
        + cfg.alpha_l * (targets.l_target - pred.l_hat) ** 2
        + cfg.alpha_e * (c - c_prev) ** 2
    )


def nelder_mead_1d(
    fun: Callable[[float], float],
    x0: float,
    step: float,
    lo: float,
    hi: float,
    xtol: float = 1e-4,
    max_iter: int = 200,
) -> OptimizeResult:
    """Nelder-Mead on a scalar with trial points clamped into ``[lo, hi]``.

    The second vertex is ``x0 + step``, or ``x0 - step`` when that would leave
    the interval. Stops when the two vertices are closer than ``xtol``.
    """
    clamp = lambda x: min(max(x, lo), hi)  # noqa: E731
    x0 = clamp(x0)
    x1 = x0 + step if x0 + step <= hi else x0 - step
    x1 = clamp(x1)
    n_eval = 0

    def f(x: float) -> float:
        nonlocal n_eval
        n_eval += 1
        return fun(x)

    simplex = [(f(x0), 0, x0), (f(x1), 1, x1)]
    tick = 2  # tie-break: older vertex wins
    converged = False
    for _ in range(max_iter):
        simplex.sort()
        (fb, _, xb), (fw, _, xw) = simplex
        if abs(xw - xb) < xtol:
            converged = True
            break
        xr = clamp(xb + (xb - xw))
        # a reflection clamped back onto xb carries no information
        fr = f(xr) if xr != xb else math.inf
        if fr < fb:
            xe = clamp(xb + 2.0 * (xb - xw))
            fe = f(xe)
            new = (fe, xe) if fe < fr else (fr, xr)
        elif fr < fw:
            new = (fr, xr)
        else:
            # inside contraction; in 1-D a shrink toward xb lands on the same point
            xc = xb + 0.5 * (xw - xb)
            new = (f(xc), xc)
        simplex = [(fb, simplex[0][1], xb), (new[0], tick, new[1])]
        tick += 1
    simplex.sort()
    fb, _, xb = simplex[0]
    return OptimizeResult(xb, float(fb), converged, n_eval)


def optimize_cue(model: GaitModel, targets: TargetSpec, c_prev: float, cfg: OptimizerConfig) -> OptimizeResult:
    """Minimize ``cost`` over ``[c_min, c_max]``.

    Nelder-Mead runs from the clamped previous cue and from the best point of
    an evenly spaced scan of the interval; the lower final cost wins, ties
    going to the run started at ``c_prev``.
    """
    fun = lambda c: cost(c, model, targets, c_prev, cfg)  # noqa: E731
    step = 0.1 * (cfg.c_max - cfg.c_min)
    start = cfg.clamp(c_prev)
    best = nelder_mead_1d(fun, start, step, cfg.c_min, cfg.c_max, cfg.xtol, cfg.max_iter)
    if cfg.n_scan >= 2:
        grid = np.linspace(cfg.c_min, cfg.c_max, cfg.n_scan)
        scan = [fun(float(c)) for c in grid]
        g0 = float(grid[int(np.argmin(scan))])
        if abs(g0 - start) >= cfg.xtol:
            alt = nelder_mead_1d(fun, g0, step, cfg.c_min, cfg.c_max, cfg.xtol, cfg.max_iter)
            if alt.cost < best.cost:
                best = OptimizeResult(alt.freq, alt.cost, alt.converged, alt.n_eval + best.n_eval + cfg.n_scan)
    return OptimizeResult(cfg.clamp(best.freq), best.cost, best.converged, best.n_eval)


def should_cue(window: Sequence[_Step], targets: TargetSpec, cfg: TriggerConfig) -> bool:
    if len(window) < cfg.n_window:
        return False
    recent = window[-cfg.n_window :]
    mean_l = math.fsum(r.stride_length for r in recent) / cfg.n_window
    if mean_l < targets.l_target:
        return True
    if cfg.mode is TriggerMode.STRIDE_ONLY:
        return False
    mean_f = math.fsum(r.cadence for r in recent) / cfg.n_window
    dev = (mean_f - targets.f_target) / targets.f_target
    if cfg.abs_deviation:
        dev = abs(dev)
    return dev <= cfg.cadence_band


def next_cue(
    strategy: Strategy | str,
    model: GaitModel | None,
    targets: TargetSpec,
    c_prev: float,
    window: Sequence[_Step],
    opt_cfg: OptimizerConfig,
    trig_cfg: TriggerConfig,
    t: float = 0.0,
) -> CueCommand:
    strategy = Strategy(strategy)
    if not should_cue(window, targets, trig_cfg):
        return CueCommand(None, t, strategy)
    if strategy is Strategy.FIXED:
        return CueCommand(targets.f_target, t, strategy)
    if model is None:
        raise ValueError("adaptive strategy needs a model")
    res = optimize_cue(model, targets, c_prev, opt_cfg)
    return CueCommand(res.freq, t, strategy, res.converged)
