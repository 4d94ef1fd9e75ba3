"""Session orchestration for simulated and replayed sessions.

Both modes feed the same ``Controller`` with StrideRecords in
``(end_t, foot, n)`` order, so a replay of a simulated session's IMU file
reproduces its step log exactly. In Simulate mode the walker generates one
gait cycle at a time per foot; before generating a cycle starting at ``g``
every record completed before ``g`` has been handed to the controller, so
the walker always reacts to the cue that was audible at ``g``.
"""

from __future__ import annotations

import bisect
import heapq
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import mogp
from ..cue_engine import CueCommand, OptimizerConfig, Strategy, TriggerConfig, next_cue
from ..errors import (
    DegenerateTrainingDataError,
    GaitloopError,
    InfeasibleGaitError,
    NoBaselineError,
    SessionStageError,
    UninitializedModelError,
)
from ..gait_estimation import FootTracker, StrideRecord, record_sort_key
from ..imu import FEET, FORMAT_TAG, IMU_HEADER, ImuSample, foot_order, iter_imu_csv, samples_from_arrays
from ..slc_model import SlcRel, TargetSpec, baseline_cadence, fit_slcrel, select_targets, write_training_csv
from ..walker_sim import GaitShape, WalkerState, check_feasible, cycle_kinematics, walker_step
from .config import SessionConfig
from .logs import ConditionRecord, CueLogRecord, StepLogRecord, WalkerTraceRecord, write_records
from .metrics import SessionMetrics, compute_metrics, write_metrics_csv

log = logging.getLogger(__name__)

# walker cycles generated past the last phase so the final strides complete
TAIL_SECONDS = 3.0


@dataclass(frozen=True)
class Phase:
    kind: str  # baseline | training | condition
    start: float
    end: float
    beat: float | None = None
    condition: int = -1
    strategy: str = ""
    secondary_task: bool = False


@dataclass(frozen=True)
class Timeline:
    phases: tuple[Phase, ...]
    conditions: tuple[ConditionRecord, ...]
    training_order: tuple[float, ...]

    @property
    def end(self) -> float:
        return self.phases[-1].end

    def index_at(self, t: float) -> int:
        """Index of the phase containing ``t``, or -1 outside the session."""
        if t < 0 or t >= self.end:
            return -1
        starts = [p.start for p in self.phases]
        return bisect.bisect_right(starts, t) - 1

    def at(self, t: float) -> Phase | None:
        i = self.index_at(t)
        return self.phases[i] if i >= 0 else None


def build_timeline(cfg: SessionConfig) -> Timeline:
    phases = [Phase("baseline", 0.0, float(cfg.baseline_duration))]
    order = cfg.rng("training_order").permutation(len(cfg.training_beats))
    beats = tuple(cfg.training_beats[i] for i in order)
    t = phases[0].end
    for b in beats:
        dur = cfg.beats_per_block / b
        phases.append(Phase("training", t, t + dur, beat=b))
        t += dur
    conditions = []
    if cfg.condition_duration > 0:
        combos = cfg.conditions()
        perm = cfg.rng("conditions").permutation(len(combos))
        for idx, k in enumerate(perm):
            strategy, task = combos[k]
            end = t + cfg.condition_duration
            conditions.append(ConditionRecord(idx, strategy.value, task, t, end))
            phases.append(Phase("condition", t, end, None, idx, strategy.value, task))
            t = end
    return Timeline(tuple(phases), tuple(conditions), beats)


@dataclass
class _ConditionState:
    phase: Phase
    strategy: Strategy
    cue: float | None = None
    c_prev: float = 0.0
    window: deque = field(default_factory=deque)
    changes_t: list = field(default_factory=list)
    changes_f: list = field(default_factory=list)
    model: mogp.MogpModel | None = None

    def cue_at(self, t: float) -> float | None:
        """Cue audible just before ``t`` (changes at exactly ``t`` not yet in effect)."""
        i = bisect.bisect_left(self.changes_t, t) - 1
        return self.changes_f[i] if i >= 0 else None


class Controller:
    """Consumes StrideRecords and makes every logging and cueing decision."""

    def __init__(self, cfg: SessionConfig, timeline: Timeline, out_dir: Path | None = None):
        self.cfg = cfg
        self.timeline = timeline
        self.out_dir = out_dir
        self.trigger = TriggerConfig(cfg.n_window, cfg.cadence_band, cfg.trigger_mode, cfg.abs_deviation)
        self.mogp_config = mogp.MogpConfig(buffer_cap=cfg.buffer_cap, freeze_hyperparameters=cfg.freeze_hyperparameters)
        self.steps: list[StepLogRecord] = []
        self.cues: list[CueLogRecord] = []
        self.training: list[tuple[float, float, float]] = []
        self.baseline: list[StrideRecord] = []
        self.dropped = 0
        self.f_baseline: float | None = None
        self.baseline_stride: float | None = None
        self.rel: SlcRel | None = None
        self.targets: TargetSpec | None = None
        self.opt: OptimizerConfig | None = None
        self.snapshots: dict[int, str] = {}
        self._phase_idx = -1
        self._cond: _ConditionState | None = None
        self._model_version = 0

    # -- calibration ------------------------------------------------------------
    @property
    def calibrated(self) -> bool:
        return self.targets is not None

    def calibrate(self) -> None:
        if self.calibrated:
            return
        try:
            if not self.baseline:
                raise NoBaselineError("no strides recorded during the baseline walk")
            self.f_baseline = baseline_cadence((r.cadence for r in self.baseline), self.cfg.baseline_aggregate)
            self.baseline_stride = math.fsum(r.stride_length for r in self.baseline) / len(self.baseline)
        except GaitloopError as exc:
            raise SessionStageError("baseline", exc) from exc
        try:
            self.rel = fit_slcrel([(c, l) for c, l, _ in self.training])
        except DegenerateTrainingDataError as exc:
            raise SessionStageError("slc_fit", exc) from exc
        self.targets = select_targets(self.rel, self.f_baseline)
        self.opt = OptimizerConfig.for_baseline(
            self.f_baseline, alpha_f=self.cfg.alpha_f, alpha_l=self.cfg.alpha_l, alpha_e=self.cfg.alpha_e
        )
        log.info(
            "f_baseline %.4f Hz, SLC degree %d, target (%.4f Hz, %.4f m)",
            self.f_baseline,
            self.rel.degree,
            self.targets.f_target,
            self.targets.l_target,
        )

    def seed_observations(self) -> list[mogp.StepObservation]:
        assert self.f_baseline is not None and self.baseline_stride is not None
        rows = [mogp.StepObservation(1, 0.0, self.f_baseline, self.baseline_stride)]
        rows += [mogp.StepObservation(i + 2, beat, c, l) for i, (c, l, beat) in enumerate(self.training)]
        return rows

    # -- conditions ---------------------------------------------------------------
    def _save_snapshot(self, model: mogp.MogpModel) -> None:
        if self.out_dir is None:
            return
        snap_dir = self.out_dir / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)
        path = snap_dir / f"model_{self._model_version:06d}.json"
        model.save(path)
        self.snapshots[self._model_version] = path.name

    def _end_condition(self) -> None:
        if self._cond is not None and self._cond.model is not None:
            self._save_snapshot(self._cond.model)
        self._cond = None

    def _start_condition(self, phase: Phase) -> None:
        self._end_condition()
        self.calibrate()
        strategy = Strategy(phase.strategy)
        st = _ConditionState(phase, strategy, c_prev=self.f_baseline, window=deque(maxlen=self.cfg.n_window))
        st.changes_t.append(phase.start)
        st.changes_f.append(None)
        self.cues.append(CueLogRecord(phase.start, None, False, strategy.value, phase.condition))
        if strategy is Strategy.ADAPTIVE:
            try:
                st.model = mogp.init_model(
                    self.mogp_config, self.seed_observations(), (self.opt.c_min, self.opt.c_max)
                )
            except UninitializedModelError as exc:
                raise SessionStageError("model_init", exc) from exc
            self._model_version += 1
            self._save_snapshot(st.model)
        self._cond = st

    def cue_for_walker(self, t: float) -> float | None:
        phase = self.timeline.at(t)
        if phase is None or phase.kind == "baseline":
            return None
        if phase.kind == "training":
            return phase.beat
        st = self._cond
        if st is None or st.phase.condition != phase.condition:
            return None  # each condition starts with the cue Off
        return st.cue

    # -- per-record -------------------------------------------------------------
    def process(self, rec: StrideRecord) -> StepLogRecord | None:
        idx = self.timeline.index_at(rec.start_t)
        if idx < 0 or idx < self._phase_idx:
            self.dropped += 1
            if idx >= 0:
                log.warning("dropping stride %s#%d: it began in a phase that has already ended", rec.foot, rec.n)
            return None
        self._phase_idx = idx
        phase = self.timeline.phases[idx]
        n = len(self.steps) + 1
        common = dict(
            n=n,
            t=rec.end_t,
            foot=rec.foot,
            cadence=rec.cadence,
            stride=rec.stride_length,
            start_t=rec.start_t,
            low_confidence=rec.low_confidence,
            condition=phase.condition,
            phase=phase.kind,
        )
        if phase.kind == "baseline":
            self.baseline.append(rec)
            row = StepLogRecord(cue_prev=0.0, cue_next=None, cue_on=False, snapshot_id=None, **common)
        elif phase.kind == "training":
            self.training.append((rec.cadence, rec.stride_length, phase.beat))
            row = StepLogRecord(cue_prev=phase.beat, cue_next=phase.beat, cue_on=True, snapshot_id=None, **common)
        else:
            if self._cond is None or self._cond.phase.condition != phase.condition:
                self._start_condition(phase)
            row = self._condition_step(self._cond, rec, common)
        self.steps.append(row)
        return row

    def _condition_step(self, st: _ConditionState, rec: StrideRecord, common: dict) -> StepLogRecord:
        prev = st.cue_at(rec.start_t)
        cue_prev = 0.0 if prev is None else prev
        st.window.append(rec)
        snapshot = None
        if st.model is not None:
            obs = mogp.StepObservation(common["n"], cue_prev, rec.cadence, rec.stride_length)
            st.model = mogp.update(st.model, obs)
            self._model_version += 1
            every = self.cfg.snapshot_every
            if every and st.model.n_updates % every == 0:
                self._save_snapshot(st.model)
            snapshot = self._model_version
        cmd: CueCommand = next_cue(
            st.strategy, st.model, self.targets, st.c_prev, list(st.window), self.opt, self.trigger, rec.end_t
        )
        if cmd.on:
            st.c_prev = cmd.freq
        st.cue = cmd.freq
        st.changes_t.append(rec.end_t)
        st.changes_f.append(cmd.freq)
        self.cues.append(CueLogRecord(rec.end_t, cmd.freq, cmd.on, st.strategy.value, st.phase.condition))
        return StepLogRecord(cue_prev=cue_prev, cue_next=cmd.freq, cue_on=cmd.on, snapshot_id=snapshot, **common)

    def finish(self) -> None:
        self._end_condition()
        self.calibrate()


@dataclass
class SessionResult:
    config: SessionConfig
    timeline: Timeline
    steps: list[StepLogRecord]
    cues: list[CueLogRecord]
    training: list[tuple[float, float, float]]
    metrics: SessionMetrics
    f_baseline: float
    rel: SlcRel
    targets: TargetSpec
    walker_trace: list[WalkerTraceRecord]
    out_dir: Path | None
    dropped: int = 0


class _ImuWriter:
    def __init__(self, path: Path | None):
        self._fh = open(path, "w") if path is not None else None
        if self._fh is not None:
            self._fh.write(FORMAT_TAG + "\n" + ",".join(IMU_HEADER) + "\n")

    def write(self, rows: list[tuple[str, ImuSample]]) -> None:
        if self._fh is None:
            return
        out = []
        for foot, s in rows:
            q = ",".join(map(repr, s.quat)) if s.quat is not None else ",,,"
            out.append(f"{s.t!r},{','.join(map(repr, s.accel))},{','.join(map(repr, s.gyro))},{q},{foot}\n")
        self._fh.write("".join(out))

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()


def _simulate(cfg: SessionConfig, ctl: Controller, imu_path: Path | None) -> list[WalkerTraceRecord]:
    profile = cfg.profile
    shape = GaitShape()
    rate = shape.rate_hz
    rng = cfg.rng("walker")
    state = WalkerState.initial(profile)
    timeline = ctl.timeline
    stop = timeline.end + TAIL_SECONDS
    trackers = {f: FootTracker(f) for f in FEET}
    pending: dict[str, deque[ImuSample]] = {f: deque() for f in FEET}
    next_idx = {f: 0 for f in FEET}
    ptr = {"L": 0.0, "R": 0.5 / profile.f_baseline}
    heap: list = []
    trace: list[WalkerTraceRecord] = []
    writer = _ImuWriter(imu_path)

    def generate(foot: str, g: float, cadence: float, stride: float) -> None:
        end = g + 1.0 / cadence
        i0 = next_idx[foot]
        i1 = i0
        while i1 / rate < end:
            i1 += 1
        t = np.arange(i0, i1) / rate
        if len(t):
            accel, gyro, quat = cycle_kinematics(t, g, cadence, stride, shape)
            pending[foot].extend(samples_from_arrays(t, accel, gyro, quat))
        next_idx[foot] = i1

    def feed(until: float) -> None:
        fed: list[tuple[str, ImuSample]] = []
        for foot in FEET:
            q = pending[foot]
            tr = trackers[foot]
            while q and q[0].t < until:
                s = q.popleft()
                fed.append((foot, s))
                rec = tr.push(s)
                if rec is not None:
                    heapq.heappush(heap, (record_sort_key(rec), rec))
        fed.sort(key=lambda r: (r[1].t, foot_order(r[0])))
        writer.write(fed)

    # right foot stands still until its first cycle
    generate("R", ptr["R"] - 1.0 / profile.f_baseline, profile.f_baseline, 0.0)
    try:
        while True:
            foot = min(FEET, key=lambda f: (ptr[f], foot_order(f)))
            g = ptr[foot]
            if g >= stop:
                break
            feed(g)
            while heap and heap[0][0][0] < g:
                ctl.process(heapq.heappop(heap)[1])
            phase = timeline.at(g)
            cue = ctl.cue_for_walker(g)
            task = phase is not None and phase.kind == "condition" and phase.secondary_task
            state, cadence, stride = walker_step(state, profile, cue, rng, task)
            try:
                check_feasible(cadence, stride, shape)
            except InfeasibleGaitError as exc:
                raise SessionStageError("walker", exc) from exc
            generate(foot, g, cadence, stride)
            trace.append(
                WalkerTraceRecord(
                    len(trace) + 1,
                    g,
                    foot,
                    cadence,
                    stride,
                    cue,
                    task,
                    phase.kind if phase is not None else "tail",
                    phase.condition if phase is not None else -1,
                )
            )
            ptr[foot] = g + 1.0 / cadence
        feed(math.inf)
        while heap:
            ctl.process(heapq.heappop(heap)[1])
    finally:
        writer.close()
    return trace


def _replay(cfg: SessionConfig, ctl: Controller) -> None:
    trackers = {f: FootTracker(f) for f in FEET}
    records: list[StrideRecord] = []
    for foot, sample in iter_imu_csv(cfg.input_log):
        rec = trackers[foot].push(sample)
        if rec is not None:
            records.append(rec)
    records.sort(key=record_sort_key)
    for rec in records:
        ctl.process(rec)


def run_session(
    cfg: SessionConfig,
    out_dir: str | Path | None = None,
    persist: bool = True,
    write_imu: bool = True,
) -> SessionResult:
    """Run a whole session; with ``persist`` every log goes to ``out_dir`` (default ``cfg.out_dir``)."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir) if persist else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    timeline = build_timeline(cfg)
    ctl = Controller(cfg, timeline, out)
    trace: list[WalkerTraceRecord] = []
    if cfg.mode == "Simulate":
        imu_path = out / "imu.csv" if (out is not None and write_imu) else None
        trace = _simulate(cfg, ctl, imu_path)
    else:
        _replay(cfg, ctl)
    ctl.finish()
    metrics = compute_metrics(ctl.steps, ctl.cues, timeline.conditions)
    result = SessionResult(
        config=cfg,
        timeline=timeline,
        steps=ctl.steps,
        cues=ctl.cues,
        training=ctl.training,
        metrics=metrics,
        f_baseline=ctl.f_baseline,
        rel=ctl.rel,
        targets=ctl.targets,
        walker_trace=trace,
        out_dir=out,
        dropped=ctl.dropped,
    )
    if out is not None:
        write_session(result, out)
    return result


def write_session(result: SessionResult, out: Path) -> None:
    write_records(out / "steps.csv", result.steps, StepLogRecord)
    write_records(out / "cues.csv", result.cues, CueLogRecord)
    write_records(out / "conditions.csv", result.timeline.conditions, ConditionRecord)
    write_training_csv(out / "training.csv", result.training)
    write_metrics_csv(out / "metrics.csv", result.metrics)
    if result.walker_trace:
        write_records(out / "walker.csv", result.walker_trace, WalkerTraceRecord)
    summary = {
        "config": result.config.to_dict(),
        "f_baseline": result.f_baseline,
        "baseline_stride": result.metrics.baseline_stride,
        "slc": result.rel.to_dict(),
        "targets": result.targets.to_dict(),
        "training_order": list(result.timeline.training_order),
        "condition_order": [[c.strategy, c.secondary_task] for c in result.timeline.conditions],
        "dropped_strides": result.dropped,
    }
    (out / "session.json").write_text(FORMAT_TAG + "\n" + json.dumps(summary, indent=2))
