import math
from collections import deque

import numpy as np
import pytest
import yaml

from gaitloop.cue_engine import TriggerConfig, should_cue
from gaitloop.errors import ConfigError, NoBaselineError, SessionStageError
from gaitloop.gait_estimation import StrideRecord
from gaitloop.session import (
    ConditionRecord,
    Controller,
    CueLogRecord,
    SessionConfig,
    StepLogRecord,
    WalkerTraceRecord,
    build_timeline,
    compute_metrics,
    config_from_dict,
    dump_config,
    load_config,
    read_metrics_csv,
    read_records,
    run_session,
)
from gaitloop.session.config import DEFAULT_WALKER
from gaitloop.session.metrics import METRICS_HEADER, SessionMetrics, on_time
from gaitloop.session.plots import emit_plots
from gaitloop.slc_model import fit_slcrel, select_targets

IDEAL = dict(DEFAULT_WALKER, noise_f=0.0, noise_l=0.0)
SHORT = dict(baseline_duration=20.0, beats_per_block=8, condition_duration=30.0)


def short_config(**kw):
    base = dict(SHORT, walker=IDEAL, seed=1)
    base.update(kw)
    return SessionConfig(**base)


@pytest.fixture(scope="module")
def ideal_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ideal")
    return run_session(short_config(), out)


# --- configuration -------------------------------------------------------------


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="durationn"):
        config_from_dict({"condition_durationn": 5})
    with pytest.raises(ConfigError, match="speed"):
        config_from_dict({"walker": dict(IDEAL, speed=3)})
    path = tmp_path / "c.yaml"
    path.write_text("seed: 3\nbogus: 1\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_yaml_round_trip(tmp_path):
    cfg = short_config(seed=11, strategy="Adaptive", secondary_task=False)
    path = tmp_path / "c.yaml"
    dump_config(cfg, path)
    assert load_config(path) == cfg
    assert load_config(path, seed=5).seed == 5
    assert yaml.safe_load(path.read_text())["condition_duration"] == 30.0


@pytest.mark.parametrize(
    "bad",
    [
        dict(mode="Live"),
        dict(strategy="Greedy"),
        dict(trigger_mode="Never"),
        dict(baseline_duration=0),
        dict(condition_duration=-1),
        dict(training_beats=[1.2, -1.0]),
        dict(mode="Replay"),
        dict(walker=dict(IDEAL, entrainment_gain=2.0)),
    ],
)
def test_invalid_config_values(bad):
    with pytest.raises(ConfigError):
        config_from_dict(dict(SHORT, **bad))


def test_condition_product_and_seeded_order():
    assert len(short_config().conditions()) == 4
    assert len(short_config(strategy="Fixed").conditions()) == 2
    assert short_config(strategy="Fixed", secondary_task=True).conditions()[0][1] is True
    a = build_timeline(short_config(seed=2))
    b = build_timeline(short_config(seed=2))
    assert a == b
    assert sorted(a.training_order) == sorted(SessionConfig().training_beats)
    durations = [c.duration for c in a.conditions]
    assert durations == pytest.approx([30.0] * 4)
    assert a.phases[0].kind == "baseline" and a.phases[0].end == 20.0


# --- metrics -------------------------------------------------------------------


def step(n, phase, stride, condition=-1, cadence=1.7):
    return StepLogRecord(n, float(n), "L", cadence, stride, 0.0, None, False, None, phase, condition, n - 0.5, False)


def test_percent_on_half_of_condition():
    cond = ConditionRecord(0, "Fixed", False, 100.0, 340.0)
    cues = [CueLogRecord(100.0, None, False, "Fixed", 0), CueLogRecord(160.0, 1.6, True, "Fixed", 0), CueLogRecord(280.0, None, False, "Fixed", 0)]
    steps = [step(1, "baseline", 1.0), step(2, "condition", 1.0, 0)]
    m = compute_metrics(steps, cues, [cond]).conditions[0]
    assert m.percent_on == 50.0
    assert m.percent_on_final_minute == 0.0
    assert on_time(cues, 150.0, 170.0) == 10.0


def test_delta_zero_when_condition_matches_baseline():
    steps = [step(1, "baseline", 1.1), step(2, "baseline", 0.9), step(3, "condition", 1.0, 0), step(4, "condition", 1.0, 0)]
    cond = ConditionRecord(0, "Adaptive", True, 10.0, 20.0)
    m = compute_metrics(steps, [], [cond])
    assert m.baseline_stride == 1.0
    assert m.conditions[0].delta_stride == 0.0
    assert m.conditions[0].percent_on == 0.0


def test_no_baseline_signals():
    with pytest.raises(NoBaselineError):
        compute_metrics([step(1, "condition", 1.0, 0)], [], [])


def test_zero_duration_conditions_give_empty_metrics():
    res = run_session(short_config(condition_duration=0.0), persist=False)
    assert res.metrics.conditions == ()
    assert res.metrics.n_baseline > 0 and math.isfinite(res.metrics.baseline_stride)
    assert all(s.phase != "condition" for s in res.steps)


# --- simulated sessions -------------------------------------------------------


def test_logs_are_complete_and_consistent(ideal_run):
    res = ideal_run
    ns = [s.n for s in res.steps]
    assert ns == list(range(1, len(ns) + 1))
    assert all(b.t >= a.t for a, b in zip(res.steps, res.steps[1:]))
    for cond in res.timeline.conditions:
        cues = [c for c in res.cues if c.condition == cond.index]
        assert cues[0].t == cond.start and not cues[0].on
        assert all(b.t >= a.t for a, b in zip(cues, cues[1:]))
        rows = [s for s in res.steps if s.condition == cond.index]
        # every condition step issues exactly one cue decision, logged at the step's end time
        assert [(c.t, c.freq_hz) for c in cues[1:]] == [(s.t, s.cue_next) for s in rows]
        assert all(s.cue_on == (s.cue_next is not None) for s in rows)
        lo, hi = 0.65 * res.f_baseline, 1.35 * res.f_baseline
        assert all(lo <= c.freq_hz <= hi for c in cues if c.on)
    for s in res.steps:
        assert 0.0 <= res.metrics.conditions[0].percent_on <= 100.0
        if s.phase == "training":
            assert s.cue_on and s.cue_prev == s.cue_next


def test_persisted_logs_round_trip_and_metrics_recompute(ideal_run):
    out = ideal_run.out_dir
    steps = read_records(out / "steps.csv", StepLogRecord)
    cues = read_records(out / "cues.csv", CueLogRecord)
    conds = read_records(out / "conditions.csv", ConditionRecord)
    assert steps == ideal_run.steps
    assert cues == ideal_run.cues
    assert compute_metrics(steps, cues, conds) == ideal_run.metrics
    assert read_metrics_csv(out / "metrics.csv") == list(ideal_run.metrics.conditions)
    for name in ("steps.csv", "cues.csv", "metrics.csv", "walker.csv", "session.json", "imu.csv"):
        assert (out / name).read_text().startswith("#gaitloop-v1\n")
    assert list((out / "snapshots").glob("model_*.json"))


def test_fixed_condition_cues_follow_hand_run_trigger(ideal_run):
    res = ideal_run
    trig = TriggerConfig()
    for cond in res.timeline.conditions:
        if cond.strategy != "Fixed":
            continue
        window = deque(maxlen=5)
        for s in (s for s in res.steps if s.condition == cond.index):
            window.append(StrideRecord(s.foot, s.start_t, s.t, s.stride, s.cadence, s.n))
            expect = should_cue(list(window), res.targets, trig)
            assert s.cue_on == expect
            assert s.cue_next == (res.targets.f_target if expect else None)


def test_ideal_adaptive_delta_matches_walker_trace(ideal_run):
    res = ideal_run
    trace = res.walker_trace
    base = np.mean([w.stride for w in trace if w.phase == "baseline"])
    for c in res.metrics.conditions:
        walked = np.mean([w.stride for w in trace if w.phase == "condition" and w.condition == c.condition])
        assert abs(c.delta_stride - (walked - base)) <= 0.02


def test_walker_trace_reacts_to_the_audible_cue(ideal_run):
    res = ideal_run
    for w in res.walker_trace:
        if w.phase == "training":
            assert w.cue_hz is not None and w.cadence == w.cue_hz
        if w.phase == "baseline":
            assert w.cue_hz is None


def test_replay_reproduces_step_log(ideal_run, tmp_path):
    cfg = ideal_run.config.with_(mode="Replay", input_log=str(ideal_run.out_dir / "imu.csv"), walker=None)
    rep = run_session(cfg, tmp_path)
    assert rep.steps == ideal_run.steps
    assert rep.cues == ideal_run.cues
    assert (tmp_path / "steps.csv").read_bytes() == (ideal_run.out_dir / "steps.csv").read_bytes()
    assert (tmp_path / "metrics.csv").read_bytes() == (ideal_run.out_dir / "metrics.csv").read_bytes()


def test_stage_errors_name_the_stage():
    with pytest.raises(SessionStageError) as info:
        run_session(short_config(training_beats=[1.5], beats_per_block=2), persist=False)
    assert info.value.stage == "slc_fit"
    with pytest.raises(SessionStageError) as info:
        run_session(short_config(walker=dict(IDEAL, slc_true=[40.0])), persist=False)
    assert info.value.stage == "walker"


def test_scripted_fixed_condition_turns_off_for_good():
    cfg = short_config(strategy="Fixed", secondary_task=False, condition_duration=60.0)
    tl = build_timeline(cfg)
    ctl = Controller(cfg, tl)
    n = {"L": 0}
    t = 0.0

    def feed(cadence, stride):
        nonlocal t
        n["L"] += 1
        ctl.process(StrideRecord("L", t, t + 0.5, stride, cadence, n["L"]))
        t += 0.5

    while t + 0.5 < tl.phases[0].end:
        feed(1.7, 1.0)
    for ph in tl.phases[1:-1]:
        t = ph.start
        while t + 0.5 < ph.end:
            feed(ph.beat, 0.3 + 0.6 * ph.beat)
    cond = tl.phases[-1]
    t = cond.start
    k = 0
    while t + 0.5 < cond.end:
        feed(1.7, 0.5 if k < 20 else 3.0)
        k += 1
    ctl.finish()
    rows = [s for s in ctl.steps if s.phase == "condition"]
    on = [s.cue_on for s in rows]
    assert not any(on[:4]) and all(on[4:20])
    first_off = next(i for i in range(20, len(on)) if not on[i])
    assert not any(on[first_off:])
    # the window mean crosses the target once enough long strides are in the window
    means = [np.mean([r.stride for r in rows[max(0, i - 4) : i + 1]]) for i in range(len(rows))]
    assert first_off == next(i for i in range(4, len(rows)) if means[i] >= ctl.targets.l_target)
    m = compute_metrics(ctl.steps, ctl.cues, tl.conditions).conditions[0]
    assert m.percent_on_final_minute < 100.0
    assert on_time(ctl.cues, rows[first_off].t, cond.end) == 0.0


# --- plots -----------------------------------------------------------------------


def test_empty_metrics_give_header_only_csv(tmp_path):
    charts = emit_plots(None, tmp_path)
    assert charts == []
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert lines == ["#gaitloop-v1", ",".join(METRICS_HEADER)]
    empty = SessionMetrics(1.0, 1.7, 10, ())
    assert emit_plots(empty, tmp_path / "e") == []
    assert not list((tmp_path / "e").glob("*.svg"))


def test_four_condition_charts(ideal_run, tmp_path):
    charts = emit_plots(ideal_run.metrics, tmp_path, ideal_run.rel, ideal_run.targets, ideal_run.training)
    assert {p.name for p in charts} == {"delta_stride.svg", "percent_on.svg", "slc.svg"}
    assert len(read_metrics_csv(tmp_path / "metrics.csv")) == 4
    for name in ("delta_stride.svg", "percent_on.svg"):
        svg = (tmp_path / name).read_text()
        assert svg.count("fill: #737373") == 4


def test_slc_target_marker_file(tmp_path):
    f = np.array([1.16, 1.41, 1.58, 1.75, 1.91])
    rel = fit_slcrel(list(zip(f, -0.4 * f**2 + 1.5 * f - 0.2)))
    targets = select_targets(rel, 1.8)
    emit_plots(None, tmp_path, rel, targets, [(c, -0.4 * c**2 + 1.5 * c - 0.2, c) for c in f])
    lines = (tmp_path / "slc_target.csv").read_text().splitlines()
    assert lines[1] == "f_baseline,f_target,l_target"
    fb, ft, lt = map(float, lines[2].split(","))
    assert (fb, ft, lt) == (1.8, targets.f_target, targets.l_target)
    assert ft == pytest.approx(1.98) and lt == pytest.approx(-0.4 * 1.98**2 + 1.5 * 1.98 - 0.2 + 0.1, abs=1e-9)


def test_unwritable_plot_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_plots(None, blocker / "sub")


def test_baseline_without_strides_names_baseline_stage():
    with pytest.raises(SessionStageError) as info:
        run_session(short_config(baseline_duration=0.1), persist=False)
    assert info.value.stage == "baseline"
