import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitloop.errors import DegenerateTrainingDataError
from gaitloop.slc_model import (
    SlcRel,
    baseline_cadence,
    fit_slcrel,
    read_training_csv,
    select_targets,
    write_training_csv,
)

BEATS = np.array([1.16, 1.41, 1.58, 1.75, 1.91])


def quad(f):
    return -0.4 * f**2 + 1.5 * f - 0.2


def oracle_targets(poly, fb):
    """Independent evaluation of both candidates by Horner's rule."""
    def ev(f):
        acc = 0.0
        for c in poly:
            acc = acc * f + c
        return acc

    lo, hi = 0.9 * fb, 1.1 * fb
    l_lo, l_hi = ev(lo) + 0.1, ev(hi) + 0.1
    return (hi, l_hi) if l_hi > l_lo else (lo, l_lo)


def test_exact_linear_fit():
    rel = fit_slcrel(np.c_[BEATS, 0.5 + 0.2 * BEATS])
    assert rel.degree == 1
    assert rel.coeffs == pytest.approx((0.2, 0.5), abs=1e-12)
    assert rel.residual <= 1e-12
    assert rel.domain == (1.16, 1.91)


def test_exact_quadratic_fit():
    rel = fit_slcrel(np.c_[BEATS, quad(BEATS)])
    assert rel.degree == 2
    assert rel.residual <= 1e-12
    assert rel(BEATS) == pytest.approx(quad(BEATS), abs=1e-6)


def test_noisy_quadratic_within_three_standard_errors():
    rng = np.random.default_rng(7)
    f = np.repeat(BEATS, 50)
    y = quad(f) + rng.normal(0, 0.05, f.size)
    rel = fit_slcrel(np.c_[f, y])
    assert rel.degree == 2
    x = np.vander(f, 3)
    se = np.sqrt(np.diag(0.05**2 * np.linalg.inv(x.T @ x)))
    assert np.all(np.abs(np.array(rel.coeffs) - [-0.4, 1.5, -0.2]) <= 3 * se)


def test_degenerate_inputs():
    with pytest.raises(DegenerateTrainingDataError):
        fit_slcrel([(1.5, 1.0)] * 6)
    with pytest.raises(DegenerateTrainingDataError):
        fit_slcrel([(1.5, 1.0), (1.6, 1.1)])
    with pytest.raises(DegenerateTrainingDataError):
        fit_slcrel([(1.5, 1.0), (1.6, float("nan"))] * 3)


def test_two_cadences_only_admit_linear():
    rel = fit_slcrel([(1.0, 1.0), (1.0, 1.1), (2.0, 1.5), (2.0, 1.4), (2.0, 1.45)])
    assert rel.degree == 1


def test_target_linear():
    rel = SlcRel((0.2, 0.5), 1, 0.0, (1.0, 2.5))
    t = select_targets(rel, 2.0)
    assert (t.f_target, t.l_target) == pytest.approx((2.2, 1.04), abs=1e-12)
    assert not t.extrapolated


def test_target_tie_picks_lower_cadence():
    rel = SlcRel((0.0, 1.0), 1, 0.0, (1.0, 2.5))
    t = select_targets(rel, 2.0)
    assert t.f_target == pytest.approx(1.8, abs=1e-12)
    assert t.l_target == pytest.approx(1.1, abs=1e-12)


def test_target_quadratic_matches_direct_evaluation():
    poly = (-0.4, 1.5, -0.2)
    t = select_targets(SlcRel(poly, 2, 0.0, (1.16, 1.91)), 1.8)
    f_exp, l_exp = oracle_targets(poly, 1.8)
    assert abs(t.f_target - f_exp) <= 1e-9 and abs(t.l_target - l_exp) <= 1e-9
    # frozen from the oracle: l(1.62) + 0.1 = 1.28024 < l(1.98) + 0.1 = 1.30184
    assert (t.f_target, t.l_target) == pytest.approx((1.98, 1.30184), abs=1e-9)
    assert t.extrapolated  # 1.98 Hz lies above the training range


def test_baseline_cadence():
    assert baseline_cadence([1.0, 2.0, 10.0]) == 2.0
    assert baseline_cadence([1.0, 2.0, 3.0], "mean") == 2.0
    with pytest.raises(DegenerateTrainingDataError):
        baseline_cadence([])


def test_training_csv_round_trip(tmp_path):
    rows = [(1.1600000000000001, 0.9, 1.16), (1.41, 1.0, 1.41)]
    p = tmp_path / "training.csv"
    write_training_csv(p, rows)
    assert p.read_text().splitlines()[0] == "#gaitloop-v1"
    assert read_training_csv(p) == rows


coef = st.floats(-1.0, 1.0, allow_nan=False)


@settings(max_examples=80, deadline=None)
@given(a=coef, b=coef, c=st.floats(0.2, 1.5), fb=st.floats(0.8, 2.4), scale=st.floats(0.2, 5.0))
def test_target_properties(a, b, c, fb, scale):
    rel = SlcRel((a, b, c), 2, 0.0, (1.0, 2.0))
    t = select_targets(rel, fb)
    assert t.f_target in (fb * 0.9, fb * 1.1)
    assert abs(t.l_target - float(rel(t.f_target)) - 0.1) <= 1e-12
    # argmax invariance when strides and the offset scale together
    lo, hi = fb * 0.9, fb * 1.1
    s_lo = scale * (float(rel(lo)) + 0.1)
    s_hi = scale * (float(rel(hi)) + 0.1)
    if abs(s_hi - s_lo) > 1e-9:
        assert (hi if s_hi > s_lo else lo) == t.f_target


@settings(max_examples=40, deadline=None)
@given(a=coef, b=coef, c=coef, deg=st.sampled_from([1, 2]))
def test_fit_reproduces_exact_polynomials(a, b, c, deg):
    poly = (a, b, c) if deg == 2 else (b, c)
    y = np.polyval(poly, BEATS)
    rel = fit_slcrel(np.c_[BEATS, y])
    assert rel.residual <= 1e-10
    assert rel(BEATS) == pytest.approx(y, abs=1e-6)
