import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msgmm.errors import DataError
from msgmm.evaluate import Matching, SweepTable, compute_metrics, evaluate_positions, match_peaks, sweep_parameter


def test_match_examples():
    assert match_peaks([3000.0], [3005.0]).n_matched == 1
    assert match_peaks([3000.0], [3100.0]).n_matched == 0
    empty = match_peaks([], [])
    assert empty.n_matched == 0 and empty.n_false == 0


def test_match_is_one_to_one_and_greedy():
    m = match_peaks([5000.0, 5003.0], [5002.0])
    assert m.pairs == ((1, 0),)
    assert m.n_false == 1


def test_metric_examples():
    perfect = compute_metrics(Matching(((0, 0),), 1, 1))
    assert (perfect.fdr, perfect.sensitivity, perfect.f1) == (0.0, 1.0, 1.0)
    half = compute_metrics(Matching(((0, 0),), 2, 2))
    assert half.fdr == 0.5 and half.sensitivity == 0.5 and half.f1 == pytest.approx(0.5)
    # precision 0.8, sensitivity 0.6
    r = compute_metrics(Matching(tuple((i, i) for i in range(12)), 15, 20))
    assert 1 - r.fdr == pytest.approx(0.8) and r.sensitivity == pytest.approx(0.6)
    assert r.f1 == pytest.approx(0.96 / 1.4)
    with pytest.raises(DataError, match="no ground truth"):
        compute_metrics(Matching((), 3, 0))


def test_no_detections_flagged():
    r = evaluate_positions([], [3000.0])
    assert r.no_detections and r.f1 == 0.0 and r.fdr == 0.0


positions = st.lists(st.floats(2000.0, 10000.0), min_size=0, max_size=25)


@given(positions, st.lists(st.floats(2000.0, 10000.0), min_size=1, max_size=25), st.integers(-20, 20))
def test_matching_scale_invariant(d, t, k):
    c = 2.0**k  # exact in floating point, so relative distances are unchanged bit for bit
    a = match_peaks(d, t)
    b = match_peaks([c * x for x in d], [c * x for x in t])
    assert a.pairs == b.pairs


@given(positions, st.lists(st.floats(2000.0, 10000.0), min_size=1, max_size=25))
def test_metric_bounds_and_one_to_one(d, t):
    m = match_peaks(d, t)
    assert len({i for i, _ in m.pairs}) == m.n_matched
    assert len({j for _, j in m.pairs}) == m.n_matched
    r = compute_metrics(m)
    assert 0 <= r.fdr <= 1 and 0 <= r.sensitivity <= 1 and 0 <= r.f1 <= 1
    assert r.f1 <= max(1 - r.fdr, r.sensitivity) + 1e-12
    assert r.n_matched_true <= min(r.n_true, r.n_detected)


def test_sweep_single_point_and_failures():
    table = sweep_parameter("x", [1], lambda v: [3000.0], [3000.0])
    assert len(table.rows()) == 1 and table.best_value == 1

    def detect(v):
        if v == 2:
            raise DataError("boom")
        return [3000.0] if v == 1 else []

    table = sweep_parameter("x", [1, 2, 3], detect, [3000.0])
    assert table.reports[1] is None and "boom" in table.errors[1]
    assert table.best_value == 1
    assert table.rows()[1]["error"] == "boom"
    with pytest.raises(DataError):
        sweep_parameter("x", [], detect, [3000.0])


def test_best_value_none_when_all_fail():
    assert SweepTable("x", [1], [None], ["e"]).best_value is None
