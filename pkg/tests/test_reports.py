import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlos_track.pipeline import RunConfig, StepRecord, simulate_modes
from nlos_track.reports import (bundle_json, build_bundle, cdf_table_text, compute_cdf, detection_stats, quantile,
                                read_records_csv, records_from_path, tracked_mask, write_records_csv)

from oracles import half_normal_cdf

errors = st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=200)


def record(t, epoch=0, reacquired=False, triggered=False, err=1.0, seed=0, mode="two_stage", nis=1.0):
    nan = float("nan")
    return StepRecord(mode=mode, seed=seed, t=t, epoch_id=epoch, num_paths=4, true_x=0.0, true_y=0.0,
                      true_gamma=0.0, coarse_x=err, coarse_y=0.0, coarse_gamma=0.0, coarse_status="converged",
                      kf_x=nan, kf_y=nan, kf_gamma=nan, est_x=err, est_y=0.0, est_gamma=0.0, position_error=err,
                      coarse_error=err, gamma_error=0.0, aod_se=1e-4, aoa_se=2e-4, nis=nis, threshold=2.0,
                      triggered=triggered, reacquired=reacquired, kf_nees=nan)


def test_cdf_examples():
    t = compute_cdf([1, 2, 3])
    assert t.at(2) == pytest.approx(2 / 3)
    assert t.at(0.5) == 0.0 and t.at(3) == 1.0
    t = compute_cdf([4.0] * 5)
    assert list(t.error_m) == [4.0] and list(t.cdf) == [1.0]
    with pytest.raises(ValueError):
        compute_cdf([])
    with pytest.raises(ValueError):
        compute_cdf([1.0, math.nan])


def test_cdf_of_half_normal():
    draws = np.abs(np.random.default_rng(0).standard_normal(10_000))
    assert compute_cdf(draws).at(1.0) == pytest.approx(half_normal_cdf(1.0), abs=0.02)


@given(errors)
def test_cdf_axioms(e):
    t = compute_cdf(e)
    assert np.all(np.diff(t.cdf) > 0) and t.cdf[-1] == 1.0
    assert np.all(np.diff(t.error_m) > 0)


@given(errors, st.floats(0.01, 1.0))
def test_quantile_consistent_with_cdf(e, q):
    v = quantile(e, q)
    t = compute_cdf(e)
    n = len(e)
    assert t.at(v) >= q - 1e-12
    assert t.at(np.nextafter(v, -np.inf)) < q + 1.0 / n


def test_tracked_mask():
    recs = [record(0, 0, True), record(1, 0), record(2, 1), record(3, 1), record(4, 1, True), record(5, 1)]
    assert list(tracked_mask(recs)) == [True, True, False, False, True, True]


def test_detection_stats():
    recs = [record(0, 0, True), record(1, 0, triggered=True), record(2, 0), record(3, 1), record(4, 1, True,
                                                                                             True),
            record(5, 1), record(6, 2), record(7, 2), record(8, 2), record(9, 2)]
    d = detection_stats(recs, deadline=3)
    assert d["boundaries"] == 2 and d["detected_within_deadline"] == 1
    assert d["false_alarms"] == 1
    assert d["tested_steps"] == 4
    with pytest.raises(ValueError):
        detection_stats(recs, 0)


def test_bundle_is_order_independent_and_json_safe():
    recs = [record(t, err=float(t), seed=s) for s in (0, 1) for t in range(5)]
    recs.append(record(5, err=math.nan))
    a = build_bundle(recs)
    b = build_bundle(list(reversed(recs)))
    assert bundle_json(a) == bundle_json(b)
    assert a["modes"]["two_stage"]["n_failed"] == 1
    assert "NaN" not in bundle_json(a)
    with pytest.raises(ValueError, match="no records"):
        build_bundle([])
    assert "error_m" in cdf_table_text(a)


def test_trace_round_trip(tmp_path):
    recs = simulate_modes(RunConfig(seed=3, n_steps=15))
    flat = [r for m in recs.values() for r in m.records]
    write_records_csv(flat, tmp_path / "steps.csv")
    back = read_records_csv(tmp_path / "steps.csv")
    assert len(back) == len(flat)
    for a, b in zip(flat, back):
        for k in StepRecord.columns():
            x, y = getattr(a, k), getattr(b, k)
            assert x == y or (isinstance(x, float) and math.isnan(x) and math.isnan(y))
    assert bundle_json(build_bundle(back)) == bundle_json(build_bundle(flat))
    assert len(records_from_path(tmp_path)) == len(flat)


def test_trace_errors(tmp_path):
    p = tmp_path / "steps.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_records_csv(p)
    p.write_text("")
    assert read_records_csv(p) == []
    with pytest.raises(FileNotFoundError):
        records_from_path(tmp_path / "empty_dir_missing")
    write_records_csv([record(0)], p)
    lines = p.read_text().splitlines()
    p.write_text(lines[0] + "\n" + lines[1].replace(",4,", ",four,", 1) + "\n")
    with pytest.raises(ValueError, match=":2: num_paths"):
        read_records_csv(p)
