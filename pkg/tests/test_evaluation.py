"""Metric arithmetic, aggregation rules, scaling fits, CSV round trips."""

import numpy as np
import pytest
from scipy import stats

from voxmod.evaluation import (
    FrameMetrics,
    StageTimings,
    aggregate,
    fit_scaling,
    fit_timing_scaling,
    read_metrics_csv,
    read_timings_csv,
    score_frame,
    summarize_timings,
    write_metrics_csv,
    write_timings_csv,
)


# ------------------------------------------------------------------- scoring

def test_score_frame_set_example():
    # predicted {a,b,c} vs truth {b,c,d} over points [a,b,c,d]
    m = score_frame(0, [True, True, True, False], [False, True, True, True])
    assert (m.tp, m.fp, m.fn, m.tn) == (2, 1, 1, 0)
    assert m.iou == pytest.approx(0.5)
    assert m.precision == pytest.approx(2 / 3)
    assert m.recall == pytest.approx(2 / 3)


def test_perfect_prediction_scores_one():
    truth = np.array([True, False, True, False])
    m = score_frame(3, truth, truth)
    assert m.iou == 1.0 and m.precision == 1.0 and m.recall == 1.0


def test_empty_prediction_nonempty_truth():
    m = score_frame(0, [False, False, False], [True, False, True])
    assert m.iou == 0.0
    assert m.recall == 0.0
    assert m.precision is None


def test_all_static_frame_has_undefined_ratios():
    m = score_frame(0, [False, False], [False, False])
    assert m.iou is None and m.precision is None and m.recall is None
    assert m.tn == 2


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        score_frame(0, [True], [True, False])


def test_metrics_permutation_invariant():
    rng = np.random.default_rng(8)
    pred = rng.random(200) < 0.3
    truth = rng.random(200) < 0.3
    perm = rng.permutation(200)
    a = score_frame(0, pred, truth)
    b = score_frame(0, pred[perm], truth[perm])
    assert (a.tp, a.fp, a.fn, a.tn) == (b.tp, b.fp, b.fn, b.tn)


def test_iou_bounded_by_precision_and_recall():
    rng = np.random.default_rng(9)
    for _ in range(50):
        pred = rng.random(100) < rng.uniform(0.1, 0.9)
        truth = rng.random(100) < rng.uniform(0.1, 0.9)
        m = score_frame(0, pred, truth)
        if m.iou is not None and m.precision is not None:
            assert m.iou <= m.precision + 1e-12
        if m.iou is not None and m.recall is not None:
            assert m.iou <= m.recall + 1e-12


# --------------------------------------------------------------- aggregation

def metric_with(frame, iou):
    return FrameMetrics(frame=frame, tp=1, fp=0, fn=0, tn=0, iou=iou, precision=iou, recall=iou)


def test_aggregate_means():
    summary = aggregate([metric_with(0, 0.8), metric_with(1, 0.9)])
    assert summary["mean_iou"] == pytest.approx(0.85)
    assert summary["min_iou"] == pytest.approx(0.8)
    assert summary["max_iou"] == pytest.approx(0.9)
    assert summary["frames"] == 2


def test_aggregate_skips_undefined_frames():
    summary = aggregate([metric_with(0, 0.8), metric_with(1, None)])
    assert summary["mean_iou"] == pytest.approx(0.8)
    assert summary["frames_with_iou"] == 1
    assert summary["frames"] == 2


def test_aggregate_totals_are_sums():
    ms = [
        FrameMetrics(frame=0, tp=2, fp=1, fn=0, tn=5, iou=None, precision=None, recall=None),
        FrameMetrics(frame=1, tp=3, fp=0, fn=2, tn=4, iou=None, precision=None, recall=None),
    ]
    summary = aggregate(ms)
    assert summary["total_tp"] == 5
    assert summary["total_fp"] == 1
    assert summary["total_fn"] == 2
    assert summary["total_tn"] == 9


def test_aggregate_frame_selection():
    ms = [metric_with(t, 0.5 + 0.1 * t) for t in range(4)]
    summary = aggregate(ms, frame_indices=[2, 3])
    assert summary["frames"] == 2
    assert summary["mean_iou"] == pytest.approx(0.75)


def test_aggregate_empty_selection_is_an_error():
    with pytest.raises(ValueError):
        aggregate([metric_with(0, 0.5)], frame_indices=[7])
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_matches_whole_sequence_recompute():
    rng = np.random.default_rng(12)
    preds = [rng.random(80) < 0.3 for _ in range(10)]
    truths = [rng.random(80) < 0.3 for _ in range(10)]
    metrics = [score_frame(t, p, g) for t, (p, g) in enumerate(zip(preds, truths))]
    summary = aggregate(metrics)
    # recompute the totals from raw labels in one go
    all_pred = np.concatenate(preds)
    all_true = np.concatenate(truths)
    assert summary["total_tp"] == int(np.sum(all_pred & all_true))
    assert summary["total_fp"] == int(np.sum(all_pred & ~all_true))
    assert summary["total_fn"] == int(np.sum(~all_pred & all_true))


# ------------------------------------------------------------------ fitting

def test_exact_line_fits_perfectly():
    x = np.arange(20, dtype=float)
    fit = fit_scaling(x, 3.0 * x + 1.5)
    assert fit.slope == pytest.approx(3.0)
    assert fit.intercept == pytest.approx(1.5)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_matches_scipy_linregress():
    rng = np.random.default_rng(21)
    x = rng.uniform(0, 50, 200)
    y = 0.7 * x + rng.normal(0, 2.0, 200)
    fit = fit_scaling(x, y)
    ref = stats.linregress(x, y)
    assert fit.slope == pytest.approx(ref.slope)
    assert fit.intercept == pytest.approx(ref.intercept)
    assert fit.r_squared == pytest.approx(ref.rvalue**2)


def test_fit_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        fit_scaling([1.0], [2.0])
    with pytest.raises(ValueError):
        fit_scaling([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        fit_scaling([[1.0, 2.0]], [[3.0, 4.0]])


def test_constant_y_is_a_perfect_horizontal_fit():
    fit = fit_scaling([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    assert fit.slope == 0.0
    assert fit.r_squared == 1.0


def timing(frame, blocks, integ, free):
    return StageTimings(
        frame=frame,
        preprocess_ms=1.0,
        clustering_ms=0.5,
        integration_ms=integ,
        freespace_ms=free,
        total_ms=1.5 + integ + free,
        n_points=1000,
        n_valid_points=900,
        n_seed_voxels=0,
        n_candidate_voxels=0,
        n_touched_blocks=blocks,
        n_allocated_blocks=blocks * 2,
    )


def test_timing_scaling_recovers_linear_relation():
    rows = [timing(t, blocks=10 + 3 * t, integ=2.0 * (10 + 3 * t), free=1.0 * (10 + 3 * t))
            for t in range(30)]
    fits = fit_timing_scaling(rows)
    assert fits["map_vs_blocks"].r_squared == pytest.approx(1.0)
    assert fits["map_vs_blocks"].slope == pytest.approx(3.0)
    assert fits["integration_vs_freespace"].slope == pytest.approx(2.0)


def test_timing_scaling_needs_enough_frames():
    rows = [timing(t, 5, 1.0, 1.0) for t in range(9)]
    with pytest.raises(ValueError):
        fit_timing_scaling(rows)


def test_timing_scaling_flags_degenerate_regressor_as_none():
    rows = [timing(t, 5, 1.0 + 0.1 * t, 1.0) for t in range(12)]
    fits = fit_timing_scaling(rows)
    assert fits["map_vs_blocks"] is None  # constant touched-block count
    assert fits["integration_vs_freespace"] is None  # constant freespace time


# ----------------------------------------------------------------- CSV files

def test_metrics_csv_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    metrics = [
        score_frame(t, rng.random(50) < 0.4, rng.random(50) < 0.4) for t in range(6)
    ]
    metrics.append(score_frame(6, np.zeros(5, bool), np.zeros(5, bool)))  # undefined row
    path = tmp_path / "metrics.csv"
    write_metrics_csv(path, metrics)
    back = read_metrics_csv(path)
    assert len(back) == len(metrics)
    for a, b in zip(metrics, back):
        assert (a.frame, a.tp, a.fp, a.fn, a.tn) == (b.frame, b.tp, b.fp, b.fn, b.tn)
        for field in ("iou", "precision", "recall"):
            va, vb = getattr(a, field), getattr(b, field)
            if va is None:
                assert vb is None
            else:
                assert vb == pytest.approx(va, abs=1e-6)


def test_timings_csv_round_trip(tmp_path):
    rows = [timing(t, blocks=4 + t, integ=1.25, free=0.75) for t in range(5)]
    path = tmp_path / "timings.csv"
    write_timings_csv(path, rows)
    back = read_timings_csv(path)
    assert len(back) == 5
    assert back[3].n_touched_blocks == 7
    assert back[0].integration_ms == pytest.approx(1.25, abs=1e-6)


def test_summarize_timings_reports_means_and_fps():
    rows = [timing(t, 5, integ=2.0, free=2.0) for t in range(10)]
    summary = summarize_timings(rows)
    assert summary["frames"] == 10
    assert summary["total_ms_mean"] == pytest.approx(5.5)
    assert summary["fps"] == pytest.approx(1000.0 / 5.5)
