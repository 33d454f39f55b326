"""Label scoring, run aggregation, stage timings, and scaling fits."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


@dataclass
class FrameMetrics:
    """Point-level confusion counts and ratios for one frame.

    ``iou``/``precision``/``recall`` are None when their denominator is
    zero (e.g. a frame with no true and no predicted dynamic points has
    no defined IoU); aggregation skips undefined values rather than
    counting them as 0 or 1.
    """

    frame: int
    tp: int
    fp: int
    fn: int
    tn: int
    iou: float | None
    precision: float | None
    recall: float | None


def score_frame(frame: int, predicted, truth) -> FrameMetrics:
    """Score predicted dynamic labels against ground truth for one frame."""
    pred = np.asarray(predicted, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape:
        raise ValueError(f"label shapes differ: {pred.shape} vs {true.shape}")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    iou = tp / (tp + fp + fn) if (tp + fp + fn) > 0 else None
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    return FrameMetrics(frame=frame, tp=tp, fp=fp, fn=fn, tn=tn, iou=iou, precision=precision, recall=recall)


def aggregate(metrics: list[FrameMetrics], frame_indices=None) -> dict:
    """Mean/min/max of each ratio over frames where it is defined, plus totals.

    ``frame_indices`` restricts the summary to those frames (e.g. the
    annotated subset of a longer run). An empty selection is an error —
    a silent empty summary hides evaluation bugs.
    """
    if frame_indices is not None:
        wanted = set(int(i) for i in frame_indices)
        metrics = [m for m in metrics if m.frame in wanted]
    if not metrics:
        raise ValueError("no frames selected for aggregation")

    out = {
        "frames": len(metrics),
        "total_tp": sum(m.tp for m in metrics),
        "total_fp": sum(m.fp for m in metrics),
        "total_fn": sum(m.fn for m in metrics),
        "total_tn": sum(m.tn for m in metrics),
    }
    for name in ("iou", "precision", "recall"):
        vals = [getattr(m, name) for m in metrics if getattr(m, name) is not None]
        out[f"mean_{name}"] = float(np.mean(vals)) if vals else None
        out[f"min_{name}"] = float(min(vals)) if vals else None
        out[f"max_{name}"] = float(max(vals)) if vals else None
        out[f"frames_with_{name}"] = len(vals)
    return out


@dataclass
class StageTimings:
    """Wall-clock milliseconds per pipeline stage plus size counters."""

    frame: int
    preprocess_ms: float
    clustering_ms: float
    integration_ms: float
    freespace_ms: float
    total_ms: float
    n_points: int
    n_valid_points: int
    n_seed_voxels: int
    n_candidate_voxels: int
    n_touched_blocks: int
    n_allocated_blocks: int


@dataclass
class ScalingFit:
    """Least-squares line y = slope * x + intercept with its R^2."""

    slope: float
    intercept: float
    r_squared: float


def fit_scaling(x, y) -> ScalingFit:
    """Ordinary least-squares fit of y against x.

    R^2 is 1 - SS_res/SS_tot; a constant-y input yields R^2 = 1.0 when
    the fit is exact and 0.0 otherwise.
    """
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if xs.size < 2:
        raise ValueError("need at least two samples to fit a line")
    x_mean = xs.mean()
    y_mean = ys.mean()
    sxx = float(np.sum((xs - x_mean) ** 2))
    if sxx == 0.0:
        raise ValueError("x values are all identical; slope is undefined")
    slope = float(np.sum((xs - x_mean) * (ys - y_mean)) / sxx)
    intercept = float(y_mean - slope * x_mean)
    residuals = ys - (slope * xs + intercept)
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((ys - y_mean) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return ScalingFit(slope=slope, intercept=intercept, r_squared=r2)


def fit_timing_scaling(timings: list["StageTimings"]) -> dict:
    """Scaling fits over a run's timings.

    Returns ``{"map_vs_blocks": ScalingFit | None,
    "integration_vs_freespace": ScalingFit | None}`` where the first
    regresses per-frame map-update time (integration + freespace) on the
    touched-block count and the second regresses integration time on
    freespace time. A degenerate regressor (constant x) yields None
    rather than an error — short or static runs are legitimate inputs.
    """
    if len(timings) < 10:
        raise ValueError(f"need at least 10 frames for a scaling fit, got {len(timings)}")
    blocks = np.array([t.n_touched_blocks for t in timings], dtype=np.float64)
    map_ms = np.array([t.integration_ms + t.freespace_ms for t in timings])
    integ = np.array([t.integration_ms for t in timings])
    free = np.array([t.freespace_ms for t in timings])

    def try_fit(x, y):
        try:
            return fit_scaling(x, y)
        except ValueError:
            return None

    return {
        "map_vs_blocks": try_fit(blocks, map_ms),
        "integration_vs_freespace": try_fit(free, integ),
    }


# ---------------------------------------------------------------------------
# CSV export/import
# ---------------------------------------------------------------------------

_METRIC_FIELDS = ["frame", "tp", "fp", "fn", "tn", "iou", "precision", "recall"]
_TIMING_FIELDS = [
    "frame",
    "preprocess_ms",
    "clustering_ms",
    "integration_ms",
    "freespace_ms",
    "total_ms",
    "n_points",
    "n_valid_points",
    "n_seed_voxels",
    "n_candidate_voxels",
    "n_touched_blocks",
    "n_allocated_blocks",
]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_metrics_csv(path, metrics: list[FrameMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_METRIC_FIELDS)
        for m in metrics:
            row = asdict(m)
            writer.writerow([_fmt(row[k]) for k in _METRIC_FIELDS])


def read_metrics_csv(path) -> list[FrameMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                FrameMetrics(
                    frame=int(row["frame"]),
                    tp=int(row["tp"]),
                    fp=int(row["fp"]),
                    fn=int(row["fn"]),
                    tn=int(row["tn"]),
                    iou=float(row["iou"]) if row["iou"] else None,
                    precision=float(row["precision"]) if row["precision"] else None,
                    recall=float(row["recall"]) if row["recall"] else None,
                )
            )
    return out


def write_timings_csv(path, timings: list[StageTimings]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TIMING_FIELDS)
        for t in timings:
            row = asdict(t)
            writer.writerow([_fmt(row[k]) for k in _TIMING_FIELDS])


def read_timings_csv(path) -> list[StageTimings]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kwargs = {}
            for k in _TIMING_FIELDS:
                kwargs[k] = float(row[k]) if k.endswith("_ms") else int(row[k])
            out.append(StageTimings(**kwargs))
    return out


def summarize_timings(timings: list[StageTimings]) -> dict:
    """Mean/std per stage and the implied frames-per-second."""
    if not timings:
        return {}
    stages = ["preprocess_ms", "clustering_ms", "integration_ms", "freespace_ms", "total_ms"]
    out = {}
    for s in stages:
        vals = np.array([getattr(t, s) for t in timings])
        out[f"{s}_mean"] = float(vals.mean())
        out[f"{s}_std"] = float(vals.std())
    out["fps"] = 1000.0 / out["total_ms_mean"] if out["total_ms_mean"] > 0 else float("inf")
    out["frames"] = len(timings)
    return out
