"""Command-line interface.

Subcommands::

    voxmod run    SEQUENCE   # label a recorded sequence, write CSVs
    voxmod synth  SCENE      # render a synthetic scene to a sequence dir
    voxmod bench  SEQUENCE   # per-stage timing report + scaling fit
    voxmod ablate SEQUENCE   # IoU per disabled feature vs the full method
    voxmod eval   SEQUENCE LABEL_DIR   # score stored predictions

Exit codes: 0 success, 1 usage error, 2 data error. ``VOXMOD_THREADS``
and ``VOXMOD_OUT`` provide environment defaults for ``--threads`` and
``--out``; explicit flags win.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import io as vio
from .errors import DataFormatError, UsageError, VoxmodError
from .evaluation import (
    aggregate,
    fit_timing_scaling,
    score_frame,
    summarize_timings,
    write_metrics_csv,
    write_timings_csv,
)
from .pipeline import DetectionPipeline, Toggles
from .scene_sim import scene_from_dict
from .voxel_map import MapConfig, compute_reset_duration

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

_ABLATION_ROWS = [
    ("full method", None),
    ("w/o occupancy cue", "use_occupancy_cue"),
    ("w/o tsdf cue", "use_tsdf_cue"),
    ("w/o temporal window", "use_temporal_window"),
    ("w/o spatial margin", "use_spatial_margin"),
    ("w/o sparsity compensation", "use_sparsity_compensation"),
    ("w/o cluster filter", "use_cluster_filter"),
]


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; our contract reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_or_inf(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


_CONFIG_FLAG_FIELDS = [
    ("--voxel-size", "voxel_size", float, "voxel edge length in metres"),
    ("--block-voxels", "block_voxels", int, "voxels per block (perfect cube)"),
    ("--truncation-distance", "truncation_distance", float, "TSDF clamp distance"),
    ("--occupancy-distance", "occupancy_distance", float, "distance below which a voxel counts occupied"),
    ("--sparsity-frames", "sparsity_frames", int, "missed frames tolerated in an occupancy run"),
    ("--temporal-window", "temporal_window", int, "idle frames required before a voxel can be free"),
    ("--reset-duration", "reset_duration", _float_or_inf, "occupancy frames that trigger a free-flag reset ('inf' disables)"),
    ("--min-cluster-size", "min_cluster_size", int, "smallest surviving cluster, in voxels"),
    ("--max-range", "max_integration_range", float, "integration range cutoff in metres"),
    ("--frame-rate", "frame_rate", float, "sensor frame rate in Hz"),
    ("--measurement-weight", "measurement_weight", float, "weight of one TSDF measurement"),
    ("--connectivity", "connectivity", int, "voxel neighborhood size (6 or 26)"),
]

_TOGGLE_FLAGS = [
    ("--no-occupancy-cue", "use_occupancy_cue"),
    ("--no-tsdf-cue", "use_tsdf_cue"),
    ("--no-temporal-window", "use_temporal_window"),
    ("--no-spatial-margin", "use_spatial_margin"),
    ("--no-sparsity-compensation", "use_sparsity_compensation"),
    ("--no-cluster-filter", "use_cluster_filter"),
]


def _add_common(p: argparse.ArgumentParser, toggles: bool = True) -> None:
    p.add_argument("--config", metavar="YAML", help="map config file (overrides the sequence's map.yaml)")
    for flag, dest, typ, help_text in _CONFIG_FLAG_FIELDS:
        p.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)
    p.add_argument(
        "--max-drift-rate",
        dest="max_drift_rate",
        type=float,
        default=None,
        help="expected worst-case pose drift in m/s; sets the reset duration from it",
    )
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: VOXMOD_THREADS or library default)")
    p.add_argument("--out", default=None, help="output directory (default: VOXMOD_OUT)")
    if toggles:
        for flag, dest in _TOGGLE_FLAGS:
            p.add_argument(flag, dest=dest, action="store_false", help=f"disable {dest[4:].replace('_', ' ')}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voxmod", description="Moving-object detection in LiDAR sequences.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_run = sub.add_parser("run", parents=[], help="label a sequence and write metrics/timings")
    p_run.add_argument("sequence", help="sequence directory (points/, poses.txt, ...)")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_synth = sub.add_parser("synth", help="render a scene file into a sequence directory")
    p_synth.add_argument("scene", help="scene description YAML")
    p_synth.add_argument("--out", default=None, help="sequence directory to create (default: VOXMOD_OUT)")
    p_synth.set_defaults(func=cmd_synth)

    p_bench = sub.add_parser("bench", help="timing report with per-stage breakdown")
    p_bench.add_argument("sequence")
    _add_common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_abl = sub.add_parser("ablate", help="IoU impact of disabling each feature")
    p_abl.add_argument("sequence")
    _add_common(p_abl, toggles=False)
    p_abl.set_defaults(func=cmd_ablate)

    p_eval = sub.add_parser("eval", help="score stored label files against ground truth")
    p_eval.add_argument("sequence")
    p_eval.add_argument("labels", help="directory of predicted label files")
    p_eval.add_argument("--out", default=None, help="where to write metrics.csv (default: print only)")
    p_eval.set_defaults(func=cmd_eval)

    return parser


# ---------------------------------------------------------------------------
# Shared resolution helpers (precedence: flag > environment > sequence config)
# ---------------------------------------------------------------------------


def _resolve_threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.threads
    env = os.environ.get("VOXMOD_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"VOXMOD_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise UsageError("VOXMOD_THREADS must be >= 1")
        return value
    return 0


def _resolve_out(args, default: str | None = None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    env = os.environ.get("VOXMOD_OUT")
    if env:
        return Path(env)
    if default is not None:
        return Path(default)
    raise UsageError("output directory required: pass --out or set VOXMOD_OUT")


def _resolve_config(args, sequence_config: MapConfig | None) -> MapConfig:
    if getattr(args, "config", None):
        cfg = vio.load_config(args.config)
    elif sequence_config is not None:
        cfg = sequence_config
    else:
        cfg = MapConfig()
    overrides = {}
    for _, dest, _, _ in _CONFIG_FLAG_FIELDS:
        value = getattr(args, dest, None)
        if value is not None:
            overrides[dest] = value
    drift_rate = getattr(args, "max_drift_rate", None)
    if drift_rate is not None:
        if "reset_duration" in overrides:
            raise UsageError("--reset-duration and --max-drift-rate are mutually exclusive")
        overrides["reset_duration"] = compute_reset_duration(
            overrides.get("voxel_size", cfg.voxel_size),
            overrides.get("frame_rate", cfg.frame_rate),
            drift_rate,
        )
    try:
        return cfg.with_overrides(**overrides) if overrides else cfg
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _resolve_toggles(args) -> Toggles:
    kwargs = {dest: getattr(args, dest, True) for _, dest in _TOGGLE_FLAGS}
    return Toggles(**kwargs)


def _check_truth(truth: np.ndarray, frame, root) -> None:
    if truth.shape[0] != frame.points.shape[0]:
        raise DataFormatError(
            f"{root}: frame {frame.index} has {frame.points.shape[0]} points "
            f"but {truth.shape[0]} ground-truth labels"
        )


def _print_timing_summary(timings) -> None:
    s = summarize_timings(timings)
    if not s:
        return
    print(
        "stage means: "
        f"preprocess {s['preprocess_ms_mean']:.2f} ms, "
        f"detect {s['clustering_ms_mean']:.2f} ms, "
        f"integrate {s['integration_ms_mean']:.2f} ms, "
        f"freespace {s['freespace_ms_mean']:.2f} ms"
    )
    print(f"total {s['total_ms_mean']:.2f} +/- {s['total_ms_std']:.2f} ms/frame ({s['fps']:.1f} FPS)")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    reader = vio.SequenceReader(args.sequence)
    config = _resolve_config(args, reader.config())
    pipe = DetectionPipeline(config, _resolve_toggles(args), threads=_resolve_threads(args))
    out = _resolve_out(args, default="voxmod_out")
    label_dir = out / "labels"
    label_dir.mkdir(parents=True, exist_ok=True)

    metrics, timings = [], []
    for frame in reader.frames():
        result = pipe.process_frame(frame)
        vio.write_labels(label_dir / vio.frame_name(frame.index), result.detection.labels)
        timings.append(result.timings)
        truth = reader.read_truth(frame.index)
        if truth is not None:
            _check_truth(truth, frame, reader.root)
            metrics.append(score_frame(frame.index, result.detection.labels, truth))

    write_timings_csv(out / "timings.csv", timings)
    print(f"processed {len(timings)} frames -> {label_dir}")
    if metrics:
        write_metrics_csv(out / "metrics.csv", metrics)
        agg = aggregate(metrics)
        iou = agg["mean_iou"]
        print(
            f"mean IoU {iou:.3f} over {agg['frames_with_iou']} frames"
            if iou is not None
            else "mean IoU n/a (no frame had dynamic points on either side)"
        )
    _print_timing_summary(timings)
    return EXIT_OK


def cmd_synth(args) -> int:
    scene_path = Path(args.scene)
    if not scene_path.is_file():
        raise DataFormatError(f"{scene_path}: no such scene file")
    with open(scene_path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise DataFormatError(f"{scene_path}: {exc}") from None
    if not isinstance(data, dict):
        raise DataFormatError(f"{scene_path}: scene file must be a mapping")
    try:
        scene = scene_from_dict(data)
        config = MapConfig(**(data.get("map") or {}))
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{scene_path}: {exc}") from None

    out = _resolve_out(args)
    writer = vio.SequenceWriter(out, config=config)
    n_dynamic = 0
    for scene_frame in scene.frames():
        writer.add_frame(scene_frame.frame, scene_frame.truth_dynamic)
        n_dynamic += int(scene_frame.truth_dynamic.sum())
    writer.close()
    print(f"wrote {scene.n_frames} frames ({n_dynamic} dynamic points) to {out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    reader = vio.SequenceReader(args.sequence)
    config = _resolve_config(args, reader.config())
    pipe = DetectionPipeline(config, _resolve_toggles(args), threads=_resolve_threads(args))

    timings = [pipe.process_frame(frame).timings for frame in reader.frames()]
    s = summarize_timings(timings)
    print(f"frames: {len(timings)}")
    for stage, label in [
        ("preprocess_ms", "preprocess"),
        ("clustering_ms", "detect"),
        ("integration_ms", "integrate"),
        ("freespace_ms", "freespace"),
        ("total_ms", "total"),
    ]:
        print(f"{label:>10}: {s[stage + '_mean']:8.2f} +/- {s[stage + '_std']:6.2f} ms")
    print(f"{'fps':>10}: {s['fps']:8.2f}")

    if len(timings) >= 10:
        fits = fit_timing_scaling(timings)
        fit = fits["map_vs_blocks"]
        if fit is not None:
            print(
                f"map-update time vs touched blocks: "
                f"{fit.slope * 1e3:.1f} us/block + {fit.intercept:.2f} ms (R^2 = {fit.r_squared:.4f})"
            )
        else:
            print("map-update time vs touched blocks: undefined (constant block count)")
        fit = fits["integration_vs_freespace"]
        if fit is not None:
            print(
                f"integration vs freespace time: "
                f"{fit.slope:.2f}x + {fit.intercept:.2f} ms (R^2 = {fit.r_squared:.4f})"
            )
        else:
            print("integration vs freespace time: undefined (constant freespace time)")
    else:
        print("scaling fits: n/a (need >= 10 frames)")

    if getattr(args, "out", None) or os.environ.get("VOXMOD_OUT"):
        out = _resolve_out(args)
        out.mkdir(parents=True, exist_ok=True)
        write_timings_csv(out / "timings.csv", timings)
        print(f"wrote {out / 'timings.csv'}")
    return EXIT_OK


def _run_for_iou(reader: vio.SequenceReader, config: MapConfig, toggles: Toggles, threads: int):
    pipe = DetectionPipeline(config, toggles, threads=threads)
    metrics = []
    for frame in reader.frames():
        result = pipe.process_frame(frame)
        truth = reader.read_truth(frame.index)
        if truth is not None:
            _check_truth(truth, frame, reader.root)
            metrics.append(score_frame(frame.index, result.detection.labels, truth))
    if not metrics:
        raise DataFormatError(f"{reader.root}: ablation needs ground-truth label files")
    return aggregate(metrics)["mean_iou"]


def cmd_ablate(args) -> int:
    reader = vio.SequenceReader(args.sequence)
    config = _resolve_config(args, reader.config())
    threads = _resolve_threads(args)

    rows = []
    full_iou = None
    for name, toggle_field in _ABLATION_ROWS:
        toggles = Toggles() if toggle_field is None else Toggles().off(toggle_field)
        iou = _run_for_iou(reader, config, toggles, threads)
        if toggle_field is None:
            full_iou = iou
        delta = None
        if full_iou is not None and iou is not None:
            delta = iou - full_iou
        rows.append((name, iou, delta))

    print(f"{'configuration':<28} {'IoU':>8} {'delta':>8}")
    for name, iou, delta in rows:
        iou_s = f"{iou:8.3f}" if iou is not None else f"{'n/a':>8}"
        delta_s = f"{delta:+8.3f}" if delta is not None else f"{'n/a':>8}"
        print(f"{name:<28} {iou_s} {delta_s}")

    if getattr(args, "out", None) or os.environ.get("VOXMOD_OUT"):
        out = _resolve_out(args)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ablation.csv", "w") as fh:
            fh.write("configuration,iou,delta\n")
            for name, iou, delta in rows:
                fh.write(
                    f"{name},{'' if iou is None else f'{iou:.6f}'},"
                    f"{'' if delta is None else f'{delta:.6f}'}\n"
                )
        print(f"wrote {out / 'ablation.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    reader = vio.SequenceReader(args.sequence)
    label_dir = Path(args.labels)
    if not label_dir.is_dir():
        raise DataFormatError(f"{label_dir}: no such label directory")

    metrics = []
    for frame in reader.frames():
        truth = reader.read_truth(frame.index)
        if truth is None:
            continue
        _check_truth(truth, frame, reader.root)
        pred_path = label_dir / vio.frame_name(frame.index)
        if not pred_path.is_file():
            raise DataFormatError(f"{pred_path}: missing predicted labels for frame {frame.index}")
        predicted = vio.read_labels(pred_path)
        if predicted.shape[0] != truth.shape[0]:
            raise DataFormatError(
                f"{pred_path}: {predicted.shape[0]} labels, expected {truth.shape[0]}"
            )
        metrics.append(score_frame(frame.index, predicted, truth))
    if not metrics:
        raise DataFormatError(f"{reader.root}: no frames with ground-truth labels")

    agg = aggregate(metrics)
    print(f"frames scored: {agg['frames']}")
    for key, label in [("mean_iou", "IoU"), ("mean_precision", "precision"), ("mean_recall", "recall")]:
        value = agg[key]
        count = agg[f"frames_with_{key.removeprefix('mean_')}"]
        print(f"mean {label}: " + (f"{value:.3f} over {count} frames" if value is not None else "n/a"))
    print(
        f"totals: tp {agg['total_tp']}, fp {agg['total_fp']}, "
        f"fn {agg['total_fn']}, tn {agg['total_tn']}"
    )
    if getattr(args, "out", None) or os.environ.get("VOXMOD_OUT"):
        out = _resolve_out(args)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", metrics)
        print(f"wrote {out / 'metrics.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"voxmod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataFormatError as exc:
        print(f"voxmod: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except VoxmodError as exc:
        print(f"voxmod: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
