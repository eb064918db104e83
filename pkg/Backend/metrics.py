"""Frame-level AUC metrics, direction accuracy and the duration-bucket analysis."""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from sklearn.metrics import auc, average_precision_score, roc_curve

from Backend.datamodel import DIRECTIONS
from Backend.errors import ArgumentError, ShapeError, UndefinedMetricError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.6, 0.7, 0.8, 0.9)
DEFAULT_BUCKET_EDGES = (0.0, 3.0, 6.0)  # seconds

SUMMARY_NAME = "summary.csv"
SCORES_NAME = "scores.csv"


@dataclass
class EvalReport:
    auc_roc: float
    auc_pr: float
    direction_accuracy: Optional[float] = None
    per_video_scores: Dict[str, np.ndarray] = field(default_factory=dict)
    per_video_labels: Dict[str, np.ndarray] = field(default_factory=dict)
    duration_buckets: Dict[str, Dict[float, float]] = field(default_factory=dict)
    anomaly_durations: Dict[str, int] = field(default_factory=dict)  # longest anomaly run, frames
    direction_predictions: Dict[str, np.ndarray] = field(default_factory=dict)
    direction_truths: Dict[str, str] = field(default_factory=dict)
    direction_ties: int = 0
    system: str = "fdpn"
    config_hash: str = ""


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.shape[0]} scores but {labels.shape[0]} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ArgumentError("labels must be binary")
    if not np.all(np.isfinite(scores)):
        raise ArgumentError("scores must be finite")
    if labels.size == 0 or labels.min() == labels.max():
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    return scores, labels.astype(np.int64)


def auc_roc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve (ties count one half)."""
    scores, labels = _check_binary(scores, labels)
    fpr, tpr, _ = roc_curve(labels, scores)
    return float(auc(fpr, tpr))


def auc_pr(scores, labels) -> float:
    """Step-interpolated area under the precision-recall curve."""
    scores, labels = _check_binary(scores, labels)
    return float(average_precision_score(labels, scores))


def _direction_indices(truths: Sequence[Union[str, int]]) -> np.ndarray:
    out = []
    for t in truths:
        if isinstance(t, str):
            if t not in DIRECTIONS:
                raise ArgumentError(f"unknown direction {t!r}")
            out.append(DIRECTIONS.index(t))
        else:
            out.append(int(t))
    return np.array(out, dtype=np.int64)


def argmax_ties(predictions: Sequence[np.ndarray]) -> int:
    probs = np.asarray(predictions, dtype=np.float64).reshape(-1, len(DIRECTIONS))
    return int(np.sum((probs == probs.max(axis=1, keepdims=True)).sum(axis=1) > 1))


def direction_accuracy(predictions: Sequence[np.ndarray], truths: Sequence[Union[str, int]]) -> float:
    """Fraction of videos whose argmax direction matches; ties go to the lower class index."""
    if len(predictions) == 0:
        raise UndefinedMetricError("direction accuracy of zero videos is undefined")
    if len(predictions) != len(truths):
        raise ShapeError(f"{len(predictions)} predictions but {len(truths)} truths")
    probs = np.asarray(predictions, dtype=np.float64).reshape(-1, len(DIRECTIONS))
    ties = argmax_ties(probs)
    if ties:
        logger.warning(f"{ties} direction predictions had tied maxima; broken toward the lower index")
    return float(np.mean(np.argmax(probs, axis=1) == _direction_indices(truths)))


def longest_run(labels: np.ndarray) -> int:
    """Length of the longest contiguous block of 1s."""
    labels = np.asarray(labels).astype(np.int8)
    if not labels.any():
        return 0
    padded = np.concatenate([[0], labels, [0]])
    edges = np.flatnonzero(np.diff(padded))
    return int((edges[1::2] - edges[::2]).max())


def anomaly_durations(per_video_labels: Mapping[str, np.ndarray]) -> Dict[str, int]:
    return {video_id: longest_run(labels) for video_id, labels in per_video_labels.items()}


def bucket_name(index: int, edges: Sequence[float]) -> str:
    low = f"{edges[index]:g}"
    if index + 1 < len(edges):
        return f"{low}-{edges[index + 1]:g}s"
    return f"{low}+s"


def _check_thresholds(thresholds: Sequence[float]) -> None:
    for t in thresholds:
        if not any(abs(t - allowed) < 1e-9 for allowed in DEFAULT_THRESHOLDS):
            raise ArgumentError(f"threshold {t} is not one of {DEFAULT_THRESHOLDS}")


def duration_bucket_accuracy(
    report: EvalReport,
    bucket_edges: Sequence[float] = DEFAULT_BUCKET_EDGES,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    fps_nominal: float = 30.0,
) -> Dict[str, Dict[float, float]]:
    """Thresholded frame accuracy of abnormal videos grouped by anomaly duration.

    A video falls in the bucket of its longest anomaly, measured in seconds
    at `fps_nominal`. Buckets holding no video are left out.
    """
    _check_thresholds(thresholds)
    edges = list(bucket_edges)
    if edges != sorted(edges) or not edges:
        raise ArgumentError(f"bucket edges must be ascending, got {bucket_edges}")
    durations = report.anomaly_durations
    grouped: Dict[int, List[str]] = {}
    for video_id, labels in report.per_video_labels.items():
        duration = durations[video_id] if video_id in durations else longest_run(labels)
        if duration == 0:
            continue
        seconds = duration / fps_nominal
        index = int(np.searchsorted(edges, seconds, side="right")) - 1
        if index < 0:
            continue
        grouped.setdefault(index, []).append(video_id)
    out = {}
    for index in sorted(grouped):
        videos = sorted(grouped[index])
        scores = np.concatenate([report.per_video_scores[v] for v in videos])
        labels = np.concatenate([report.per_video_labels[v] for v in videos])
        out[bucket_name(index, edges)] = {
            float(t): float(np.mean((scores >= t).astype(np.int8) == labels)) for t in thresholds
        }
    return out


def duration_bucket_improvement(
    report: EvalReport,
    reference: EvalReport,
    bucket_edges: Sequence[float] = DEFAULT_BUCKET_EDGES,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    fps_nominal: float = 30.0,
) -> Dict[str, Dict[float, float]]:
    """Per bucket and threshold: accuracy(report) - accuracy(reference)."""
    if set(report.per_video_scores) != set(reference.per_video_scores):
        raise ArgumentError("reports cover different test videos")
    for video_id, labels in report.per_video_labels.items():
        if not np.array_equal(labels, reference.per_video_labels[video_id]):
            raise ArgumentError(f"reports disagree on the labels of {video_id}")
    ours = duration_bucket_accuracy(report, bucket_edges, thresholds, fps_nominal)
    theirs = duration_bucket_accuracy(reference, bucket_edges, thresholds, fps_nominal)
    return {
        bucket: {t: ours[bucket][t] - theirs[bucket][t] for t in ours[bucket]}
        for bucket in ours
    }


def build_report(
    per_video_scores: Mapping[str, np.ndarray],
    per_video_labels: Mapping[str, np.ndarray],
    direction_predictions: Optional[Mapping[str, np.ndarray]] = None,
    direction_truths: Optional[Mapping[str, str]] = None,
    system: str = "fdpn",
    config_hash: str = "",
    fps_nominal: float = 30.0,
) -> EvalReport:
    """Concatenates every test video's frames and computes the full report."""
    videos = sorted(per_video_scores)
    scores = np.concatenate([np.asarray(per_video_scores[v], dtype=np.float64) for v in videos])
    labels = np.concatenate([np.asarray(per_video_labels[v]) for v in videos])
    report = EvalReport(
        auc_roc=auc_roc(scores, labels),
        auc_pr=auc_pr(scores, labels),
        per_video_scores={v: np.asarray(per_video_scores[v], dtype=np.float64) for v in videos},
        per_video_labels={v: np.asarray(per_video_labels[v], dtype=np.int8) for v in videos},
        system=system,
        config_hash=config_hash,
    )
    report.anomaly_durations = anomaly_durations(report.per_video_labels)
    if direction_predictions and direction_truths:
        ids = sorted(set(direction_predictions) & set(direction_truths))
        if ids:
            preds = [direction_predictions[v] for v in ids]
            report.direction_accuracy = direction_accuracy(preds, [direction_truths[v] for v in ids])
            report.direction_ties = argmax_ties(preds)
            report.direction_predictions = {v: np.asarray(direction_predictions[v]) for v in ids}
            report.direction_truths = {v: direction_truths[v] for v in ids}
    report.duration_buckets = duration_bucket_accuracy(report, fps_nominal=fps_nominal)
    return report


def write_report(report: EvalReport, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = [
        ("system", report.system),
        ("config_hash", report.config_hash),
        ("auc_roc", report.auc_roc),
        ("auc_pr", report.auc_pr),
        ("direction_accuracy", "" if report.direction_accuracy is None else report.direction_accuracy),
        ("direction_ties", report.direction_ties),
    ]
    for bucket, by_threshold in report.duration_buckets.items():
        for t, acc in by_threshold.items():
            summary.append((f"bucket_accuracy[{bucket}@{t:g}]", acc))
    pd.DataFrame(summary, columns=["metric", "value"]).to_csv(out_dir / SUMMARY_NAME, index=False, lineterminator="\n")

    frames = []
    for video_id in sorted(report.per_video_scores):
        scores = report.per_video_scores[video_id]
        table = pd.DataFrame({
            "video_id": video_id,
            "frame": np.arange(len(scores)),
            "score": scores,
            "label": report.per_video_labels[video_id],
        })
        if video_id in report.direction_predictions:
            table["dir_pred"] = DIRECTIONS[int(np.argmax(report.direction_predictions[video_id]))]
            table["dir_true"] = report.direction_truths[video_id]
        frames.append(table)
    pd.concat(frames, ignore_index=True).to_csv(out_dir / SCORES_NAME, index=False, lineterminator="\n")
    logger.info(f"✅ Wrote {report.system} report to {out_dir}")
    return out_dir


def read_report(out_dir) -> EvalReport:
    """Rebuilds the metrics and per-video vectors from a written report."""
    out_dir = Path(out_dir)
    summary = pd.read_csv(out_dir / SUMMARY_NAME, dtype=str, keep_default_na=False)
    values = dict(zip(summary["metric"], summary["value"]))
    scores = pd.read_csv(out_dir / SCORES_NAME, dtype={"video_id": str})
    report = EvalReport(
        auc_roc=float(values["auc_roc"]),
        auc_pr=float(values["auc_pr"]),
        direction_accuracy=float(values["direction_accuracy"]) if values.get("direction_accuracy") else None,
        direction_ties=int(values.get("direction_ties") or 0),
        system=values.get("system", ""),
        config_hash=values.get("config_hash", ""),
    )
    for video_id, group in scores.groupby("video_id", sort=True):
        group = group.sort_values("frame")
        report.per_video_scores[video_id] = group["score"].to_numpy(dtype=np.float64)
        report.per_video_labels[video_id] = group["label"].to_numpy(dtype=np.int8)
    report.anomaly_durations = anomaly_durations(report.per_video_labels)
    return report
