"""Point-level detection metrics, NAB scoring and root-cause recall."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .mts import AnomalyWindow, label_mask

TABLE_COLUMNS = ("precision", "recall", "f1", "fpr", "nab_score", "root_cause_recall")


@dataclass(frozen=True)
class NABProfile:
    tp: float = 1.0
    fp: float = 1.0
    fn: float = 1.0


PROFILES = {
    "standard": NABProfile(1.0, 1.0, 1.0),
    "nab_standard": NABProfile(1.0, 0.11, 1.0),
    "reward_low_fp": NABProfile(1.0, 0.22, 1.0),
    "reward_low_fn": NABProfile(1.0, 0.11, 2.0),
}


@dataclass
class MetricReport:
    precision: float
    recall: float
    f1: float
    fpr: float
    tp: int
    fp: int
    fn: int
    tn: int
    nab_score: float | None = None
    root_cause_recall: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls(**json.loads(Path(path).read_text()))


def point_metrics(
    flags: np.ndarray,
    labels: Sequence[AnomalyWindow],
    attribution=None,
    length: int | None = None,
) -> MetricReport:
    """Confusion-matrix metrics where a point is positive iff it lies inside a label window.

    Undefined ratios are reported as 0 with an explanatory note.
    """
    flags = np.asarray(flags, dtype=bool)
    if length is not None and len(flags) != length:
        raise ValueError(f"flags have length {len(flags)}, expected {length}")
    for w in labels:
        if w.end_index >= len(flags):
            raise ValueError(f"label window [{w.start_index}, {w.end_index}] exceeds flag length {len(flags)}")
    truth = label_mask(labels, len(flags))
    tp = int(np.sum(flags & truth))
    fp = int(np.sum(flags & ~truth))
    fn = int(np.sum(~flags & truth))
    tn = int(np.sum(~flags & ~truth))
    notes = []
    if tp + fp == 0:
        precision = 0.0
        notes.append("precision undefined (no detections); reported as 0")
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall = 0.0
        notes.append("recall undefined (no labeled anomalies); reported as 0")
    else:
        recall = tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    fpr = 0.0 if fp + tn == 0 else fp / (fp + tn)
    report = MetricReport(precision, recall, f1, fpr, tp, fp, fn, tn, notes=notes)
    if attribution is not None:
        report.root_cause_recall = root_cause_recall(attribution, labels)
    return report


def scaled_sigmoid(y: np.ndarray | float) -> np.ndarray | float:
    """2 / (1 + exp(5y)) - 1, clamped to -1 beyond y = 3."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore"):
        val = 2.0 / (1.0 + np.exp(5.0 * y)) - 1.0
    return np.where(y > 3.0, -1.0, val)


TP_PEAK = float(scaled_sigmoid(-1.0))


@dataclass
class NABBreakdown:
    raw: float
    normalizer: float
    window_scores: list[float]
    fp_scores: list[float]

    @property
    def score(self) -> float:
        return self.raw / self.normalizer


def nab_breakdown(
    flags: np.ndarray, labels: Sequence[AnomalyWindow], profile: NABProfile | str = "standard"
) -> NABBreakdown:
    """Per-window and false-positive contributions to the NAB score.

    The earliest detection in a window scores ``tp * sigmoid(y) / sigmoid(-1)``
    with y = -(end - i + 1) / width, so detection at the window start earns
    exactly 1. A detection outside every window scores ``fp * sigmoid(y)``
    with y its distance past the preceding window end in window widths, or
    ``-fp`` when no window precedes it. A missed window scores ``-fn``.
    """
    if isinstance(profile, str):
        profile = PROFILES[profile]
    flags = np.asarray(flags, dtype=bool)
    windows = sorted(labels, key=lambda w: w.start_index)
    det = np.flatnonzero(flags)
    inside = np.zeros(len(flags), dtype=bool)
    window_scores = []
    for w in windows:
        inside[w.start_index : w.end_index + 1] = True
        hits = det[(det >= w.start_index) & (det <= w.end_index)]
        if len(hits):
            width = w.end_index - w.start_index + 1
            y = -(w.end_index - hits[0] + 1) / width
            window_scores.append(profile.tp * float(scaled_sigmoid(y)) / TP_PEAK)
        else:
            window_scores.append(-profile.fn)

    ends = np.array([w.end_index for w in windows])
    widths = np.array([w.end_index - w.start_index + 1 for w in windows])
    fp_det = det[~inside[det]] if len(det) else det
    fp_scores = []
    if len(fp_det):
        prev = np.searchsorted(ends, fp_det, side="left") - 1
        has_prev = prev >= 0
        vals = np.full(len(fp_det), -1.0)
        if has_prev.any():
            p = prev[has_prev]
            vals[has_prev] = scaled_sigmoid((fp_det[has_prev] - ends[p]) / widths[p])
        fp_scores = (profile.fp * vals).tolist()
    raw = float(sum(window_scores) + sum(fp_scores))
    normalizer = profile.tp * max(len(windows), 1)
    return NABBreakdown(raw, normalizer, window_scores, fp_scores)


def nab_score(flags: np.ndarray, labels: Sequence[AnomalyWindow], profile: NABProfile | str = "standard") -> float:
    """Raw NAB total divided by the perfect-detector total."""
    return nab_breakdown(flags, labels, profile).score


def root_cause_recall(attribution, labels: Sequence[AnomalyWindow]) -> float | None:
    """Mean |selected & truth| / |truth| over detected events that overlap a labeled window."""
    recalls = []
    for result in attribution:
        lo, hi = result.raw_range
        best, overlap = None, 0
        for w in labels:
            ov = min(hi, w.end_index) - max(lo, w.start_index) + 1
            if ov > overlap and w.root_causes:
                best, overlap = w, ov
        if best is not None:
            recalls.append(len(set(result.selected) & best.root_causes) / len(best.root_causes))
    return float(np.mean(recalls)) if recalls else None


def write_table(rows: Sequence[dict], path: str | Path, key_columns: Sequence[str] = ("setting",)) -> None:
    """CSV with the given key columns followed by the standard metric columns."""
    cols = list(key_columns) + list(TABLE_COLUMNS)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in cols})


def mean_reports(reports: Sequence[MetricReport]) -> dict:
    out = {}
    for col in TABLE_COLUMNS:
        vals = [getattr(r, col) for r in reports if getattr(r, col) is not None]
        out[col] = float(np.mean(vals)) if vals else None
    return out
