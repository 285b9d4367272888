"""Per-series attribution of detected events with elbow-based selection."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .gan.training import ResidualSet
from .scoring import ScoreSeries, ThresholdSet

METHODS = ("NB", "WB", "AE")


@dataclass(frozen=True)
class RootCauseResult:
    event: tuple[int, int]
    raw_range: tuple[int, int]
    per_series_scores: np.ndarray
    selected: tuple[int, ...]
    method: str
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "start": self.raw_range[0],
            "end": self.raw_range[1],
            "start_step": self.event[0],
            "end_step": self.event[1],
            "method": self.method,
            "scores": [float(v) for v in self.per_series_scores],
            "selected": list(self.selected),
            "degenerate": self.degenerate,
        }


class Elbow(NamedTuple):
    selected: list[int]
    rank: int
    degenerate: bool


def series_scores(records, method: str = "AE", theta: float = 0.0) -> np.ndarray:
    """Row-wise contextual residual statistics, averaged over the event's steps.

    NB counts tiles above ``theta``, WB sums their errors, AE sums all errors.
    """
    res = ResidualSet.from_records(records)
    if len(res) == 0:
        raise ValueError("empty event window")
    err = np.abs(res.context)
    if method == "NB":
        per_step = (err > theta).sum(axis=2)
    elif method == "WB":
        per_step = np.where(err > theta, err, 0.0).sum(axis=2)
    elif method == "AE":
        per_step = err.sum(axis=2)
    else:
        raise ValueError(f"unknown root-cause method {method!r}; expected one of {METHODS}")
    return per_step.mean(axis=0).astype(float)


def elbow_select(scores: Sequence[float]) -> Elbow:
    """Series scoring strictly above the elbow of the descending score curve.

    Ranks and scores are both rescaled to [0, 1]; the elbow is the point
    farthest from the chord joining the first and last sorted points. An
    empty selection falls back to the top series; equal scores are flagged
    degenerate.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or len(s) < 2:
        raise ValueError("need at least two scores")
    order = np.argsort(-s, kind="stable")
    ranked = s[order]
    spread = ranked[0] - ranked[-1]
    if spread <= 0:
        return Elbow([int(order[0])], 0, True)
    x = np.arange(len(s)) / (len(s) - 1)
    y = (ranked - ranked[-1]) / spread
    # chord from (0, 1) to (1, 0)
    dist = np.abs(x + y - 1) / np.sqrt(2)
    rank = int(np.argmax(dist))
    selected = [int(i) for i in order[ranked > ranked[rank]]]
    if not selected:
        selected = [int(order[0])]
    return Elbow(selected, rank, False)


def attribute(
    residuals: ResidualSet,
    series: ScoreSeries,
    method: str = "AE",
    thresholds: ThresholdSet | None = None,
    gap: int = 1,
    offset: int = 0,
) -> list[RootCauseResult]:
    """Root causes for every merged run of flagged steps in ``series``."""
    thresholds = thresholds or series.thresholds
    theta = thresholds.theta_h if series.method == "context_h" else thresholds.theta_b
    out = []
    for first, last in series.events(gap):
        window = residuals.subset(slice(first, last + 1))
        scores = series_scores(window, method, theta)
        elbow = elbow_select(scores)
        raw = (
            int(series.time_index[first] - series.step_size + 1 - offset),
            int(series.time_index[last] - offset),
        )
        out.append(
            RootCauseResult(
                (int(series.step_index[first]), int(series.step_index[last])),
                raw, scores, tuple(elbow.selected), method, elbow.degenerate,
            )
        )
    return out


def save_root_causes(results: Sequence[RootCauseResult], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in results], indent=2) + "\n")


def load_root_causes(path: str | Path) -> list[RootCauseResult]:
    out = []
    for item in json.loads(Path(path).read_text()):
        out.append(
            RootCauseResult(
                (item["start_step"], item["end_step"]),
                (item["start"], item["end"]),
                np.array(item["scores"]),
                tuple(item["selected"]),
                item["method"],
                item.get("degenerate", False),
            )
        )
    return out
