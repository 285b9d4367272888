"""Broken-tile anomaly scores and threshold fitting."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .gan.training import ResidualSet
from .mts import AnomalyWindow, label_mask

METHODS = ("latent_b", "context_b", "context_h", "combined")
DEFAULT_BETA_GRID = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0)
PERCENTILE = 99.6


@dataclass(frozen=True)
class ThresholdSet:
    theta_b: float
    theta_h: float
    theta_latent: float
    beta_b: float
    beta_h: float
    eta996_context: float
    eta996_latent: float
    flag_threshold: float
    method: str = "context_h"
    max_train_context: float = 1.0
    max_train_latent: float = 1.0
    combined_weights: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.theta_h > self.theta_b:
            raise ValueError(f"theta_h={self.theta_h} exceeds theta_b={self.theta_b}")
        if min(self.theta_b, self.theta_h, self.theta_latent, self.flag_threshold) < 0:
            raise ValueError("thresholds must be non-negative")
        object.__setattr__(self, "combined_weights", tuple(self.combined_weights))

    @classmethod
    def from_betas(cls, eta_context, eta_latent, beta_b, beta_h, flag_threshold=0.0, **kw) -> "ThresholdSet":
        return cls(
            theta_b=beta_b * eta_context,
            theta_h=beta_h * eta_context,
            theta_latent=beta_b * eta_latent,
            beta_b=beta_b,
            beta_h=beta_h,
            eta996_context=eta_context,
            eta996_latent=eta_latent,
            flag_threshold=flag_threshold,
            **kw,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ThresholdSet":
        return cls(**json.loads(Path(path).read_text()))


def _as_set(records) -> ResidualSet:
    return ResidualSet.from_records(records)


def method_scores(res: ResidualSet, method: str, thresholds: ThresholdSet) -> np.ndarray:
    """Vectorized per-step score for every record in ``res``."""
    if method == "latent_b":
        return (res.latent > thresholds.theta_latent).sum(axis=1).astype(float)
    if method == "context_b":
        return (res.context > thresholds.theta_b).sum(axis=(1, 2)).astype(float)
    if method == "context_h":
        n = res.context.shape[-1]
        per_row = (res.context > thresholds.theta_h).sum(axis=2)
        return np.where(per_row > n // 2, per_row, 0).sum(axis=1).astype(float)
    if method == "combined":
        wc, wl = thresholds.combined_weights
        ctx = method_scores(res, "context_h", thresholds) / (thresholds.max_train_context or 1.0)
        lat = method_scores(res, "latent_b", thresholds) / (thresholds.max_train_latent or 1.0)
        return wc * ctx + wl * lat
    raise ValueError(f"unknown scoring method {method!r}; expected one of {METHODS}")


def score_step(record, method: str, thresholds: ThresholdSet) -> float:
    """Score of a single :class:`ResidualRecord`.

    context_h counts the broken tiles (error > theta_h) in rows holding more
    than floor(n/2) of them; context_b and latent_b count every broken tile.
    """
    return float(method_scores(_as_set([record]), method, thresholds)[0])


@dataclass
class ScoreSeries:
    method: str
    scores: np.ndarray
    flags: np.ndarray
    thresholds: ThresholdSet
    step_index: np.ndarray
    time_index: np.ndarray
    step_size: int

    def point_flags(self, length: int, offset: int = 0) -> np.ndarray:
        """Expand flagged steps to the raw samples they cover, relative to ``offset``."""
        out = np.zeros(length, dtype=bool)
        for end in self.time_index[self.flags] - offset:
            lo, hi = max(end - self.step_size + 1, 0), min(end + 1, length)
            if lo < hi:
                out[lo:hi] = True
        return out

    def events(self, gap: int = 1) -> list[tuple[int, int]]:
        """Runs of flagged steps, merged across at most ``gap`` unflagged steps, as (first, last) positions."""
        pos = np.flatnonzero(self.flags)
        if len(pos) == 0:
            return []
        runs = []
        start = prev = pos[0]
        for p in pos[1:]:
            if self.step_index[p] - self.step_index[prev] > gap + 1:
                runs.append((int(start), int(prev)))
                start = p
            prev = p
        runs.append((int(start), int(prev)))
        return runs

    def to_csv(self, path: str | Path, offset: int = 0) -> None:
        lines = ["step_index,raw_start,raw_end,score,flag,method"]
        for s, t, score, flag in zip(self.step_index, self.time_index, self.scores, self.flags):
            lines.append(f"{s},{t - self.step_size + 1 - offset},{t - offset},{float(score)!r},{int(flag)},{self.method}")
        Path(path).write_text("\n".join(lines) + "\n")


def score_series(records, method: str, thresholds: ThresholdSet) -> ScoreSeries:
    res = _as_set(records)
    if len(res) > 1 and np.any(np.diff(res.step_index) <= 0):
        raise ValueError("records must be ordered by step_index")
    scores = method_scores(res, method, thresholds)
    return ScoreSeries(
        method, scores, scores > thresholds.flag_threshold, thresholds,
        res.step_index, res.time_index, res.step_size,
    )


def _step_counts(res: ResidualSet, truth_mask: np.ndarray, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Raw points covered by each step and how many of them are labeled anomalous."""
    csum = np.concatenate([[0], np.cumsum(truth_mask.astype(np.int64))])
    hi = np.clip(res.time_index - start + 1, 0, len(truth_mask))
    lo = np.clip(hi - res.step_size, 0, len(truth_mask))
    return hi - lo, csum[hi] - csum[lo]


def _best_cutoff(scores: np.ndarray, covered: np.ndarray, positives: np.ndarray) -> tuple[float, float]:
    """Best point-level (F1, cutoff) over flags ``scores > cutoff``.

    Ties resolve to the middle of the tied cutoffs.
    """
    candidates = np.unique(np.concatenate([[0.0], scores]))
    total_truth = positives.sum()
    order = np.argsort(scores)
    sorted_scores = scores[order]
    # flagged set for cutoff c is the suffix with score > c
    suffix_cov = np.concatenate([np.cumsum(covered[order][::-1])[::-1], [0]])
    suffix_pos = np.concatenate([np.cumsum(positives[order][::-1])[::-1], [0]])
    first = np.searchsorted(sorted_scores, candidates, side="right")
    tp = suffix_pos[first]
    pred = suffix_cov[first]
    with np.errstate(invalid="ignore", divide="ignore"):
        f1s = np.where(tp > 0, 2 * tp / (pred + total_truth), 0.0)
    best = f1s.max()
    tied = candidates[np.isclose(f1s, best)]
    return float(best), float(tied[(len(tied) - 1) // 2])


def _validation_part(residuals, labels):
    """Residuals of one validation span with per-step covered and anomalous raw point counts."""
    val = _as_set(residuals)
    start = int(val.time_index.min() - val.step_size + 1)
    length = int(val.time_index.max()) + 1 - start
    truth = label_mask(
        [AnomalyWindow(max(w.start_index - start, 0), w.end_index - start) for w in labels if w.end_index >= start],
        length,
    )
    covered, positives = _step_counts(val, truth, start)
    return val, covered, positives


def fit_thresholds(
    train_residuals,
    validation: tuple | list | None = None,
    beta_grid: Sequence[float] = DEFAULT_BETA_GRID,
    method: str = "context_h",
    combined_weights: tuple[float, float] = (0.5, 0.5),
) -> ThresholdSet:
    """Percentile-scaled thresholds with multipliers chosen by validation F1.

    ``validation`` is ``(residuals, labels)``, or a list of such pairs pooled
    into one F1, with label indices in the same raw time units as the
    residuals' ``time_index``. beta_b is chosen for context_b (or latent_b),
    then beta_h <= beta_b for context_h; each candidate also searches the flag
    cutoff. Grid ties go to the smaller beta.
    """
    if len(beta_grid) == 0:
        raise ValueError("beta grid is empty")
    if method not in METHODS:
        raise ValueError(f"unknown scoring method {method!r}")
    train = _as_set(train_residuals)
    if len(train) == 0:
        raise ValueError("no training residuals")
    eta_c = float(np.percentile(train.context, PERCENTILE))
    eta_l = float(np.percentile(train.latent, PERCENTILE))
    grid = sorted(float(b) for b in beta_grid)

    def calibrated(ts: ThresholdSet) -> ThresholdSet:
        return replace(
            ts,
            max_train_context=float(method_scores(train, "context_h", ts).max()) or 1.0,
            max_train_latent=float(method_scores(train, "latent_b", ts).max()) or 1.0,
        )

    base = dict(method=method, combined_weights=combined_weights)
    if isinstance(validation, tuple):
        validation = [validation]
    pairs = [(res, list(labels)) for res, labels in (validation or []) if len(res)]
    if not any(labels for _, labels in pairs):
        warnings.warn("no labeled validation data; using beta = 1 and flag threshold 0")
        return calibrated(ThresholdSet.from_betas(eta_c, eta_l, 1.0, 1.0, 0.0, **base))

    parts = [_validation_part(res, labels) for res, labels in pairs]
    covered = np.concatenate([c for _, c, _ in parts])
    positives = np.concatenate([p for _, _, p in parts])

    def search(scoring: str, make):
        best = (-1.0, None)
        for ts in make():
            ts = calibrated(ts)
            scores = np.concatenate([method_scores(val, scoring, ts) for val, _, _ in parts])
            f1, cut = _best_cutoff(scores, covered, positives)
            if f1 > best[0]:
                best = (f1, replace(ts, flag_threshold=cut))
        return best[1]

    first = "latent_b" if method == "latent_b" else "context_b"
    best_b = search(first, lambda: (ThresholdSet.from_betas(eta_c, eta_l, b, b, **base) for b in grid))
    if method in ("context_b", "latent_b"):
        return best_b
    beta_b = best_b.beta_b
    return search(
        method,
        lambda: (ThresholdSet.from_betas(eta_c, eta_l, beta_b, b, **base) for b in grid if b <= beta_b),
    )
