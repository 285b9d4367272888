"""Multivariate time series container, anomaly labels, holiday calendars and CSV ingestion."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd


class SchemaError(ValueError):
    """Required columns are missing from an input file."""


class FormatError(ValueError):
    """Timestamps are not uniform enough to repair."""


class ParseError(ValueError):
    """A cell could not be parsed as a number."""


@dataclass(frozen=True)
class MTS:
    """An n x T matrix of series sampled on a uniform grid."""

    values: np.ndarray
    start_time: datetime = datetime(2000, 1, 1)
    sample_interval: timedelta = timedelta(minutes=1)
    series_names: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D (n x T), got shape {values.shape}")
        n, T = values.shape
        if n < 2 or T < 1:
            raise ValueError(f"need n >= 2 and T >= 1, got n={n}, T={T}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain NaN or Inf")
        if self.sample_interval <= timedelta(0):
            raise ValueError("sample_interval must be positive")
        names = tuple(self.series_names) or tuple(f"x{i}" for i in range(n))
        if len(names) != n:
            raise ValueError(f"{len(names)} series names for {n} series")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "series_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_time, periods=self.T, freq=self.sample_interval)

    def with_values(self, values: np.ndarray) -> "MTS":
        return MTS(values, self.start_time, self.sample_interval, self.series_names)

    def slice(self, start: int, stop: int) -> "MTS":
        return MTS(
            self.values[:, start:stop],
            self.start_time + start * self.sample_interval,
            self.sample_interval,
            self.series_names,
        )

    def standardized(self) -> "MTS":
        mu = self.values.mean(axis=1, keepdims=True)
        sd = self.values.std(axis=1, keepdims=True)
        sd[sd == 0] = 1.0
        return self.with_values((self.values - mu) / sd)


@dataclass(frozen=True)
class AnomalyWindow:
    """Inclusive [start_index, end_index] span with optional root-cause series."""

    start_index: int
    end_index: int
    root_causes: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if not 0 <= self.start_index <= self.end_index:
            raise ValueError(f"invalid window [{self.start_index}, {self.end_index}]")
        object.__setattr__(self, "root_causes", frozenset(int(i) for i in self.root_causes))

    def __len__(self):
        return self.end_index - self.start_index + 1

    def check(self, T: int, n: int | None = None) -> None:
        if self.end_index >= T:
            raise ValueError(f"window end {self.end_index} outside series of length {T}")
        if n is not None and any(not 0 <= i < n for i in self.root_causes):
            raise ValueError(f"root causes {sorted(self.root_causes)} outside 0..{n - 1}")

    def overlaps(self, start: int, end: int) -> bool:
        return self.start_index <= end and start <= self.end_index

    def to_dict(self) -> dict:
        return {"start": self.start_index, "end": self.end_index, "root_causes": sorted(self.root_causes)}


@dataclass(frozen=True)
class HolidayCalendar:
    flagged: np.ndarray

    def __post_init__(self):
        flagged = np.array(self.flagged, dtype=bool)
        if flagged.ndim != 1:
            raise ValueError("calendar must be a 1-D boolean vector")
        flagged.setflags(write=False)
        object.__setattr__(self, "flagged", flagged)

    def __len__(self):
        return len(self.flagged)

    @classmethod
    def empty(cls, T: int) -> "HolidayCalendar":
        return cls(np.zeros(T, dtype=bool))

    def slice(self, start: int, stop: int) -> "HolidayCalendar":
        return HolidayCalendar(self.flagged[start:stop])


def label_mask(labels: Iterable[AnomalyWindow], T: int) -> np.ndarray:
    """Boolean vector marking every point covered by a label window."""
    mask = np.zeros(T, dtype=bool)
    for w in labels:
        mask[w.start_index : min(w.end_index, T - 1) + 1] = True
    return mask


def split(
    mts: MTS, labels: Sequence[AnomalyWindow] = (), fraction: float = 0.5
) -> tuple[MTS, MTS, list[AnomalyWindow], list[AnomalyWindow]]:
    """Split at floor(fraction * T); windows crossing the cut go to both halves."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    cut = int(np.floor(fraction * mts.T))
    if cut < 1 or cut >= mts.T:
        raise ValueError(f"split at {cut} leaves an empty half (T={mts.T})")
    train_labels, test_labels = [], []
    for w in labels:
        if w.start_index < cut:
            train_labels.append(AnomalyWindow(w.start_index, min(w.end_index, cut - 1), w.root_causes))
        if w.end_index >= cut:
            test_labels.append(
                AnomalyWindow(max(w.start_index, cut) - cut, w.end_index - cut, w.root_causes)
            )
    return mts.slice(0, cut), mts.slice(cut, mts.T), train_labels, test_labels


def load_csv(
    path: str | Path,
    schema: dict | None = None,
    max_gap: int = 5,
    standardize: bool = False,
) -> tuple[MTS, list[str]]:
    """Read a timestamp column plus numeric series columns.

    ``schema`` may give ``timestamp`` (column name) and ``series`` (list of
    column names); by default the first column holds timestamps and the rest
    are series. Missing rows up to ``max_gap`` samples long are forward-filled
    and each fill is reported in the returned warning list.
    """
    schema = schema or {}
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    ts_col = schema.get("timestamp", frame.columns[0])
    series_cols = list(schema.get("series", [c for c in frame.columns if c != ts_col]))
    missing = [c for c in [ts_col, *series_cols] if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing columns: {missing}")
    if len(series_cols) < 2:
        raise SchemaError("need at least two series columns")

    data = np.empty((len(frame), len(series_cols)))
    for j, col in enumerate(series_cols):
        parsed = pd.to_numeric(frame[col], errors="coerce")
        bad = np.flatnonzero(parsed.isna().to_numpy() | ~np.isfinite(parsed.to_numpy()))
        if len(bad):
            row = int(bad[0])
            raise ParseError(f"non-numeric value {frame[col].iloc[row]!r} at row {row}, column {col!r}")
        # pandas' fast parser can be off by an ulp; numpy's conversion round-trips
        data[:, j] = frame[col].to_numpy().astype(np.float64)

    try:
        stamps = pd.to_datetime(frame[ts_col])
    except (ValueError, TypeError) as exc:
        raise ParseError(f"unparseable timestamp in column {ts_col!r}: {exc}") from exc
    if len(stamps) < 2:
        raise FormatError("need at least two rows to infer the sampling interval")
    diffs = stamps.diff().iloc[1:]
    if (diffs <= pd.Timedelta(0)).any():
        raise FormatError("timestamps are not strictly increasing")
    interval = diffs.min()

    offsets = (stamps - stamps.iloc[0]) / interval
    if not np.allclose(offsets, np.round(offsets)):
        raise FormatError("timestamps are not on a uniform grid")
    offsets = np.round(offsets.to_numpy()).astype(int)
    T = offsets[-1] + 1
    values = np.empty((len(series_cols), T))
    filled = np.zeros(T, dtype=bool)
    filled[offsets] = True
    notes = []
    prev = None
    row = 0
    for t in range(T):
        if filled[t]:
            prev = data[row]
            row += 1
        values[:, t] = prev
    gap_starts = np.flatnonzero(np.diff(offsets) > 1)
    for g in gap_starts:
        length = offsets[g + 1] - offsets[g] - 1
        if length > max_gap:
            raise FormatError(f"gap of {length} samples after row {g} exceeds max_gap={max_gap}")
        notes.append(f"forward-filled {length} missing sample(s) at index {offsets[g] + 1}")
    for msg in notes:
        warnings.warn(msg)

    mts = MTS(values, stamps.iloc[0].to_pydatetime(), interval.to_pytimedelta(), tuple(series_cols))
    if standardize:
        mts = mts.standardized()
    return mts, notes


def save_csv(mts: MTS, path: str | Path) -> None:
    frame = pd.DataFrame(mts.values.T, columns=list(mts.series_names))
    frame.insert(0, "timestamp", mts.timestamps().strftime("%Y-%m-%dT%H:%M:%S"))
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def save_labels(labels: Sequence[AnomalyWindow], path: str | Path) -> None:
    Path(path).write_text(json.dumps([w.to_dict() for w in labels], indent=2) + "\n")


def load_labels(path: str | Path, mts: MTS | None = None, index_mode: str = "index") -> list[AnomalyWindow]:
    """Read a JSON array of {start, end, root_causes}.

    With ``index_mode="timestamp"`` start/end are ISO timestamps resolved
    against ``mts``.
    """
    raw = json.loads(Path(path).read_text())
    out = []
    for item in raw:
        start, end = item["start"], item["end"]
        if index_mode == "timestamp":
            if mts is None:
                raise ValueError("timestamp labels need the owning MTS")
            t0 = pd.Timestamp(mts.start_time)
            step = pd.Timedelta(mts.sample_interval)
            start = int(round((pd.Timestamp(start) - t0) / step))
            end = int(round((pd.Timestamp(end) - t0) / step))
        window = AnomalyWindow(int(start), int(end), frozenset(item.get("root_causes", ())))
        if mts is not None:
            window.check(mts.T, mts.n)
        out.append(window)
    return out


def save_calendar(calendar: HolidayCalendar, path: str | Path) -> None:
    idx = np.flatnonzero(calendar.flagged).tolist()
    Path(path).write_text(json.dumps({"length": len(calendar), "flagged": idx}) + "\n")


def load_calendar(path: str | Path) -> HolidayCalendar:
    raw = json.loads(Path(path).read_text())
    flagged = np.zeros(raw["length"], dtype=bool)
    flagged[raw["flagged"]] = True
    return HolidayCalendar(flagged)
