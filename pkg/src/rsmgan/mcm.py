"""Multi-channel correlation matrices and stacked model samples.

Each step of an MTS is summarized by ``c`` matrices of windowed pairwise inner
products, one per window length. Model samples stack the current step with
its immediate history and smoothed seasonal look-backs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .mts import MTS, HolidayCalendar

CACHE_MAGIC = b"MCMT"
CACHE_VERSION = 1


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class MCMTensor:
    """``data[m, k]`` is the n x n matrix for step m and window ``windows[k]``.

    Step m covers raw samples ``end_index[m] - step_size + 1 .. end_index[m]``.
    """

    data: np.ndarray
    step_size: int
    windows: tuple[int, ...]
    end_index: np.ndarray
    inclusive: bool = True

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def n(self) -> int:
        return self.data.shape[2]

    def terms(self, w: int) -> int:
        return w + 1 if self.inclusive else w

    def save(self, path: str | Path) -> None:
        """Binary layout (little endian).

        magic ``MCMT``, uint8 version, uint8 inclusive, uint32 M, c, n,
        step_size, uint64 first end index, c x uint32 windows, then the
        row-major float64 payload of shape (M, c, n, n).
        """
        header = CACHE_MAGIC + struct.pack(
            "<BBIIIIQ",
            CACHE_VERSION,
            int(self.inclusive),
            self.M,
            self.c,
            self.n,
            self.step_size,
            int(self.end_index[0]) if self.M else 0,
        )
        header += struct.pack(f"<{self.c}I", *self.windows)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "MCMTensor":
        raw = Path(path).read_bytes()
        if raw[:4] != CACHE_MAGIC:
            raise ValueError("not an MCM cache file")
        fixed = struct.calcsize("<BBIIIIQ")
        version, inclusive, M, c, n, s_s, first = struct.unpack("<BBIIIIQ", raw[4 : 4 + fixed])
        if version != CACHE_VERSION:
            raise ValueError(f"unsupported MCM cache version {version}")
        off = 4 + fixed
        windows = struct.unpack(f"<{c}I", raw[off : off + 4 * c])
        off += 4 * c
        data = np.frombuffer(raw[off:], dtype="<f8").reshape(M, c, n, n).copy()
        end_index = first + s_s * np.arange(M)
        return cls(data, s_s, tuple(windows), end_index, bool(inclusive))


def compute_mcm(
    mts: MTS | np.ndarray,
    windows: Sequence[int] = (5, 10, 30),
    step_size: int = 5,
    inclusive: bool = True,
) -> MCMTensor:
    """Windowed inner-product matrices every ``step_size`` samples.

    Entry (i, j) for window w at a step ending on sample t is
    ``sum(x_i[t - d] * x_j[t - d] for d in 0..w) / w``; with
    ``inclusive=False`` the sum stops at d = w - 1. Steps whose longest
    window would reach before the first sample are dropped.
    """
    X = mts.values if isinstance(mts, MTS) else np.asarray(mts, dtype=np.float64)
    windows = tuple(int(w) for w in windows)
    if step_size < 1 or not windows or min(windows) < 1:
        raise ValueError("step_size and windows must be positive")
    n, T = X.shape
    span = max(windows) + (1 if inclusive else 0)
    if T < span:
        raise InsufficientDataError(f"T={T} is shorter than the longest window ({span} samples)")

    ends = np.arange(1, T // step_size + 1) * step_size - 1
    ends = ends[ends >= span - 1]
    if len(ends) == 0:
        raise InsufficientDataError(f"no step of size {step_size} has a full window in T={T}")

    data = np.empty((len(ends), len(windows), n, n))
    for k, w in enumerate(windows):
        terms = w + 1 if inclusive else w
        # view[:, e - terms + 1] holds samples e - terms + 1 .. e
        view = sliding_window_view(X, terms, axis=1)[:, ends - terms + 1]
        data[:, k] = np.einsum("imd,jmd->mij", view, view) / w
    return MCMTensor(data, step_size, windows, ends, inclusive)


@dataclass(frozen=True)
class SeasonalConfig:
    """Seasonal look-backs: ``patterns`` holds (period in samples, count) pairs."""

    patterns: tuple[tuple[int, int], ...] = ()
    smoothing_window: int = 30

    def __post_init__(self):
        for period, m in self.patterns:
            if period <= 0 or m < 0:
                raise ValueError(f"bad seasonal pattern ({period}, {m})")
        if self.smoothing_window < 0:
            raise ValueError("smoothing_window must be >= 0")

    @property
    def total(self) -> int:
        return sum(m for _, m in self.patterns)


@dataclass(frozen=True)
class ModelSample:
    current: np.ndarray
    history: np.ndarray
    seasonal: np.ndarray
    holiday_bits: np.ndarray
    step_index: int
    time_index: int


@dataclass
class SampleSet:
    """Stacked samples held as arrays; indexing yields :class:`ModelSample`.

    ``stacks[s]`` is ordered oldest first and ends with the current step.
    ``kinds`` labels each stack position as ``"seasonal"``, ``"history"`` or
    ``"current"``; ``bits`` aligns with the stack (1 = keep, 0 = holiday).
    """

    stacks: np.ndarray
    bits: np.ndarray
    step_index: np.ndarray
    time_index: np.ndarray
    kinds: tuple[str, ...]
    step_size: int
    h: int
    n_seasonal: int
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.step_index)

    def __getitem__(self, i):
        if isinstance(i, (slice, np.ndarray, list)):
            return self.subset(i)
        kinds = np.array(self.kinds)
        return ModelSample(
            current=self.stacks[i, -1],
            history=self.stacks[i, kinds == "history"],
            seasonal=self.stacks[i, kinds == "seasonal"],
            holiday_bits=self.bits[i],
            step_index=int(self.step_index[i]),
            time_index=int(self.time_index[i]),
        )

    def subset(self, idx) -> "SampleSet":
        return SampleSet(
            self.stacks[idx],
            self.bits[idx],
            self.step_index[idx],
            self.time_index[idx],
            self.kinds,
            self.step_size,
            self.h,
            self.n_seasonal,
            dict(self.extra),
        )

    def select_time(self, start: int, stop: int) -> "SampleSet":
        """Samples whose step ends inside raw samples [start, stop)."""
        keep = (self.time_index >= start) & (self.time_index < stop)
        return self.subset(np.flatnonzero(keep))

    @property
    def signature(self) -> tuple[int, int, int, int]:
        c, n = self.stacks.shape[2], self.stacks.shape[3]
        return (n, c, self.h, self.n_seasonal)


def step_flags(mcm: MCMTensor, calendar: HolidayCalendar | None) -> np.ndarray:
    """True for steps whose longest window touches a flagged raw sample."""
    if calendar is None or not calendar.flagged.any():
        return np.zeros(mcm.M, dtype=bool)
    span = mcm.terms(max(mcm.windows))
    csum = np.concatenate([[0], np.cumsum(calendar.flagged.astype(np.int64))])
    hi = mcm.end_index + 1
    lo = np.maximum(hi - span, 0)
    return (csum[hi] - csum[lo]) > 0


def build_samples(
    mcm: MCMTensor,
    h: int = 4,
    seasonal: SeasonalConfig = SeasonalConfig(),
    calendar: HolidayCalendar | None = None,
) -> SampleSet:
    """Stack each step with ``h`` predecessors and smoothed seasonal steps.

    Seasonal entry j of a pattern with period P is the mean of the steps
    within ``smoothing_window / 2`` samples of ``t - j * P``, truncated at the
    start of the sequence. Steps lacking full context are skipped.
    """
    if h < 0:
        raise ValueError("h must be >= 0")
    s_s = mcm.step_size
    half = seasonal.smoothing_window // (2 * s_s)
    lags = []  # (lag in steps, kind)
    for period, m in seasonal.patterns:
        if period <= s_s:
            raise ValueError(f"seasonal period {period} must exceed the step size {s_s}")
        p_steps = int(round(period / s_s))
        lags += [(j * p_steps, "seasonal") for j in range(1, m + 1)]
    lags += [(k, "history") for k in range(1, h + 1)]
    lags.sort(key=lambda item: -item[0])
    lags.append((0, "current"))

    deepest = max(lag for lag, _ in lags)
    t_idx = np.arange(deepest, mcm.M)
    S, N = len(t_idx), len(lags)
    stacks = np.empty((S, N, mcm.c, mcm.n, mcm.n))
    flags = step_flags(mcm, calendar)
    bits = np.ones((S, N), dtype=bool)

    if S:
        for pos, (lag, kind) in enumerate(lags):
            src = t_idx - lag
            if kind == "seasonal" and half > 0:
                total = np.zeros((S,) + mcm.data.shape[1:])
                count = np.zeros(S)
                hit = np.zeros(S, dtype=bool)
                for d in range(-half, half + 1):
                    k = src + d
                    ok = (k >= 0) & (k < mcm.M)
                    total[ok] += mcm.data[k[ok]]
                    count += ok
                    hit[ok] |= flags[k[ok]]
                stacks[:, pos] = total / count[:, None, None, None]
            else:
                stacks[:, pos] = mcm.data[src]
                hit = flags[src]
            if kind != "current":
                bits[:, pos] = ~hit
    kinds = tuple(kind for _, kind in lags)
    return SampleSet(stacks, bits, t_idx, mcm.end_index[t_idx], kinds, s_s, h, seasonal.total)

