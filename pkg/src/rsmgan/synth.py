"""Seasonal synthetic series and labeled shock injection."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np
from pandas.tseries.holiday import USFederalHolidayCalendar

from .mts import MTS, AnomalyWindow, HolidayCalendar

MODES = ("random", "daily", "daily+weekly", "weekly+monthly+holiday")

MINUTES_PER_DAY = 60 * 24
HOLIDAY_START = datetime(2017, 1, 1)


class PlacementError(RuntimeError):
    """Anomaly windows could not be placed without overlap."""


@dataclass(frozen=True)
class WaveSpec:
    """One noisy sinusoid: ``sin((t - t0) / F) + noise_scale * eps`` (cos when ``s_rand == 1``)."""

    s_rand: int = 0
    t0: float = 10.0
    F: float = 60.0
    noise_scale: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.s_rand not in (0, 1):
            raise ValueError("s_rand must be 0 or 1")
        if not 10 <= self.t0 <= 100:
            raise ValueError(f"t0 must lie in [10, 100], got {self.t0}")
        if self.F <= 0:
            raise ValueError("F must be positive")

    @classmethod
    def for_period(cls, period: float, **kwargs) -> "WaveSpec":
        """A wave repeating every ``period`` samples, i.e. angular frequency 2*pi/period."""
        return cls(F=period / (2 * np.pi), **kwargs)


@dataclass(frozen=True)
class InjectionSpec:
    count: int = 10
    duration_range: tuple[int, int] = (5, 60)
    root_cause_range: tuple[int, int] = (2, 6)
    magnitude: float = 1.5
    seed: int = 0
    span: tuple[int, int] | None = None
    reference_fraction: float = 0.5
    shape: str = "constant"
    margin: int = 1

    def __post_init__(self):
        lo, hi = self.duration_range
        rlo, rhi = self.root_cause_range
        if self.count < 0:
            raise ValueError("count must be >= 0")
        if not 1 <= lo <= hi:
            raise ValueError(f"bad duration_range {self.duration_range}")
        if not 1 <= rlo <= rhi:
            raise ValueError(f"bad root_cause_range {self.root_cause_range}")
        if self.shape not in ("constant", "ramp"):
            raise ValueError(f"unknown shock shape {self.shape!r}")


def gen_wave(T: int, spec: WaveSpec) -> np.ndarray:
    if T < 1:
        raise ValueError("T must be >= 1")
    t = np.arange(T, dtype=np.float64)
    phase = (t - spec.t0) / spec.F
    base = np.sin(phase) if spec.s_rand == 0 else np.cos(phase)
    if spec.noise_scale == 0:
        return base
    noise = np.random.default_rng(spec.seed).standard_normal(T)
    return base + spec.noise_scale * noise


def _random_wave(rng: np.random.Generator, T: int, noise_scale: float, **kw) -> np.ndarray:
    spec_kw = dict(
        s_rand=int(rng.integers(0, 2)),
        t0=float(rng.uniform(10, 100)),
        noise_scale=noise_scale,
        seed=int(rng.integers(2**31)),
    )
    if "period" in kw:
        spec = WaveSpec.for_period(kw["period"], **spec_kw)
    else:
        spec = WaveSpec(F=float(rng.uniform(60, 100)), **spec_kw)
    return gen_wave(T, spec)


def holiday_calendar(start: datetime, T: int, interval: timedelta) -> HolidayCalendar:
    """Flag every sample falling on a US federal holiday."""
    stamps = np.array([start + i * interval for i in range(T)], dtype="datetime64[ns]")
    days = stamps.astype("datetime64[D]")
    holidays = USFederalHolidayCalendar().holidays(start=days[0], end=days[-1]).values.astype("datetime64[D]")
    return HolidayCalendar(np.isin(days, holidays))


def gen_seasonal_mts(
    n: int,
    T: int | None = None,
    mode: str = "random",
    seed: int = 0,
    noise_scale: float = 0.3,
    holiday_shift: float = 2.0,
) -> tuple[MTS, HolidayCalendar]:
    """Sum of a random-period wave and the seasonal waves selected by ``mode``.

    The first three modes sample every minute; ``weekly+monthly+holiday``
    samples hourly over three years starting 2017-01-01 and shifts every
    series on US holidays by ``holiday_shift`` times the wave amplitude.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    rng = np.random.default_rng(seed)

    if mode == "weekly+monthly+holiday":
        interval = timedelta(hours=1)
        per_day = 24
        T = 3 * 365 * per_day if T is None else T
        periods = [7 * per_day, 365 * per_day / 12]
        start = HOLIDAY_START
    else:
        interval = timedelta(minutes=1)
        per_day = MINUTES_PER_DAY
        T = 2 * 28 * per_day if T is None else T
        periods = {"random": [], "daily": [per_day], "daily+weekly": [per_day, 7 * per_day]}[mode]
        start = datetime(2020, 1, 1)
    if T < 1:
        raise ValueError("T must be >= 1")

    values = np.empty((n, T))
    for i in range(n):
        x = _random_wave(rng, T, noise_scale)
        for p in periods:
            x += _random_wave(rng, T, noise_scale, period=p)
        values[i] = x

    if mode == "weekly+monthly+holiday":
        calendar = holiday_calendar(start, T, interval)
        signs = rng.choice([-1.0, 1.0], size=n)
        values[:, calendar.flagged] += holiday_shift * signs[:, None]
    else:
        calendar = HolidayCalendar.empty(T)
    return MTS(values, start, interval), calendar


def _place_windows(rng, lo_t, hi_t, spec, taken, count):
    windows = []
    occupied = list(taken)
    attempts = 0
    while len(windows) < count:
        attempts += 1
        if attempts > 1000 * max(count, 1):
            raise PlacementError(
                f"placed only {len(windows)} of {count} non-overlapping windows in [{lo_t}, {hi_t}); "
                "lower the anomaly count"
            )
        dur = int(rng.integers(spec.duration_range[0], spec.duration_range[1] + 1))
        if hi_t - lo_t < dur:
            continue
        start = int(rng.integers(lo_t, hi_t - dur + 1))
        end = start + dur - 1
        m = spec.margin
        if any(start <= e + m and s <= end + m for s, e in occupied):
            continue
        occupied.append((start, end))
        windows.append((start, end))
    return sorted(windows)


def inject_anomalies(
    mts: MTS, spec: InjectionSpec, existing: list[AnomalyWindow] = ()
) -> tuple[MTS, list[AnomalyWindow]]:
    """Add constant (or ramped) shocks to randomly chosen series.

    Windows avoid each other and any ``existing`` labels. Shock size is
    ``magnitude`` times each series' standard deviation over the leading
    ``reference_fraction`` of the data.
    """
    if spec.count == 0:
        return mts, []
    if mts.T <= 60:
        raise ValueError("need T > 60 to inject anomalies")
    rng = np.random.default_rng(spec.seed)
    lo_t, hi_t = spec.span if spec.span is not None else (0, mts.T)
    ref_end = max(2, int(spec.reference_fraction * mts.T))
    scale = mts.values[:, :ref_end].std(axis=1)
    scale[scale == 0] = 1.0

    taken = [(w.start_index, w.end_index) for w in existing]
    windows = _place_windows(rng, lo_t, hi_t, spec, taken, spec.count)
    values = mts.values.copy()
    labels = []
    kmin = min(spec.root_cause_range[0], mts.n)
    kmax = min(spec.root_cause_range[1], mts.n)
    for start, end in windows:
        k = int(rng.integers(kmin, kmax + 1))
        causes = np.sort(rng.choice(mts.n, size=k, replace=False))
        direction = float(rng.choice([-1.0, 1.0]))
        length = end - start + 1
        profile = np.ones(length) if spec.shape == "constant" else np.linspace(1.0 / length, 1.0, length)
        for i in causes:
            values[i, start : end + 1] += direction * spec.magnitude * scale[i] * profile
        labels.append(AnomalyWindow(start, end, frozenset(int(i) for i in causes)))
    return mts.with_values(values), labels


def table3_spec(level: str, seed: int = 0) -> dict[str, int]:
    """Train/test anomaly counts for the contamination levels of the reference experiments."""
    counts = {"none": (0, 10), "mild": (5, 10), "medium": (10, 10), "severe": (15, 15)}
    if level not in counts:
        raise ValueError(f"unknown contamination level {level!r}")
    train, test = counts[level]
    return {"contamination_count": train, "test_anomaly_count": test, "seed": seed}
