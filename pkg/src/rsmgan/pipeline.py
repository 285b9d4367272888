"""End-to-end experiment wiring: dataset, features, training, detection and evaluation."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import mts as mts_io
from .evaluation import MetricReport, nab_score, point_metrics
from .gan import NetworkConfig, ResidualSet, TrainedModel, reconstruct, train
from .mcm import SampleSet, SeasonalConfig, build_samples, compute_mcm
from .mts import MTS, AnomalyWindow, HolidayCalendar
from .rootcause import RootCauseResult, attribute
from .scoring import DEFAULT_BETA_GRID, METHODS, ScoreSeries, ThresholdSet, fit_thresholds, score_series
from .synth import MODES, InjectionSpec, gen_seasonal_mts, inject_anomalies

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    n: int = 10
    T: int | None = None
    mode: str = "random"
    noise_scale: float = 0.3
    contamination_count: int = 0
    test_anomaly_count: int = 10
    duration_range: tuple[int, int] = (5, 60)
    root_cause_range: tuple[int, int] = (2, 6)
    magnitude: float = 1.5
    shock_shape: str = "constant"
    csv_path: str | None = None
    labels_path: str | None = None
    calendar_path: str | None = None
    label_index_mode: str = "index"
    standardize: bool = False
    max_gap: int = 5
    train_fraction: float = 0.5

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"unknown data source {self.source!r}")
        if self.source == "synthetic" and self.mode not in MODES:
            raise ConfigError(f"unknown synthetic mode {self.mode!r}; expected one of {MODES}")
        if self.source == "csv" and not self.csv_path:
            raise ConfigError("csv source needs csv_path")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class FeatureConfig:
    windows: tuple[int, ...] = (5, 10, 30)
    step_size: int = 5
    inclusive: bool = True
    h: int = 4
    seasonal_patterns: tuple[tuple[int, int], ...] = ()
    smoothing_window: int = 30

    @property
    def seasonal(self) -> SeasonalConfig:
        return SeasonalConfig(self.seasonal_patterns, self.smoothing_window)


@dataclass(frozen=True)
class ScoringConfig:
    method: str = "context_h"
    beta_grid: tuple[float, ...] = DEFAULT_BETA_GRID
    validation_fraction: float = 0.2
    validation_anomalies: int = 2
    validation_copies: int = 5
    combined_weights: tuple[float, float] = (0.5, 0.5)
    root_cause_method: str = "AE"
    event_gap: int = 1
    nab_profile: str = "standard"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown scoring method {self.method!r}")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.validation_anomalies < 0 or self.validation_copies < 1:
            raise ConfigError("validation_anomalies must be >= 0 and validation_copies >= 1")


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = DataConfig()
    features: FeatureConfig = FeatureConfig()
    network: NetworkConfig = NetworkConfig()
    scoring: ScoringConfig = ScoringConfig()
    seed: int = 0

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, network=replace(self.network, seed=seed))

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    @classmethod
    def from_dict(cls, raw: dict | None) -> "RunConfig":
        raw = dict(raw or {})
        sections = {"data": DataConfig, "features": FeatureConfig, "network": NetworkConfig, "scoring": ScoringConfig}
        unknown = set(raw) - set(sections) - {"seed"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for name, klass in sections.items():
            kwargs[name] = _build(klass, raw.get(name) or {}, name)
        seed = int(raw.get("seed", 0))
        cfg = cls(seed=seed, **kwargs)
        if "seed" not in (raw.get("network") or {}):
            cfg = replace(cfg, network=replace(cfg.network, seed=seed))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _build(klass, raw: dict, section: str):
    known = {f.name for f in fields(klass)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return klass(**{k: _tuplify(v) for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


@dataclass
class Dataset:
    mts: MTS
    calendar: HolidayCalendar
    labels: list[AnomalyWindow]
    split_index: int

    @property
    def train_labels(self) -> list[AnomalyWindow]:
        return mts_io.split(self.mts, self.labels, self.split_index / self.mts.T)[2]

    @property
    def test_labels(self) -> list[AnomalyWindow]:
        return [w for w in mts_io.split(self.mts, self.labels, self.split_index / self.mts.T)[3]]

    @property
    def test_length(self) -> int:
        return self.mts.T - self.split_index

    def save(self, out: str | Path) -> None:
        out = Path(out)
        mts_io.save_csv(self.mts, out / "data.csv")
        mts_io.save_labels(self.labels, out / "labels.json")
        mts_io.save_labels(self.train_labels, out / "train_labels.json")
        mts_io.save_labels(self.test_labels, out / "test_labels.json")
        mts_io.save_calendar(self.calendar, out / "calendar.json")
        meta = {"T": self.mts.T, "n": self.mts.n, "split_index": self.split_index}
        (out / "dataset.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, out: str | Path) -> "Dataset":
        out = Path(out)
        mts, _ = mts_io.load_csv(out / "data.csv")
        meta = json.loads((out / "dataset.json").read_text())
        labels = mts_io.load_labels(out / "labels.json", mts)
        calendar = mts_io.load_calendar(out / "calendar.json")
        return cls(mts, calendar, labels, int(meta["split_index"]))


def synthesize(cfg: RunConfig) -> Dataset:
    d = cfg.data
    mts, calendar = gen_seasonal_mts(d.n, d.T, d.mode, seed=cfg.seed, noise_scale=d.noise_scale)
    split_index = int(np.floor(d.train_fraction * mts.T))
    base = InjectionSpec(
        count=0,
        duration_range=d.duration_range,
        root_cause_range=d.root_cause_range,
        magnitude=d.magnitude,
        shape=d.shock_shape,
        reference_fraction=d.train_fraction,
    )
    mts, train_labels = inject_anomalies(
        mts, replace(base, count=d.contamination_count, span=(0, split_index), seed=cfg.seed + 1)
    )
    mts, test_labels = inject_anomalies(
        mts, replace(base, count=d.test_anomaly_count, span=(split_index, mts.T), seed=cfg.seed + 2)
    )
    return Dataset(mts, calendar, train_labels + test_labels, split_index)


def load_dataset(cfg: RunConfig) -> Dataset:
    d = cfg.data
    for p in (d.csv_path, d.labels_path, d.calendar_path):
        if p and not Path(p).exists():
            raise FileNotFoundError(p)
    mts, _ = mts_io.load_csv(d.csv_path, max_gap=d.max_gap, standardize=d.standardize)
    labels = mts_io.load_labels(d.labels_path, mts, d.label_index_mode) if d.labels_path else []
    calendar = mts_io.load_calendar(d.calendar_path) if d.calendar_path else HolidayCalendar.empty(mts.T)
    if len(calendar) != mts.T:
        raise ValueError(f"calendar length {len(calendar)} does not match T={mts.T}")
    return Dataset(mts, calendar, labels, int(np.floor(d.train_fraction * mts.T)))


@dataclass
class Prepared:
    train: SampleSet
    validation: list[tuple[SampleSet, list[AnomalyWindow]]]
    test: SampleSet
    split_index: int
    validation_start: int


def make_samples(cfg: RunConfig, mts: MTS, calendar: HolidayCalendar) -> SampleSet:
    f = cfg.features
    mcm = compute_mcm(mts, f.windows, f.step_size, f.inclusive)
    return build_samples(mcm, f.h, f.seasonal, calendar)


def prepare(cfg: RunConfig, ds: Dataset) -> Prepared:
    """Train on the leading part of the training half, validate on its tail, test on the rest.

    Unless disabled, each of ``validation_copies`` copies of the validation
    span receives its own ``validation_anomalies`` labeled shocks (never the
    training data), so thresholds are tuned on many windows at a realistic
    anomaly density.
    """
    samples = make_samples(cfg, ds.mts, ds.calendar)
    split_index = ds.split_index
    val_start = int(np.floor(split_index * (1 - cfg.scoring.validation_fraction)))
    train_set = samples.select_time(0, val_start)
    test_set = samples.select_time(split_index, ds.mts.T)

    known = [w for w in ds.labels if w.overlaps(val_start, split_index - 1) and w.start_index < split_index]
    s = cfg.scoring
    if s.validation_anomalies == 0:
        validation = [(samples.select_time(val_start, split_index), known)]
    else:
        d = cfg.data
        validation = []
        for k in range(s.validation_copies):
            spec = InjectionSpec(
                count=s.validation_anomalies,
                duration_range=d.duration_range,
                root_cause_range=d.root_cause_range,
                magnitude=d.magnitude,
                shape=d.shock_shape,
                seed=cfg.seed + 3 + k,
                span=(val_start, split_index),
                reference_fraction=d.train_fraction,
            )
            val_mts, injected = inject_anomalies(ds.mts, spec, existing=ds.labels)
            labels = sorted(known + injected, key=lambda w: w.start_index)
            validation.append((make_samples(cfg, val_mts, ds.calendar).select_time(val_start, split_index), labels))
    return Prepared(train_set, validation, test_set, split_index, val_start)


@dataclass
class FitResult:
    model: TrainedModel
    thresholds: dict[str, ThresholdSet]
    train_residuals: ResidualSet
    validation_residuals: list[tuple[ResidualSet, list[AnomalyWindow]]]


def fit(cfg: RunConfig, prep: Prepared) -> FitResult:
    model = train(prep.train, cfg.network)
    train_res = reconstruct(model, prep.train)
    val_res = [(reconstruct(model, samples), labels) for samples, labels in prep.validation]
    thresholds = fit_all(cfg, train_res, val_res)
    return FitResult(model, thresholds, train_res, val_res)


def fit_all(cfg: RunConfig, train_res, validation) -> dict[str, ThresholdSet]:
    s = cfg.scoring
    return {m: fit_thresholds(train_res, validation, s.beta_grid, m, s.combined_weights) for m in METHODS}


def save_thresholds(thresholds: dict[str, ThresholdSet], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps({m: asdict(t) for m, t in thresholds.items()}, indent=2, sort_keys=True) + "\n"
    )


def load_thresholds(path: str | Path) -> dict[str, ThresholdSet]:
    return {m: ThresholdSet(**raw) for m, raw in json.loads(Path(path).read_text()).items()}


@dataclass
class Detection:
    method: str
    series: ScoreSeries
    residuals: ResidualSet
    attribution: list[RootCauseResult]
    point_flags: np.ndarray
    offset: int


def detect(
    cfg: RunConfig,
    model: TrainedModel,
    thresholds: dict[str, ThresholdSet],
    test: SampleSet,
    test_length: int,
    offset: int,
    method: str | None = None,
    residuals: ResidualSet | None = None,
) -> Detection:
    method = method or cfg.scoring.method
    residuals = residuals if residuals is not None else reconstruct(model, test)
    series = score_series(residuals, method, thresholds[method])
    attribution = attribute(
        residuals, series, cfg.scoring.root_cause_method, gap=cfg.scoring.event_gap, offset=offset
    )
    flags = series.point_flags(test_length, offset)
    return Detection(method, series, residuals, attribution, flags, offset)


def evaluate(cfg: RunConfig, flags: np.ndarray, labels, attribution=None) -> MetricReport:
    report = point_metrics(flags, labels, attribution)
    report.nab_score = nab_score(flags, labels, cfg.scoring.nab_profile)
    return report


@dataclass
class Experiment:
    cfg: RunConfig
    dataset: Dataset
    prepared: Prepared
    fitted: FitResult
    test_residuals: ResidualSet
    detections: dict[str, Detection] = field(default_factory=dict)
    reports: dict[str, MetricReport] = field(default_factory=dict)


def run_experiment(cfg: RunConfig, dataset: Dataset | None = None, methods=METHODS) -> Experiment:
    """Synthesize (unless given), train, and score the test half with every requested method."""
    ds = dataset or synthesize(cfg)
    prep = prepare(cfg, ds)
    fitted = fit(cfg, prep)
    test_res = reconstruct(fitted.model, prep.test)
    exp = Experiment(cfg, ds, prep, fitted, test_res)
    for m in methods:
        det = detect(cfg, fitted.model, fitted.thresholds, prep.test, ds.test_length, ds.split_index, m, test_res)
        exp.detections[m] = det
        exp.reports[m] = evaluate(cfg, det.point_flags, ds.test_labels, det.attribution)
    return exp
