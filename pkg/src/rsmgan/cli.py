"""Command-line entry point: synth, train, detect, evaluate and report.

A run directory collects the artifacts of one configuration and seed. Each
command reads what earlier commands wrote there and refuses to overwrite
existing files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .evaluation import MetricReport, mean_reports, write_table
from .gan import ConfigurationError, TrainedModel, TrainingDivergedError, write_loss_csv
from .mcm import InsufficientDataError
from .mts import FormatError, ParseError, SchemaError
from .pipeline import (
    ConfigError,
    Dataset,
    RunConfig,
    detect,
    evaluate,
    fit,
    load_dataset,
    load_thresholds,
    make_samples,
    prepare,
    save_thresholds,
    synthesize,
)
from .rootcause import load_root_causes, save_root_causes

log = logging.getLogger("rsmgan")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fresh(path: Path) -> Path:
    if path.exists():
        raise UsageError(f"{path} already exists; outputs are write-once, choose a new --out")
    return path


def _atomic(path: Path, write) -> None:
    """Call ``write(tmp_path)`` and move the result into place."""
    _fresh(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        write(Path(tmp))
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def resolve_config(args, run_dir: Path) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
    elif (run_dir / "config.yaml").exists():
        cfg = RunConfig.load(run_dir / "config.yaml")
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.deterministic is not None:
        cfg = replace(cfg, network=replace(cfg.network, deterministic=args.deterministic))
    return cfg


def _echo(cfg: RunConfig, run_dir: Path, command: str) -> None:
    _atomic(run_dir / f"{command}.config.yaml", cfg.dump)


def _dataset(run_dir: Path) -> Dataset:
    if not (run_dir / "dataset.json").exists():
        raise DataError(f"no dataset in {run_dir}; run 'synth' first")
    return Dataset.load(run_dir)


def cmd_synth(cfg: RunConfig, run_dir: Path) -> None:
    ds = synthesize(cfg) if cfg.data.source == "synthetic" else load_dataset(cfg)
    for name in ("data.csv", "labels.json", "train_labels.json", "test_labels.json", "calendar.json", "dataset.json"):
        _fresh(run_dir / name)
    ds.save(run_dir)
    _atomic(run_dir / "config.yaml", cfg.dump)
    log.info("wrote %d x %d series, %d labeled windows to %s", ds.mts.n, ds.mts.T, len(ds.labels), run_dir)


def cmd_train(cfg: RunConfig, run_dir: Path) -> None:
    ds = _dataset(run_dir)
    for name in ("checkpoint.npz", "losses.csv", "thresholds.json"):
        _fresh(run_dir / name)
    prep = prepare(cfg, ds)
    fitted = fit(cfg, prep)
    _atomic(run_dir / "checkpoint.npz", fitted.model.save)
    _atomic(run_dir / "losses.csv", lambda p: write_loss_csv(fitted.model.history, p))
    _atomic(run_dir / "thresholds.json", lambda p: save_thresholds(fitted.thresholds, p))
    _echo(cfg, run_dir, "train")


def cmd_detect(cfg: RunConfig, run_dir: Path) -> None:
    ds = _dataset(run_dir)
    for name in ("checkpoint.npz", "thresholds.json"):
        if not (run_dir / name).exists():
            raise DataError(f"missing {run_dir / name}; run 'train' first")
    model = TrainedModel.load(run_dir / "checkpoint.npz")
    thresholds = load_thresholds(run_dir / "thresholds.json")
    samples = make_samples(cfg, ds.mts, ds.calendar).select_time(ds.split_index, ds.mts.T)
    model.check_signature(samples)
    det = detect(cfg, model, thresholds, samples, ds.test_length, ds.split_index)
    _atomic(run_dir / "scores.csv", lambda p: det.series.to_csv(p, ds.split_index))
    _atomic(run_dir / "root_causes.json", lambda p: save_root_causes(det.attribution, p))
    _atomic(run_dir / "scores.png", lambda p: plot_scores(det.series, ds, p))
    _echo(cfg, run_dir, "detect")
    log.info("%d flagged steps in %d events", int(det.series.flags.sum()), len(det.attribution))


def read_flags(path: Path, length: int) -> np.ndarray:
    flags = np.zeros(length, dtype=bool)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            lo, hi = int(row["raw_start"]), int(row["raw_end"])
            if hi >= length:
                raise DataError(f"{path}: step ending at {hi} lies beyond the test length {length}")
            if int(row["flag"]):
                flags[max(lo, 0) : hi + 1] = True
    return flags


def cmd_evaluate(cfg: RunConfig, run_dir: Path) -> MetricReport:
    ds = _dataset(run_dir)
    if not (run_dir / "scores.csv").exists():
        raise DataError(f"missing {run_dir / 'scores.csv'}; run 'detect' first")
    flags = read_flags(run_dir / "scores.csv", ds.test_length)
    labels = ds.test_labels
    attribution = load_root_causes(run_dir / "root_causes.json") if (run_dir / "root_causes.json").exists() else None
    report = evaluate(cfg, flags, labels, attribution)
    _atomic(run_dir / "metrics.json", report.save)
    _atomic(run_dir / "metrics.csv", lambda p: write_table([{"setting": run_dir.name, **report.to_dict()}], p))
    _echo(cfg, run_dir, "evaluate")
    log.info("precision %.3f recall %.3f f1 %.3f fpr %.4f nab %.3f", report.precision, report.recall, report.f1,
             report.fpr, report.nab_score)
    return report


def cmd_report(run_dirs: list[Path], out: Path) -> None:
    rows, reports = [], []
    for d in run_dirs:
        if not (d / "metrics.json").exists():
            raise DataError(f"missing {d / 'metrics.json'}; run 'evaluate' first")
        r = MetricReport.load(d / "metrics.json")
        reports.append(r)
        rows.append({"setting": d.name, **r.to_dict()})
    if len(reports) > 1:
        rows.append({"setting": "mean", **mean_reports(reports)})
    _atomic(out / "report.csv", lambda p: write_table(rows, p))
    losses = [d / "losses.csv" for d in run_dirs if (d / "losses.csv").exists()]
    if losses:
        _atomic(out / "losses.png", lambda p: plot_losses(losses, p))


def plot_scores(series, ds: Dataset, path: Path) -> None:
    """Anomaly score per step over test time, with labeled windows shaded."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = series.time_index - ds.split_index
    fig, ax = plt.subplots(figsize=(12, 3.5))
    ax.plot(t, series.scores, lw=0.8, color="tab:blue", label=f"{series.method} score")
    ax.axhline(series.thresholds.flag_threshold, color="tab:red", lw=0.8, ls="--", label="flag cutoff")
    for i, w in enumerate(ds.test_labels):
        ax.axvspan(w.start_index, w.end_index, color="tab:orange", alpha=0.3, label="labeled anomaly" if i == 0 else None)
    ax.set_xlabel("test time index")
    ax.set_ylabel("score")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100)
    plt.close(fig)


def plot_losses(paths: list[Path], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for p in paths:
        rows = list(csv.DictReader(open(p)))
        ax.plot([int(r["epoch"]) for r in rows], [float(r["contextual"]) for r in rows], label=p.parent.name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("contextual loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="png", dpi=100)
    plt.close(fig)


COMMANDS = ("synth", "train", "detect", "evaluate", "report")


def build_parser() -> Parser:
    parser = Parser(prog="rsmgan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run configuration (defaults to the run directory's config.yaml)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--repeats", type=int, default=1,
                       help="run seeds seed..seed+N-1 in <out>/seed_<k> subdirectories")
        p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None)
        if name == "report":
            p.add_argument("--runs", nargs="*", default=None, help="run directories to tabulate")
    return parser


def _seed_dirs(out: Path, base_seed: int, repeats: int) -> list[tuple[int, Path]]:
    if repeats == 1:
        return [(base_seed, out)]
    return [(base_seed + k, out / f"seed_{base_seed + k}") for k in range(repeats)]


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.repeats < 1:
            raise UsageError("--repeats must be >= 1")
        if args.command == "report":
            if args.runs:
                dirs = [Path(d) for d in args.runs]
            else:
                subdirs = sorted(p for p in out.glob("seed_*") if p.is_dir())
                dirs = subdirs or [out]
            cmd_report(dirs, out)
            return EXIT_OK
        cfg0 = resolve_config(args, out)
        reports = []
        for seed, run_dir in _seed_dirs(out, cfg0.seed, args.repeats):
            run_dir.mkdir(parents=True, exist_ok=True)
            cfg = cfg0.with_seed(seed) if args.repeats > 1 else cfg0
            if args.repeats > 1 and not args.config and (run_dir / "config.yaml").exists():
                cfg = RunConfig.load(run_dir / "config.yaml")
            if args.command == "synth":
                cmd_synth(cfg, run_dir)
            elif args.command == "train":
                cmd_train(cfg, run_dir)
            elif args.command == "detect":
                cmd_detect(cfg, run_dir)
            else:
                reports.append(cmd_evaluate(cfg, run_dir))
        if args.command == "evaluate" and args.repeats > 1:
            mean = mean_reports(reports)
            _atomic(out / "metrics_mean.json", lambda p: p.write_text(json.dumps(mean, indent=2, sort_keys=True) + "\n"))
    except (UsageError, ConfigError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        log.error("training failed: %s", exc)
        return EXIT_TRAINING
    except (DataError, FileNotFoundError, SchemaError, FormatError, ParseError, InsufficientDataError,
            ConfigurationError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_DATA
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())

