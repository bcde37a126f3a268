"""Experiment configuration, P-sweeps and report files."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentationConfig
from .dataset import (
    LabeledPatch,
    Split,
    SyntheticParams,
    Task,
    generate_synthetic_dataset,
    load_manifest,
    map_label,
    select,
)
from .nn.checkpoint import save_checkpoint
from .nn.model import ModelConfig, TrainConfig
from .nn.training import TrainLog, predict, train
from .stats import DegenerateVarianceError, MetricSample, TTestVariant, accuracy, aggregate_runs, f1_score, t_test

log = logging.getLogger(__name__)

PRESETS = {
    "desk": {"model": {"input_size": 64}, "augment": {"target_size": 64}, "train": {"learning_rate": 1e-3}},
    "paper": {"model": {"input_size": 224}, "augment": {"target_size": 224}, "train": {"learning_rate": 3.2e-6}},
}
DEFAULT_P_VALUES = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]


class ConfigError(ValueError):
    pass


def build(cls, values: dict, where: str):
    """Instantiate dataclass ``cls`` from ``values``, rejecting unknown keys."""
    if not isinstance(values, dict):
        raise ConfigError(f"{where}: expected an object, got {type(values).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class DataSource:
    manifest: str | None = None
    data_root: str | None = None
    synthetic: dict | None = None
    seed: int = 0

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ValueError("give exactly one of 'manifest' or 'synthetic'")

    def load(self) -> list[LabeledPatch]:
        if self.manifest is not None:
            return load_manifest(self.manifest, self.data_root)
        return generate_synthetic_dataset(self.synthetic_params(), self.seed)

    def synthetic_params(self) -> SyntheticParams:
        return build(SyntheticParams, self.synthetic or {}, "data.synthetic")


@dataclass
class GradcamSettings:
    checkpoint: str | None = None
    count: int = 3
    source_ids: list[str] | None = None
    block: int = -1


@dataclass
class TTestSettings:
    a: object = None
    b: object = None
    variant: str = "POOLED"


@dataclass
class ExperimentConfig:
    task: str = "TWO_CLASS"
    p_values: list[float] = field(default_factory=lambda: list(DEFAULT_P_VALUES))
    runs_per_p: int = 5
    base_seed: int = 0
    p_rhe: float = 0.0
    seed: int | None = None
    workers: int = 1
    preset: str = "desk"
    output_dir: str | None = None
    data: DataSource | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)
    gradcam: GradcamSettings = field(default_factory=GradcamSettings)
    ttest: TTestSettings = field(default_factory=TTestSettings)

    def __post_init__(self):
        self.task = Task.parse(self.task).value
        self.p_values = [float(p) for p in self.p_values]
        if not self.p_values or any(not 0.0 <= p <= 1.0 for p in self.p_values):
            raise ConfigError(f"p_values must be a non-empty list in [0, 1], got {self.p_values}")
        if self.runs_per_p < 1:
            raise ConfigError("runs_per_p must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.preset not in PRESETS:
            raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {self.preset!r}")

    @property
    def task_kind(self) -> Task:
        return Task(self.task)

    def run_seed(self, run_index: int) -> int:
        return self.base_seed + run_index


_SECTIONS = {
    "data": DataSource,
    "model": ModelConfig,
    "train": TrainConfig,
    "augment": AugmentationConfig,
    "gradcam": GradcamSettings,
    "ttest": TTestSettings,
}


def config_from_dict(raw: dict, preset: str | None = None, base_dir=None) -> ExperimentConfig:
    """Parse a config mapping; ``preset`` (if given) overrides the file's own.

    Preset values are applied first, so explicit settings in the file win.
    Relative paths are resolved against ``base_dir``.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    raw = json.loads(json.dumps(raw))
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
    preset = preset or raw.get("preset", "desk")
    if preset not in PRESETS:
        raise ConfigError(f"preset must be one of {sorted(PRESETS)}, got {preset!r}")
    raw["preset"] = preset
    task = Task.parse(raw.get("task", "TWO_CLASS"))
    for section, defaults in PRESETS[preset].items():
        raw[section] = {**defaults, **raw.get(section, {})}
    raw["model"].setdefault("num_classes", task.num_classes)
    base = Path(base_dir) if base_dir is not None else None
    if base is not None:
        for section, key in (("data", "manifest"), ("data", "data_root"), ("gradcam", "checkpoint")):
            value = raw.get(section, {}).get(key)
            if isinstance(value, str) and not Path(value).is_absolute():
                raw[section][key] = str(base / value)
        if isinstance(raw.get("output_dir"), str) and not Path(raw["output_dir"]).is_absolute():
            raw["output_dir"] = str(base / raw["output_dir"])
    for section, cls in _SECTIONS.items():
        if section in raw and raw[section] is not None:
            raw[section] = build(cls, raw[section], section)
    try:
        return ExperimentConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, preset: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(raw, preset, path.parent)


# -- single runs -----------------------------------------------------------


@dataclass
class RunResult:
    p: float
    run: int
    seed: int
    accuracy: float
    f1: float
    log: TrainLog
    state: object


def _fmt(value: float) -> str:
    return repr(float(value))


def run_once(cfg: ExperimentConfig, dataset, p_rhe: float, seed: int, run: int = 0) -> RunResult:
    """Train one model at ``p_rhe`` with ``seed`` driving init, shuffling and augmentation."""
    task = cfg.task_kind
    model_cfg = dataclasses.replace(cfg.model, init_seed=seed)
    train_cfg = dataclasses.replace(cfg.train, seed=seed)
    aug_cfg = dataclasses.replace(cfg.augment, p_rhe=p_rhe)
    state, run_log = train(model_cfg, train_cfg, aug_cfg, dataset, task)
    test_items = select(dataset, Split.TEST)
    if not test_items:
        raise ConfigError("dataset has no TEST patches")
    labels = [map_label(p.pathology, task) for p in test_items]
    preds, _ = predict(state, test_items, aug_cfg)
    return RunResult(
        p_rhe, run, seed, accuracy(preds, labels), f1_score(preds, labels, task.num_classes), run_log, state
    )


def write_run(result: RunResult, task: Task, out_dir) -> Path:
    """Write ``epochs.csv``, ``metrics.json`` and ``checkpoint.rheb`` for one run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_log = result.log
    buf = io.StringIO()
    buf.write(f"# {run_log.header()}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "train_loss", "train_accuracy", "val_accuracy"])
    for rec in run_log.records:
        val = "" if rec.val_accuracy is None else _fmt(rec.val_accuracy)
        writer.writerow([rec.epoch, _fmt(rec.train_loss), _fmt(rec.train_accuracy), val])
    (out_dir / "epochs.csv").write_text(buf.getvalue(), encoding="utf-8")
    metrics = {
        "task": task.value,
        "p": result.p,
        "run": result.run,
        "seed": result.seed,
        "accuracy": result.accuracy,
        "f1": result.f1,
        "epochs": run_log.epochs,
        "batch_size": run_log.batch_size,
        "class_weights": run_log.class_weights,
        "augmented_items": run_log.augmented_items,
        "rhe_applied_count": run_log.rhe_applied_count,
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n", encoding="utf-8")
    save_checkpoint(out_dir / "checkpoint.rheb", result.state)
    return out_dir


def run_dir_name(p: float, run: int) -> str:
    return f"p{p:g}_run{run}"


# -- sweeps ----------------------------------------------------------------


def _sweep_job(args):
    cfg, dataset, p, run, out_root = args
    seed = cfg.run_seed(run)
    try:
        result = run_once(cfg, dataset, p, seed, run)
    except Exception as exc:
        raise RuntimeError(f"run failed at P={p:g}, seed={seed}: {exc}") from exc
    write_run(result, cfg.task_kind, Path(out_root) / "runs" / run_dir_name(p, run))
    return MetricSample(result.accuracy, result.f1, seed)


def sweep(cfg: ExperimentConfig, dataset, out_dir) -> dict[float, list[MetricSample]]:
    """Run every (P, run) pair and write the sweep reports into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, dataset, p, r, out_dir) for p in cfg.p_values for r in range(cfg.runs_per_p)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            samples = list(pool.map(_sweep_job, jobs))
    else:
        samples = []
        for job in jobs:
            log.info("P=%g run %d", job[2], job[3])
            samples.append(_sweep_job(job))
    results: dict[float, list[MetricSample]] = {}
    for (_, _, p, _, _), sample in zip(jobs, samples):
        results.setdefault(p, []).append(sample)
    write_reports(cfg, results, out_dir)
    return results


def runs_csv(task: str, results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", "p", "run", "seed", "accuracy", "f1"])
    for p, samples in results.items():
        for run, s in enumerate(samples):
            writer.writerow([task, _fmt(p), run, s.seed, _fmt(s.accuracy), _fmt(s.f1)])
    return buf.getvalue()


def summary_csv(task: str, results) -> str:
    """Aggregate rows: full-precision mean/sd plus ``mean (sd)`` display columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["task", "p", "n", "mean_acc", "sd_acc", "mean_f1", "sd_f1", "accuracy", "f1"])
    for p, samples in results.items():
        if len(samples) >= 2:
            agg = aggregate_runs(samples)
            acc_txt = f"{agg['mean_acc']:.4f} ({agg['sd_acc']:.4f})"
            f1_txt = f"{agg['mean_f1']:.4f} ({agg['sd_f1']:.4f})"
            row = [_fmt(agg["mean_acc"]), _fmt(agg["sd_acc"]), _fmt(agg["mean_f1"]), _fmt(agg["sd_f1"])]
        else:
            s = samples[0]
            acc_txt, f1_txt = f"{s.accuracy:.4f}", f"{s.f1:.4f}"
            row = [_fmt(s.accuracy), "", _fmt(s.f1), ""]
        writer.writerow([task, _fmt(p), len(samples), *row, acc_txt, f1_txt])
    return buf.getvalue()


def ttests(task: str, results, variant=TTestVariant.POOLED) -> list[dict]:
    """Compare the reference P (0 when present, else the first) against every other P."""
    ps = list(results)
    ref = 0.0 if 0.0 in results else ps[0]
    out = []
    for p in ps:
        if p == ref:
            continue
        for metric in ("accuracy", "f1"):
            entry = {"task": task, "metric": metric, "p_a": ref, "p_b": p}
            a = [getattr(s, metric) for s in results[ref]]
            b = [getattr(s, metric) for s in results[p]]
            try:
                entry.update(t_test(a, b, variant).to_dict())
            except (DegenerateVarianceError, ValueError) as exc:
                entry["error"] = str(exc)
            out.append(entry)
    return out


def write_reports(cfg: ExperimentConfig, results, out_dir) -> None:
    out_dir = Path(out_dir)
    (out_dir / "runs.csv").write_text(runs_csv(cfg.task, results), encoding="utf-8")
    (out_dir / "summary.csv").write_text(summary_csv(cfg.task, results), encoding="utf-8")
    variant = TTestVariant.parse(cfg.ttest.variant)
    payload = json.dumps(ttests(cfg.task, results, variant), indent=2)
    (out_dir / "ttests.json").write_text(payload + "\n", encoding="utf-8")


def read_runs_csv(path) -> dict[float, list[MetricSample]]:
    results: dict[float, list[MetricSample]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            sample = MetricSample(float(row["accuracy"]), float(row["f1"]), int(row["seed"]))
            results.setdefault(float(row["p"]), []).append(sample)
    return results
