"""``rhe-bench`` command-line entry point."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import re
import sys
from pathlib import Path

import numpy as np

from .augment import apply_pipeline
from .dataset import IngestError, Split, Task, class_counts, map_label, select, write_dataset
from .experiment import ConfigError, ExperimentConfig, load_config, run_once, sweep, write_run
from .gradcam import cam_filename, grad_cam, render_overlay
from .nn.checkpoint import CheckpointError, load_checkpoint
from .nn.model import forward, predict_proba
from .stats import DegenerateVarianceError, TTestVariant, t_test, t_test_from_summary

log = logging.getLogger("rhe_bench")


class UsageError(ValueError):
    pass


def _out_dir(args, cfg: ExperimentConfig, default: str) -> Path:
    return Path(args.out or cfg.output_dir or default)


def _require_data(cfg: ExperimentConfig):
    if cfg.data is None:
        raise ConfigError("config needs a 'data' section")
    return cfg.data.load()


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    if cfg.data is None or cfg.data.synthetic is None:
        raise ConfigError("synth needs data.synthetic parameters")
    patches = cfg.data.load()
    out = _out_dir(args, cfg, "synthetic")
    manifest = write_dataset(patches, out)
    print(f"wrote {len(patches)} patches to {manifest}")
    for split in Split:
        counts = class_counts(select(patches, split), Task.THREE_CLASS)
        totals = ", ".join(f"{name}={n}" for name, n in zip(Task.THREE_CLASS.class_names, counts))
        print(f"{split.value}: {sum(counts)} ({totals})")
    return 0


def cmd_train(cfg: ExperimentConfig, args) -> int:
    dataset = _require_data(cfg)
    seed = cfg.base_seed if cfg.seed is None else cfg.seed
    result = run_once(cfg, dataset, cfg.p_rhe, seed)
    out = write_run(result, cfg.task_kind, _out_dir(args, cfg, "run"))
    print(f"P={cfg.p_rhe:g} seed={seed} accuracy={result.accuracy:.6f} f1={result.f1:.6f}")
    print(f"rhe_applied_count = {result.log.rhe_applied_count} of {result.log.augmented_items} augmented items")
    print(f"outputs in {out}")
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    dataset = _require_data(cfg)
    out = _out_dir(args, cfg, "sweep")
    sweep(cfg, dataset, out)
    print((out / "summary.csv").read_text(encoding="utf-8"), end="")
    print(f"reports in {out}")
    return 0


def cmd_gradcam(cfg: ExperimentConfig, args) -> int:
    settings = cfg.gradcam
    if not settings.checkpoint:
        raise ConfigError("gradcam needs gradcam.checkpoint")
    state = load_checkpoint(settings.checkpoint)
    task = cfg.task_kind
    if state.config.num_classes != task.num_classes:
        raise ConfigError(f"checkpoint has {state.config.num_classes} classes, task {task.value} needs {task.num_classes}")
    dataset = _require_data(cfg)
    test_items = select(dataset, Split.TEST)
    if settings.source_ids:
        by_id = {p.source_id: p for p in test_items}
        missing = [s for s in settings.source_ids if s not in by_id]
        if missing:
            raise ConfigError(f"unknown test source_id(s): {', '.join(missing)}")
        chosen = [by_id[s] for s in settings.source_ids]
    else:
        chosen = test_items[: settings.count]
    aug = dataclasses.replace(cfg.augment, p_rhe=cfg.p_rhe, target_size=state.config.input_size)
    out = _out_dir(args, cfg, "gradcam")
    names = task.class_names
    for item in chosen:
        x = apply_pipeline(item.image, aug, None, training=False)
        logits, _ = forward(state, x[None, None])
        pred = int(predict_proba(logits)[0][0])
        cam = grad_cam(state, x, pred, settings.block)
        true = names[map_label(item.pathology, task)]
        path = out / cam_filename(item.source_id, true, names[pred])
        render_overlay(x, cam, path)
        print(path)
    return 0


def _sample(spec, base: Path, side: str):
    """A ttest side: list of numbers, {mean, sd, n}, or a path to a numbers file."""
    if isinstance(spec, dict):
        unknown = set(spec) - {"mean", "sd", "n"}
        if unknown or len(spec) != 3:
            raise UsageError(f"ttest.{side}: summary needs exactly mean, sd, n")
        return ("summary", float(spec["mean"]), float(spec["sd"]), int(spec["n"]))
    if isinstance(spec, str):
        path = Path(spec) if Path(spec).is_absolute() else base / spec
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"ttest.{side}: cannot read {path}: {exc}") from exc
        spec = [float(tok) for tok in re.split(r"[\s,]+", text.strip()) if tok]
    if not isinstance(spec, list):
        raise UsageError(f"ttest.{side}: expected a list, a summary object or a file path")
    values = [float(v) for v in spec]
    if len(values) < 2:
        raise UsageError(f"ttest.{side}: need at least 2 values, got {len(values)}")
    return ("values", values)


def cmd_ttest(cfg: ExperimentConfig, args) -> int:
    settings = cfg.ttest
    if settings.a is None or settings.b is None:
        raise UsageError("ttest needs ttest.a and ttest.b")
    base = Path(args.config).parent
    a, b = _sample(settings.a, base, "a"), _sample(settings.b, base, "b")
    variant = TTestVariant.parse(args.variant or settings.variant)
    if a[0] == "summary" or b[0] == "summary":

        def summary(side):
            if side[0] == "summary":
                return side[1:]
            vals = np.asarray(side[1])
            return float(vals.mean()), float(vals.std(ddof=1)), vals.size

        result = t_test_from_summary(*summary(a), *summary(b), variant)
    else:
        result = t_test(a[1], b[1], variant)
    print(f"variant = {result.variant.value}")
    print(f"t = {result.t_statistic:.6f}")
    print(f"df = {result.degrees_of_freedom:.6f}")
    print(f"p = {result.p_value:.6f}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "gradcam": cmd_gradcam,
    "ttest": cmd_ttest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhe-bench", description="Random histogram equalization benchmark.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--out", help="output directory (overrides output_dir in the config)")
    parser.add_argument("--preset", choices=["desk", "paper"], help="hyperparameter preset (default: desk)")
    parser.add_argument("--variant", choices=["pooled", "welch", "POOLED", "WELCH"], help="t-test variant")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.preset)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError, IngestError, CheckpointError, DegenerateVarianceError) as exc:
        print(f"rhe-bench {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"rhe-bench {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
