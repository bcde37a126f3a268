"""Training loop and prediction over labelled patches."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..augment import AugmentationConfig, AugmentStats, RandomStream, apply_pipeline
from ..dataset import LabeledPatch, Split, Task, class_counts, compute_class_weights, map_label, select
from .model import (
    ModelConfig,
    ModelState,
    TrainConfig,
    adam_step,
    backward,
    forward,
    init_model,
    predict_logits,
    predict_proba,
    weighted_cross_entropy,
)

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float | None


@dataclass
class TrainLog:
    epochs: int
    batch_size: int
    class_weights: list[float]
    records: list[EpochRecord] = field(default_factory=list)
    augmented_items: int = 0
    rhe_applied_count: int = 0

    def header(self) -> str:
        return f"epochs={self.epochs} batch_size={self.batch_size}"


def eval_batch(patches, aug_cfg: AugmentationConfig) -> np.ndarray:
    """Deterministic evaluation inputs, shape (N, 1, S, S)."""
    imgs = [apply_pipeline(p.image, aug_cfg, None, training=False) for p in patches]
    return np.stack(imgs)[:, None]


def predict(state: ModelState, patches, aug_cfg: AugmentationConfig):
    """Predicted class indices and softmax probabilities under the evaluation pipeline."""
    if not patches:
        return np.zeros(0, dtype=np.intp), np.zeros((0, state.config.num_classes))
    return predict_proba(predict_logits(state, eval_batch(patches, aug_cfg)))


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    aug_cfg: AugmentationConfig,
    dataset: list[LabeledPatch],
    task: Task,
) -> tuple[ModelState, TrainLog]:
    """Train from scratch on the TRAIN split and return the final-epoch state.

    One :class:`RandomStream` seeded with ``train_cfg.seed`` drives shuffling
    and augmentation in a fixed order, so identical inputs give bitwise
    identical parameters.
    """
    task = Task.parse(task)
    if model_cfg.num_classes != task.num_classes:
        raise ConfigurationError(
            f"model has {model_cfg.num_classes} classes but task {task.value} needs {task.num_classes}"
        )
    if aug_cfg.target_size != model_cfg.input_size:
        raise ConfigurationError(
            f"augmentation target_size {aug_cfg.target_size} != model input_size {model_cfg.input_size}"
        )
    train_items = select(dataset, Split.TRAIN)
    if not train_items:
        raise ConfigurationError("dataset has no TRAIN patches")
    try:
        weights = compute_class_weights(class_counts(train_items, task))
    except ValueError as exc:
        raise ConfigurationError(f"TRAIN split: {exc}") from exc
    labels = np.array([map_label(p.pathology, task) for p in train_items])

    val_items = select(dataset, Split.VALIDATION)
    val_x = eval_batch(val_items, aug_cfg) if val_items else None
    val_y = np.array([map_label(p.pathology, task) for p in val_items])

    state = init_model(model_cfg)
    rng = RandomStream(train_cfg.seed)
    stats = AugmentStats()
    run_log = TrainLog(train_cfg.epochs, train_cfg.batch_size, weights.tolist())
    log.info("training %s: %s", task.value, run_log.header())

    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(train_items))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            x = np.stack([apply_pipeline(train_items[i].image, aug_cfg, rng, True, stats) for i in idx])[:, None]
            y = labels[idx]
            logits, cache = forward(state, x)
            loss, dlogits = weighted_cross_entropy(logits, y, weights)
            grads = backward(state, cache, dlogits)
            adam_step(state, grads, train_cfg)
            total_loss += loss * len(idx)
            correct += int(np.sum(np.argmax(logits, axis=1) == y))
        val_acc = None
        if val_x is not None:
            pred, _ = predict_proba(predict_logits(state, val_x))
            val_acc = float(np.mean(pred == val_y))
        rec = EpochRecord(epoch, total_loss / len(order), correct / len(order), val_acc)
        run_log.records.append(rec)
        log.debug("epoch %d loss %.6f train_acc %.4f val_acc %s", epoch, rec.train_loss, rec.train_accuracy, val_acc)

    run_log.augmented_items = stats.items
    run_log.rhe_applied_count = stats.rhe_applied
    return state, run_log
