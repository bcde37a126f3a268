"""Compact CNN classifier with explicit backpropagation and Adam.

Architecture: ``len(conv_blocks)`` blocks of (3x3 same conv -> ReLU -> 2x2
max pool), global average pool, fully connected head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .layers import (
    conv3x3_backward,
    conv3x3_forward,
    log_softmax,
    maxpool2_backward,
    maxpool2_forward,
    relu_backward,
    relu_forward,
    softmax,
)


class ShapeError(ValueError):
    pass


class StaleCacheError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    input_size: int = 224
    conv_blocks: list[int] = field(default_factory=lambda: [8, 16, 32])
    num_classes: int = 2
    init_seed: int = 0

    def __post_init__(self):
        # accept [(out_channels, kernel, pool), ...] as well as plain channel counts
        self.conv_blocks = [int(b[0]) if isinstance(b, (list, tuple)) else int(b) for b in self.conv_blocks]
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if not self.conv_blocks or min(self.conv_blocks) < 1:
            raise ValueError("conv_blocks must list at least one positive channel count")
        if self.input_size < 1 or self.input_size % (2 ** len(self.conv_blocks)):
            raise ValueError(
                f"input_size {self.input_size} must be divisible by 2^{len(self.conv_blocks)}"
            )

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Parameter names and shapes in declaration order."""
        shapes = {}
        cin = 1
        for i, cout in enumerate(self.conv_blocks):
            shapes[f"conv{i}.w"] = (cout, cin, 3, 3)
            shapes[f"conv{i}.b"] = (cout,)
            cin = cout
        shapes["head.w"] = (self.num_classes, cin)
        shapes["head.b"] = (self.num_classes,)
        return shapes


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 3.2e-6
    weight_decay: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0 or self.weight_decay < 0 or self.adam_eps <= 0:
            raise ValueError("learning_rate and weight_decay must be >= 0, adam_eps > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must be in [0, 1)")


@dataclass(eq=False)
class ModelState:
    config: ModelConfig
    params: dict[str, np.ndarray]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    # bumped on every parameter update; forward caches record it
    version: int = 0


@dataclass(eq=False)
class ForwardCache:
    version: int
    input_shape: tuple
    blocks: list  # (windows, pre-activation, pool indices) per block
    activations: list  # post-ReLU, pre-pool maps per block (Grad-CAM targets)
    features: np.ndarray  # global-average-pooled features
    last_spatial: tuple


def init_model(cfg: ModelConfig) -> ModelState:
    """Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights, zero biases."""
    gen = np.random.Generator(np.random.PCG64(cfg.init_seed))
    params = {}
    for name, shape in cfg.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = math.sqrt(1.0 / fan_in)
            params[name] = gen.uniform(-bound, bound, size=shape)
    return ModelState(
        cfg,
        params,
        {k: np.zeros_like(p) for k, p in params.items()},
        {k: np.zeros_like(p) for k, p in params.items()},
    )


def forward(state: ModelState, batch: np.ndarray):
    """Return ``(logits (B, C), cache)`` for a ``(B, 1, S, S)`` batch."""
    cfg = state.config
    batch = np.asarray(batch, dtype=np.float64)
    expected = (1, cfg.input_size, cfg.input_size)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ShapeError(f"conv0: expected input (B, {', '.join(map(str, expected))}), got {batch.shape}")
    x = batch
    blocks, activations = [], []
    for i in range(len(cfg.conv_blocks)):
        z, windows = conv3x3_forward(x, state.params[f"conv{i}.w"], state.params[f"conv{i}.b"])
        a = relu_forward(z)
        x, idx = maxpool2_forward(a)
        blocks.append((windows, z, idx))
        activations.append(a)
    features = x.mean(axis=(2, 3))
    logits = features @ state.params["head.w"].T + state.params["head.b"]
    cache = ForwardCache(state.version, batch.shape, blocks, activations, features, x.shape)
    return logits, cache


def weighted_cross_entropy(logits: np.ndarray, labels, weights):
    """Batch-mean class-weighted cross-entropy and its gradient w.r.t. logits.

    ``loss = mean_i w[y_i] * -log softmax(logits_i)[y_i]``
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    weights = np.asarray(weights, dtype=np.float64)
    bsz = logits.shape[0]
    rows = np.arange(bsz)
    w = weights[labels]
    loss = float(np.sum(-w * log_softmax(logits)[rows, labels]) / bsz)
    dlogits = softmax(logits)
    dlogits[rows, labels] -= 1.0
    dlogits *= (w / bsz)[:, None]
    return loss, dlogits


def backward(state: ModelState, cache: ForwardCache, dlogits: np.ndarray, return_activation_grads=False):
    """Exact gradients of every parameter given the upstream ``dlogits``.

    With ``return_activation_grads`` also returns the gradient with respect
    to each block's post-ReLU activation map.
    """
    if cache.version != state.version:
        raise StaleCacheError("forward cache predates the latest parameter update")
    cfg = state.config
    grads = {}
    grads["head.w"] = dlogits.T @ cache.features
    grads["head.b"] = dlogits.sum(axis=0)
    bsz, c, hh, ww = cache.last_spatial
    dx = np.broadcast_to((dlogits @ state.params["head.w"])[:, :, None, None] / (hh * ww), cache.last_spatial)
    act_grads = [None] * len(cfg.conv_blocks)
    for i in reversed(range(len(cfg.conv_blocks))):
        windows, z, idx = cache.blocks[i]
        da = maxpool2_backward(np.ascontiguousarray(dx), idx)
        act_grads[i] = da
        dz = relu_backward(da, z)
        dx, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = conv3x3_backward(dz, windows, state.params[f"conv{i}.w"])
    grads = {k: grads[k] for k in state.params}
    if return_activation_grads:
        return grads, act_grads
    return grads


def adam_step(state: ModelState, grads: dict, cfg: TrainConfig) -> ModelState:
    """One Adam update in place, with weight decay added to the gradient (L2)."""
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, theta in state.params.items():
        g = grads[name]
        if cfg.weight_decay:
            g = g + cfg.weight_decay * theta
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
    state.version += 1
    return state


def predict_logits(state: ModelState, batch: np.ndarray, chunk: int = 64) -> np.ndarray:
    out = [forward(state, batch[i : i + chunk])[0] for i in range(0, len(batch), chunk)]
    return np.concatenate(out, axis=0)


def predict_proba(logits: np.ndarray):
    """Argmax class (lowest index on ties) and softmax probabilities."""
    probs = softmax(np.asarray(logits, dtype=np.float64))
    return np.argmax(logits, axis=1), probs
