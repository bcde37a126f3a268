"""Grad-CAM heatmaps over a convolutional block of the compact CNN."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .image import resize_bilinear, to_intensity
from .nn.model import ModelState, backward, forward
from .pgm import write_pgm


def cam_from_maps(activations: np.ndarray, gradients: np.ndarray, out_size: tuple[int, int]) -> np.ndarray:
    """Heatmap from one image's ``(K, h, w)`` activations and logit gradients.

    Channel weights are the spatial means of the gradients; the weighted sum
    is rectified, upsampled bilinearly to ``out_size`` (height, width) and
    divided by its maximum. An all-zero map stays all-zero.
    """
    activations = np.asarray(activations, dtype=np.float64)
    gradients = np.asarray(gradients, dtype=np.float64)
    if activations.ndim != 3 or activations.shape != gradients.shape:
        raise ValueError(f"expected matching (K, h, w) arrays, got {activations.shape} and {gradients.shape}")
    alpha = gradients.mean(axis=(1, 2))
    raw = np.maximum(np.tensordot(alpha, activations, axes=1), 0.0)
    height, width = out_size
    cam = np.maximum(resize_bilinear(raw, width, height), 0.0)
    peak = cam.max()
    if peak > 0:
        cam /= peak
    return cam


def grad_cam(state: ModelState, patch: np.ndarray, class_index: int, block: int = -1) -> np.ndarray:
    """Grad-CAM of the raw class logit for a single normalized input patch.

    ``block`` selects the conv block whose post-ReLU activations are used;
    the default is the last one.
    """
    num_classes = state.config.num_classes
    if not 0 <= class_index < num_classes:
        raise ValueError(f"class_index {class_index} out of range for {num_classes} classes")
    patch = np.asarray(patch, dtype=np.float64)
    logits, cache = forward(state, patch[None, None])
    dlogits = np.zeros_like(logits)
    dlogits[0, class_index] = 1.0
    _, act_grads = backward(state, cache, dlogits, return_activation_grads=True)
    return cam_from_maps(cache.activations[block][0], act_grads[block][0], patch.shape)


def cam_filename(source_id: str, true_name: str, pred_name: str) -> str:
    return f"{source_id}_{true_name}_{pred_name}_cam.pgm"


def render_overlay(patch: np.ndarray, heatmap: np.ndarray, out_path) -> dict[str, Path]:
    """Write the patch, the heatmap and a side-by-side composite as 8-bit PGMs.

    ``out_path`` receives the composite ``[patch | heatmap | blend]``; the
    patch and heatmap go next to it with ``_patch`` / ``_heatmap`` suffixes.
    """
    patch = np.asarray(patch, dtype=np.float64)
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if patch.shape != heatmap.shape:
        raise ValueError(f"patch {patch.shape} and heatmap {heatmap.shape} differ in size")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    stem = out_path.stem.removesuffix("_cam")
    paths = {
        "patch": out_path.with_name(f"{stem}_patch.pgm"),
        "heatmap": out_path.with_name(f"{stem}_heatmap.pgm"),
        "composite": out_path,
    }
    blend = 0.5 * patch + 0.5 * heatmap
    write_pgm(paths["patch"], to_intensity(patch, 8))
    write_pgm(paths["heatmap"], to_intensity(heatmap, 8))
    write_pgm(paths["composite"], to_intensity(np.hstack([patch, heatmap, blend]), 8))
    return paths
