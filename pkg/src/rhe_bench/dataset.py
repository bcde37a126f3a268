"""Calcification patch datasets: labels, task mappings, manifests, synthetic data."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .image import IntensityPatch
from .pgm import PatchFormatError, read_patch, write_pgm


class IngestError(ValueError):
    pass


class PathologyLabel(enum.Enum):
    MALIGNANT = "MALIGNANT"
    BENIGN = "BENIGN"
    BENIGN_WITHOUT_CALLBACK = "BENIGN_WITHOUT_CALLBACK"


class Split(enum.Enum):
    TRAIN = "TRAIN"
    VALIDATION = "VALIDATION"
    TEST = "TEST"


class Task(enum.Enum):
    TWO_CLASS = "TWO_CLASS"
    THREE_CLASS = "THREE_CLASS"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, Task):
            return value
        return cls(str(value).upper())

    @property
    def class_names(self) -> list[str]:
        if self is Task.TWO_CLASS:
            return ["FOLLOW_UP", "NO_FOLLOW_UP"]
        return [p.value for p in PathologyLabel]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


_TWO_CLASS = {
    PathologyLabel.MALIGNANT: 0,
    PathologyLabel.BENIGN: 0,
    PathologyLabel.BENIGN_WITHOUT_CALLBACK: 1,
}
_THREE_CLASS = {label: i for i, label in enumerate(PathologyLabel)}


def map_label(pathology: PathologyLabel, task: Task) -> int:
    """Class index of ``pathology`` under ``task``.

    The two-class task merges malignant and benign into FOLLOW_UP (0) and
    keeps benign-without-callback as NO_FOLLOW_UP (1).
    """
    table = _TWO_CLASS if Task.parse(task) is Task.TWO_CLASS else _THREE_CLASS
    return table[pathology]


@dataclass(eq=False)
class LabeledPatch:
    image: IntensityPatch
    pathology: PathologyLabel
    split: Split
    source_id: str


def select(patches, split: Split) -> list[LabeledPatch]:
    return [p for p in patches if p.split is split]


def class_counts(patches, task: Task) -> list[int]:
    counts = [0] * Task.parse(task).num_classes
    for p in patches:
        counts[map_label(p.pathology, task)] += 1
    return counts


def compute_class_weights(counts) -> np.ndarray:
    """Inverse-frequency weights ``N / (C * N_c)``; balanced counts give ones."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("counts must be a non-empty 1-D sequence")
    if np.any(counts <= 0):
        raise ValueError(f"every class needs at least one sample, got counts {counts.tolist()}")
    return counts.sum() / (counts.size * counts)


def load_manifest(manifest_path, data_root=None) -> list[LabeledPatch]:
    """Read a ``path,pathology,split`` CSV and load every referenced patch.

    Relative paths resolve against ``data_root`` (default: the manifest's
    directory). Errors name the offending line.
    """
    manifest_path = Path(manifest_path)
    root = Path(data_root) if data_root is not None else manifest_path.parent
    out = []
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["path", "pathology", "split"]:
            raise IngestError(f"{manifest_path}: header must be 'path,pathology,split', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{manifest_path}:{lineno}"
            if len(row) != 3:
                raise IngestError(f"{where}: expected 3 fields, got {len(row)}: {row}")
            rel, pathology, split = (v.strip() for v in row)
            try:
                label = PathologyLabel(pathology.upper())
            except ValueError:
                raise IngestError(f"{where}: unknown pathology {pathology!r}") from None
            try:
                split_value = Split(split.upper())
            except ValueError:
                raise IngestError(f"{where}: unknown split {split!r}") from None
            path = Path(rel) if Path(rel).is_absolute() else root / rel
            if not path.is_file():
                raise IngestError(f"{where}: patch file not found: {path}")
            try:
                image = read_patch(path)
            except (PatchFormatError, OSError) as exc:
                raise IngestError(f"{where}: cannot read {path}: {exc}") from exc
            out.append(LabeledPatch(image, label, split_value, Path(rel).stem))
    return out


def write_dataset(patches, out_dir) -> Path:
    """Write patches as PGM plus ``manifest.csv``; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "patches").mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "pathology", "split"])
        for p in patches:
            rel = f"patches/{p.source_id}.pgm"
            write_pgm(out_dir / rel, p.image)
            writer.writerow([rel, p.pathology.value, p.split.value])
    return manifest


# -- synthetic calcification patches ---------------------------------------


def _ordered(name, pair, positive=True):
    lo, hi = pair
    if lo > hi or (positive and lo <= 0):
        raise ValueError(f"{name} must be an ordered{' positive' if positive else ''} pair, got {pair}")
    return (float(lo), float(hi))


@dataclass
class SyntheticParams:
    """Generator settings; per-split counts are (malignant, benign, benign w/o callback)."""

    size: int = 64
    bit_depth: int = 16
    train_counts: tuple[int, int, int] = (100, 100, 100)
    validation_counts: tuple[int, int, int] = (0, 0, 0)
    test_counts: tuple[int, int, int] = (50, 50, 50)
    train_gamma: tuple[float, float] = (0.7, 1.4)
    test_gamma: tuple[float, float] = (0.5, 1.8)
    contrast_range: tuple[float, float] = (0.6, 1.0)
    background_level: float = 0.45
    noise_std: float = 0.04
    noise_blur: float = 2.5
    blob_amplitude: tuple[float, float] = (0.6, 0.9)

    def __post_init__(self):
        if self.size < 32:
            # blob layouts keep an 8-12 px margin from the border
            raise ValueError("size must be >= 32")
        if self.bit_depth not in (8, 16):
            raise ValueError("bit_depth must be 8 or 16")
        for name in ("train_counts", "validation_counts", "test_counts"):
            counts = tuple(int(c) for c in getattr(self, name))
            if len(counts) != 3 or min(counts) < 0:
                raise ValueError(f"{name} must hold three non-negative counts, got {counts}")
            setattr(self, name, counts)
        self.train_gamma = _ordered("train_gamma", self.train_gamma)
        self.test_gamma = _ordered("test_gamma", self.test_gamma)
        self.contrast_range = _ordered("contrast_range", self.contrast_range)
        self.blob_amplitude = _ordered("blob_amplitude", self.blob_amplitude)
        if self.contrast_range[1] > 1.0:
            raise ValueError("contrast_range must lie within (0, 1]")
        if not 0.0 < self.background_level < 1.0:
            raise ValueError("background_level must be in (0, 1)")
        if self.noise_std < 0 or self.noise_blur < 0:
            raise ValueError("noise_std and noise_blur must be >= 0")


def _blob(size, cy, cx, sy, sx, angle):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    dy, dx = yy - cy, xx - cx
    c, s = math.cos(angle), math.sin(angle)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return np.exp(-0.5 * ((u / sx) ** 2 + (v / sy) ** 2))


def _blob_layout(gen, pathology, size):
    """(cy, cx, sigma_y, sigma_x, angle, amplitude_scale) tuples per archetype."""
    margin = 8.0
    blobs = []
    if pathology is PathologyLabel.BENIGN_WITHOUT_CALLBACK:
        for _ in range(gen.integers(1, 3)):
            sigma = gen.uniform(3.0, 5.0)
            cy, cx = gen.uniform(margin + 2, size - margin - 2, size=2)
            blobs.append((cy, cx, sigma, sigma, 0.0, gen.uniform(0.8, 1.0)))
    elif pathology is PathologyLabel.BENIGN:
        for _ in range(gen.integers(2, 6)):
            sigma = gen.uniform(2.0, 3.0)
            cy, cx = gen.uniform(margin, size - margin, size=2)
            blobs.append((cy, cx, sigma, sigma, 0.0, gen.uniform(0.7, 1.0)))
    else:
        centre = gen.uniform(margin + 4, size - margin - 4, size=2)
        for _ in range(gen.integers(6, 16)):
            r = 10.0 * math.sqrt(gen.uniform())
            phi = gen.uniform(0, 2 * math.pi)
            cy = centre[0] + r * math.sin(phi)
            cx = centre[1] + r * math.cos(phi)
            sy, sx = gen.uniform(0.8, 1.5, size=2)
            blobs.append((cy, cx, sy, sx, gen.uniform(0, math.pi), gen.uniform(0.4, 1.0)))
    return blobs


def render_patch(gen: np.random.Generator, pathology: PathologyLabel, params: SyntheticParams):
    """Render one patch before the per-image gamma/contrast step.

    Returns ``(image, background, blob_mask)`` as float arrays in [0, 1];
    ``blob_mask`` marks pixels where blob signal exceeds 5% of its peak.
    """
    size = params.size
    noise = gaussian_filter(gen.standard_normal((size, size)), params.noise_blur, mode="reflect")
    noise *= params.noise_std / max(noise.std(), 1e-12)
    background = params.background_level + noise
    amp = gen.uniform(*params.blob_amplitude)
    signal = np.zeros((size, size))
    for cy, cx, sy, sx, angle, scale in _blob_layout(gen, pathology, size):
        signal += amp * scale * _blob(size, cy, cx, sy, sx, angle)
    image = np.clip(background + signal, 0.0, 1.0)
    mask = signal > 0.05 * signal.max() if signal.max() > 0 else np.zeros_like(signal, bool)
    return image, np.clip(background, 0.0, 1.0), mask


def _split_settings(params: SyntheticParams):
    return [
        (Split.TRAIN, params.train_counts, params.train_gamma),
        (Split.VALIDATION, params.validation_counts, params.train_gamma),
        (Split.TEST, params.test_counts, params.test_gamma),
    ]


def generate_synthetic_dataset(params: SyntheticParams | None = None, seed: int = 0) -> list[LabeledPatch]:
    """Deterministically generate labelled synthetic calcification patches.

    Each image gets a gamma from its split's range and a contrast scale
    about its mean; the test split's wider gamma range is a contrast shift
    relative to training.
    """
    params = params or SyntheticParams()
    gen = np.random.default_rng(seed)
    max_value = (1 << params.bit_depth) - 1
    out = []
    for split, counts, gamma_range in _split_settings(params):
        index = 0
        for pathology, count in zip(PathologyLabel, counts):
            for _ in range(count):
                image, _, _ = render_patch(gen, pathology, params)
                image = image ** gen.uniform(*gamma_range)
                contrast = gen.uniform(*params.contrast_range)
                mean = image.mean()
                image = np.clip(mean + contrast * (image - mean), 0.0, 1.0)
                pixels = np.floor(image * max_value + 0.5)
                out.append(
                    LabeledPatch(
                        IntensityPatch(pixels, params.bit_depth),
                        pathology,
                        split,
                        f"{split.value.lower()}_{index:05d}",
                    )
                )
                index += 1
    return out
