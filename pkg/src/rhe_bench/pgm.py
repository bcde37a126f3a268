"""Binary PGM (P5) reading and writing, with grayscale PNG ingest via Pillow."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .image import IntensityPatch


class PatchFormatError(ValueError):
    pass


def _tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    i = 0
    while len(out) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise PatchFormatError("truncated PGM header")
        out.append(data[start:i])
    # exactly one whitespace byte separates the header from the raster
    return out, i + 1


def decode_pgm(data: bytes) -> IntensityPatch:
    (magic, w, h, maxval), offset = _tokens(data, 4)
    if magic != b"P5":
        raise PatchFormatError(f"not a binary PGM (magic {magic!r})")
    width, height, maxval = int(w), int(h), int(maxval)
    if maxval == 255:
        dtype, depth = np.dtype("u1"), 8
    elif maxval == 65535:
        dtype, depth = np.dtype(">u2"), 16
    else:
        raise PatchFormatError(f"unsupported maxval {maxval}; expected 255 or 65535")
    expected = width * height * dtype.itemsize
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise PatchFormatError(f"PGM raster truncated: {len(raster)} of {expected} bytes")
    pixels = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    return IntensityPatch(pixels.astype(np.uint8 if depth == 8 else np.uint16), depth)


def encode_pgm(patch: IntensityPatch) -> bytes:
    header = f"P5\n{patch.width} {patch.height}\n{patch.max_value}\n".encode("ascii")
    dtype = "u1" if patch.bit_depth == 8 else ">u2"
    return header + patch.pixels.astype(dtype).tobytes()


def read_pgm(path) -> IntensityPatch:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path, patch: IntensityPatch) -> None:
    Path(path).write_bytes(encode_pgm(patch))


def read_png(path) -> IntensityPatch:
    from PIL import Image

    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(img, dtype=np.int64)
            return IntensityPatch(np.clip(arr, 0, 65535), 16)
        if img.mode != "L":
            raise PatchFormatError(f"{path}: expected a grayscale PNG, got mode {img.mode}")
        return IntensityPatch(np.asarray(img, dtype=np.uint8), 8)


def read_patch(path) -> IntensityPatch:
    """Load a patch by extension: ``.pgm`` always, ``.png`` through Pillow."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        return read_png(path)
    raise PatchFormatError(f"{path}: unsupported patch format {suffix!r}")
