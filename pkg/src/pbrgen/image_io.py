"""PNG and float32 image helpers.

Color images are 8-bit RGB PNG. Depth maps are 16-bit grayscale PNG in
millimeters (0 = invalid/background, max 65.535 m). HDR grids use a small
binary float32 container (magic ``PBRIMG1``), documented in docs/formats.md.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

_MAGIC = b"PBRIMG1\n"


def write_rgb8(path: str | Path, img: np.ndarray) -> None:
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("write_rgb8 expects (h, w, 3) uint8")
    Image.fromarray(img, "RGB").save(path, format="PNG")


def read_rgb8(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def write_gray16(path: str | Path, img: np.ndarray) -> None:
    if img.dtype != np.uint16 or img.ndim != 2:
        raise ValueError("write_gray16 expects (h, w) uint16")
    Image.fromarray(img).save(path, format="PNG")


def read_gray16(path: str | Path) -> np.ndarray:
    arr = np.asarray(Image.open(path))
    if arr.dtype not in (np.uint16, np.int32, np.uint8):
        raise ValueError(f"{path}: unexpected dtype {arr.dtype}")
    return arr.astype(np.uint16)


def write_gray8(path: str | Path, img: np.ndarray) -> None:
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError("write_gray8 expects (h, w) uint8")
    Image.fromarray(img, "L").save(path, format="PNG")


def read_gray8(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L"), dtype=np.uint8)


def write_float_image(path: str | Path, img: np.ndarray) -> None:
    """Binary float32 RGB grid: magic, uint32 width/height, row-major data."""
    img = np.ascontiguousarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("write_float_image expects (h, w, 3)")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(img.tobytes())


def read_float_image(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a PBRIMG1 float image")
        w, h = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(w * h * 12), dtype=np.float32)
    if data.size != w * h * 3:
        raise ValueError(f"{path}: truncated float image")
    return data.reshape(h, w, 3).copy()


def depth_to_mm(depth_m: np.ndarray) -> np.ndarray:
    """View-axis depth in meters -> uint16 millimeters.

    Background/invalid (non-finite or <= 0) maps to 0; valid hits clamp to
    [1, 65535] so no real surface quantizes to the invalid value.
    """
    out = np.zeros(depth_m.shape, dtype=np.uint16)
    valid = np.isfinite(depth_m) & (depth_m > 0)
    mm = np.floor(depth_m[valid] * 1000.0 + 0.5)
    out[valid] = np.clip(mm, 1, 65535).astype(np.uint16)
    return out


def quantize8(img: np.ndarray) -> np.ndarray:
    """[0,1] float -> uint8 with round-half-up (floor(v*255 + 0.5))."""
    v = np.clip(img, 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)
