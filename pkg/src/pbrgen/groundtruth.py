"""Per-view ground-truth channels and the frame bundle directory format.

A bundle holds color, depth (16-bit mm), encoded normals, semantic ids,
instance ids, the instance-boundary mask, and a meta record; layout is
documented in docs/formats.md.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cameras import Camera
from .errors import BundleError
from .image_io import (
    read_gray8,
    read_gray16,
    read_rgb8,
    write_gray8,
    write_gray16,
    write_rgb8,
)

BUNDLE_FORMAT_VERSION = 1
BACKEND_TAGS = ("raster-dl", "raster-il", "path-ol", "path-ilol")

_CHANNEL_FILES = {
    "color": "color.png",
    "depth": "depth.png",
    "normal": "normal.png",
    "semantic": "semantic.png",
    "instance": "instance.png",
    "boundary": "boundary.png",
}


def encode_normal(n: np.ndarray) -> np.ndarray:
    """Unit camera-space vector -> RGB bytes: floor(0.5*(n+1)*255 + 0.5).

    The zero vector (background) encodes to (0,0,0); depth 0 disambiguates.
    Accepts a single vector or an (h, w, 3) map.
    """
    n = np.asarray(n, dtype=np.float64)
    lens = np.linalg.norm(n, axis=-1)
    zero = lens < 1e-12
    bad = ~zero & (np.abs(lens - 1.0) > 1e-4)
    if np.any(bad):
        raise BundleError("encode_normal: non-unit nonzero normal")
    enc = np.floor(0.5 * (n + 1.0) * 255.0 + 0.5).astype(np.uint8)
    enc[zero] = 0
    return enc


def decode_normal(rgb: np.ndarray) -> np.ndarray:
    """Inverse of encode_normal; (0,0,0) decodes to the zero vector."""
    rgb = np.asarray(rgb)
    n = rgb.astype(np.float64) / 255.0 * 2.0 - 1.0
    zero = (rgb == 0).all(axis=-1)
    lens = np.linalg.norm(n, axis=-1)
    lens = np.where(lens < 1e-12, 1.0, lens)
    n = n / lens[..., None]
    n[zero] = 0.0
    return n


def extract_boundaries(instance_map: np.ndarray) -> np.ndarray:
    """Single-pixel-thin boundary mask: a pixel is marked iff its right or
    down 4-neighbor holds a different id. Image border pixels are not
    boundaries by position alone."""
    m = np.asarray(instance_map)
    out = np.zeros(m.shape, dtype=bool)
    out[:, :-1] |= m[:, :-1] != m[:, 1:]
    out[:-1, :] |= m[:-1, :] != m[1:, :]
    return out


@dataclass
class FrameBundle:
    color: np.ndarray           # (h, w, 3) uint8
    depth: np.ndarray           # (h, w) uint16 millimeters, 0 invalid
    normal: np.ndarray          # (h, w, 3) uint8 encoded
    semantic: np.ndarray        # (h, w) uint16 category ids
    instance: np.ndarray        # (h, w) uint16 instance ids
    boundary: np.ndarray        # (h, w) bool
    camera: Camera
    backend: str
    seed: int = 0

    def validate(self) -> None:
        if self.backend not in BACKEND_TAGS:
            raise BundleError(f"unknown backend tag '{self.backend}'")
        shapes = {self.color.shape[:2], self.depth.shape, self.normal.shape[:2],
                  self.semantic.shape, self.instance.shape, self.boundary.shape}
        if len(shapes) != 1:
            raise BundleError(f"channel resolution mismatch: {sorted(shapes)}")


def write_bundle(bundle: FrameBundle, directory: str | Path) -> None:
    bundle.validate()
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_rgb8(d / "color.png", bundle.color)
    write_gray16(d / "depth.png", bundle.depth)
    write_rgb8(d / "normal.png", bundle.normal)
    write_gray16(d / "semantic.png", bundle.semantic)
    write_gray16(d / "instance.png", bundle.instance)
    write_gray8(d / "boundary.png", bundle.boundary.astype(np.uint8) * 255)
    meta = (f"format_version {BUNDLE_FORMAT_VERSION}\n"
            f"backend {bundle.backend}\n"
            f"seed {bundle.seed}\n"
            f"camera {bundle.camera.to_line()}\n")
    (d / "meta.txt").write_text(meta, encoding="utf-8")


def read_bundle(directory: str | Path) -> FrameBundle:
    d = Path(directory)
    for key, fname in _CHANNEL_FILES.items():
        if not (d / fname).exists():
            raise BundleError(f"bundle {d}: missing channel '{key}' ({fname})")
    if not (d / "meta.txt").exists():
        raise BundleError(f"bundle {d}: missing meta.txt")
    meta = {}
    for line in (d / "meta.txt").read_text(encoding="utf-8").splitlines():
        k, _, v = line.partition(" ")
        meta[k] = v
    bundle = FrameBundle(
        color=read_rgb8(d / "color.png"),
        depth=read_gray16(d / "depth.png"),
        normal=read_rgb8(d / "normal.png"),
        semantic=read_gray16(d / "semantic.png"),
        instance=read_gray16(d / "instance.png"),
        boundary=read_gray8(d / "boundary.png") > 127,
        camera=Camera.from_line(meta["camera"]),
        backend=meta.get("backend", ""),
        seed=int(meta.get("seed", 0)),
    )
    bundle.validate()
    return bundle


def check_bundle_consistency(bundle: FrameBundle) -> list[str]:
    """Channel invariants; returns human-readable violations (empty = ok)."""
    problems = []
    if not np.array_equal(bundle.boundary, extract_boundaries(bundle.instance)):
        problems.append("boundary mask != extract_boundaries(instance map)")
    fg = bundle.semantic > 0
    if np.any(bundle.depth[fg] == 0):
        problems.append("non-background semantic pixel with zero depth")
    bg = bundle.instance == 0
    if np.any(bundle.normal[bg] != 0):
        problems.append("background pixel with nonzero normal")
    if np.any(bundle.depth[bg] != 0):
        problems.append("background pixel with nonzero depth")
    if np.any((bundle.semantic > 0) != (bundle.instance > 0)):
        problems.append("semantic/instance background masks differ")
    return problems
