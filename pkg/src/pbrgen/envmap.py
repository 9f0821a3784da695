"""Equirectangular HDR environment maps with luminance-CDF importance sampling.

Directions map to longitude/latitude texels; radiance lookups are bilinear.
The sampling tables (row marginal CDF, per-row conditional CDFs, texel pdf
grid) are built once in float64 and shared by both kernel backends.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .image_io import read_float_image, write_float_image


class EnvironmentMap:
    def __init__(self, radiance: np.ndarray):
        radiance = np.ascontiguousarray(radiance, dtype=np.float64)
        if radiance.ndim != 3 or radiance.shape[2] != 3:
            raise ConfigError("environment map must be (h, w, 3)")
        if not np.isfinite(radiance).all() or (radiance < 0).any():
            raise ConfigError("environment radiance must be finite and >= 0")
        self.radiance = radiance
        h, w = radiance.shape[:2]
        lum = (0.2126 * radiance[:, :, 0] + 0.7152 * radiance[:, :, 1]
               + 0.0722 * radiance[:, :, 2])
        # small floor keeps every texel samplable (pdf > 0 wherever L > 0)
        floor = 1e-3 * float(lum.mean()) if lum.any() else 1.0
        sin_theta = np.sin((np.arange(h) + 0.5) * math.pi / h)
        weights = (lum + floor) * sin_theta[:, None]
        total = weights.sum()
        self.pdf = np.ascontiguousarray(weights * (h * w) / total)
        row_sums = weights.sum(axis=1)
        marg = np.cumsum(row_sums) / total
        marg[-1] = 1.0
        self.marginal_cdf = np.ascontiguousarray(marg)
        cond = np.cumsum(weights, axis=1)
        cond = cond / cond[:, -1:]
        cond[:, -1] = 1.0
        self.conditional_cdf = np.ascontiguousarray(cond)

    @property
    def shape(self) -> tuple[int, int]:
        return self.radiance.shape[:2]

    def eval_dirs(self, dirs: np.ndarray) -> np.ndarray:
        """Bilinear radiance lookup for an (n, 3) array of unit directions."""
        h, w = self.shape
        dy = np.clip(dirs[:, 1], -1.0, 1.0)
        theta = np.arccos(dy)
        phi = np.arctan2(dirs[:, 0], -dirs[:, 2])
        u = (phi + math.pi) / (2.0 * math.pi)
        u = np.where(u >= 1.0, 0.0, u)
        v = theta / math.pi
        fu = u * w - 0.5
        fv = v * h - 0.5
        i0 = np.floor(fu).astype(np.int64)
        j0f = np.floor(fv).astype(np.int64)
        du = (fu - i0)[:, None]
        dv = (fv - j0f)[:, None]
        i0 = i0 % w
        i1 = (i0 + 1) % w
        j0 = np.clip(j0f, 0, h - 1)
        j1 = np.clip(j0f + 1, 0, h - 1)
        r = self.radiance
        return ((1 - du) * (1 - dv) * r[j0, i0] + du * (1 - dv) * r[j0, i1]
                + (1 - du) * dv * r[j1, i0] + du * dv * r[j1, i1])

    @classmethod
    def constant(cls, value: float | tuple = 1.0, size: tuple[int, int] = (16, 32)):
        rad = np.empty((size[0], size[1], 3))
        rad[:] = np.asarray(value, dtype=np.float64)
        return cls(rad)

    @classmethod
    def load(cls, path: str | Path) -> "EnvironmentMap":
        return cls(read_float_image(path).astype(np.float64))

    def save(self, path: str | Path) -> None:
        write_float_image(path, self.radiance.astype(np.float32))
