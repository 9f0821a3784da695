"""Physically based backend: unidirectional path tracing with next-event
estimation over area emitters and the environment map, combined by multiple
importance sampling (power heuristic).

Lambertian diffuse + perfectly transmissive windows only. Per-pixel RNG
streams are derived from (seed, x, y, sample), so output is bit-identical
for any worker count.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bvh import Bvh, build_bvh
from .cameras import Camera
from .envmap import EnvironmentMap
from .errors import ConfigError
from .image_io import quantize8
from .kernels import impl as _kernels

LIGHTING_MODES = ("outdoor-only", "indoor+outdoor")


@dataclass
class PathConfig:
    spp: int = 256
    max_depth: int = 8
    rr_start: int = 4
    lighting_mode: str = "indoor+outdoor"
    env: EnvironmentMap | None = None
    exposure_stops: float = 0.0
    gamma: float = 2.2
    seed: int = 0
    workers: int = 1

    def validate(self):
        if self.spp < 1:
            raise ConfigError("spp must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        if self.lighting_mode not in LIGHTING_MODES:
            raise ConfigError(f"lighting_mode must be one of {LIGHTING_MODES}")
        if self.env is None:
            raise ConfigError("path rendering requires an environment map "
                              "(both lighting modes include outdoor light)")


@dataclass
class RenderStats:
    nan_samples: int = 0
    seconds: float = 0.0


class EmitterTable:
    """Power-weighted CDF over emissive triangles for next-event estimation.

    pdf_area[tri] is the per-area selection density (P_i / (total power *
    area_i)); zero for non-emissive triangles.
    """

    def __init__(self, flat):
        emission = flat.mat_emission
        lum = emission.mean(axis=1)
        tri_lum = lum[flat.tri_mat] if flat.n_tris else np.zeros(0)
        cross = np.cross(flat.te1, flat.te2) if flat.n_tris else np.zeros((0, 3))
        areas = 0.5 * np.linalg.norm(cross, axis=1) if flat.n_tris else np.zeros(0)
        sides = np.where(flat.mat_two[flat.tri_mat].astype(bool), 2.0, 1.0) \
            if flat.n_tris else np.zeros(0)
        powers = tri_lum * math.pi * areas * sides
        sel = np.nonzero(powers > 0)[0].astype(np.int32)
        self.tri = sel
        self.pdf_area = np.zeros(max(flat.n_tris, 1))
        if len(sel):
            p = powers[sel]
            total = p.sum()
            cdf = np.cumsum(p) / total
            cdf[-1] = 1.0
            self.cdf = np.ascontiguousarray(cdf)
            good = areas[sel] > 0
            self.pdf_area[sel[good]] = (p[good] / total) / areas[sel][good]
        else:
            self.cdf = np.zeros(0)
        self.pdf_area = np.ascontiguousarray(self.pdf_area)


def render_path(scene, camera: Camera, cfg: PathConfig,
                bvh: Bvh | None = None) -> np.ndarray:
    img, _ = render_path_ex(scene, camera, cfg, bvh)
    return img


def render_path_ex(scene, camera: Camera, cfg: PathConfig,
                   bvh: Bvh | None = None) -> tuple[np.ndarray, RenderStats]:
    """Monte Carlo estimate of per-pixel radiance (HDR float64 image).

    Deterministic in (scene, camera, cfg.seed); NaN samples are replaced by
    zero and counted in the returned stats.
    """
    cfg.validate()
    if bvh is None:
        bvh = build_bvh(scene)
    f = bvh.flat
    emitters = EmitterTable(f)
    indoor_on = 1 if cfg.lighting_mode == "indoor+outdoor" else 0
    env = cfg.env
    env_img = env.radiance
    env_marg = env.marginal_cdf
    env_cond = env.conditional_cdf
    env_pdf = env.pdf

    h, w = camera.height, camera.width
    out = np.zeros((h, w, 3))
    cam = camera.pack()
    args_head = (bvh.nbounds, bvh.nchild, bvh.ncount, bvh.naxis, bvh.prim,
                 f.tv0, f.te1, f.te2, f.tgn, f.tn0, f.tn1, f.tn2,
                 f.tuv0, f.tuv1, f.tuv2, f.tri_mat, f.tri_block,
                 f.mat_diffuse, f.mat_alpha, f.mat_emission, f.mat_two, f.mat_tex,
                 f.tex_data, f.tex_off, f.tex_w, f.tex_h,
                 emitters.tri, emitters.cdf, emitters.pdf_area,
                 env_img, env_marg, env_cond, env_pdf, cam,
                 cfg.spp, cfg.max_depth, cfg.rr_start, cfg.seed & ((1 << 64) - 1),
                 indoor_on, 1)

    t0 = time.perf_counter()
    workers = max(1, cfg.workers)
    if workers == 1 or h < 2 * workers:
        nans = _kernels.render_path_rows(*args_head, out, 0, h)
    else:
        bounds = np.linspace(0, h, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_kernels.render_path_rows, *args_head, out,
                              int(bounds[i]), int(bounds[i + 1]))
                    for i in range(workers) if bounds[i] < bounds[i + 1]]
            nans = sum(fut.result() for fut in futs)
    return out, RenderStats(nan_samples=int(nans),
                            seconds=time.perf_counter() - t0)


def tonemap(hdr: np.ndarray, exposure_stops: float = 0.0,
            gamma: float = 2.2) -> np.ndarray:
    """clamp(v * 2^stops)^(1/gamma), quantized by round-half-up to 8 bits."""
    v = np.clip(hdr * (2.0 ** exposure_stops), 0.0, 1.0)
    if gamma != 1.0:
        v = v ** (1.0 / gamma)
    return quantize8(v)


def integrator_benchmark(scene, camera: Camera, spp_list: list[int],
                         cfg: PathConfig | None = None,
                         bvh: Bvh | None = None) -> list[dict]:
    """Render at each spp and report wall time plus per-pixel variance
    against the highest-spp render as reference. Rows sorted by spp."""
    if not spp_list:
        raise ConfigError("spp_list must be nonempty")
    cfg = cfg or PathConfig(env=EnvironmentMap.constant(1.0))
    if bvh is None:
        bvh = build_bvh(scene)
    spp_sorted = sorted(set(spp_list))
    renders = {}
    times = {}
    for spp in spp_sorted:
        t0 = time.perf_counter()
        renders[spp] = render_path(scene, camera, replace(cfg, spp=spp), bvh=bvh)
        times[spp] = time.perf_counter() - t0
    ref = renders[spp_sorted[-1]]
    rows = []
    for spp in spp_sorted:
        diff = renders[spp] - ref
        rows.append({
            "spp": spp,
            "seconds": times[spp],
            "variance": float(np.mean(diff * diff)),
        })
    return rows


def write_benchmark_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["spp", "seconds", "variance"])
        writer.writeheader()
        writer.writerows(rows)
