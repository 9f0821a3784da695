"""Deterministic visibility rendering and the two non-physical shading modes.

Visibility is one primary ray per pixel center through the BVH (identical
geometry semantics to the path tracer); shading is unlit Lambert-style math
over the resulting buffers with no shadow rays or indirect light.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bvh import Bvh, build_bvh
from .cameras import Camera
from .image_io import quantize8
from .scene import Scene, SceneNode


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


@dataclass
class VisBuffers:
    """Per-pixel visibility record from one camera.

    Background pixels: id 0, depth +inf, normal (0,0,0). Normals are unit
    camera-space vectors with +z toward the viewer. The triangle/uv/albedo
    planes are implementation extras reused by the shading passes.
    """
    instance: np.ndarray        # (h, w) int32
    category: np.ndarray        # (h, w) int32
    depth: np.ndarray           # (h, w) float64 view-axis meters, +inf background
    normal: np.ndarray          # (h, w, 3) float64 camera space
    triangle: np.ndarray        # (h, w) int32, -1 background
    albedo: np.ndarray          # (h, w, 3) float64
    world_normal: np.ndarray    # (h, w, 3) float64


def render_item_buffer(scene: Scene, camera: Camera, bvh: Bvh | None = None) -> np.ndarray:
    """Instance-id map only; the cheap probe used by camera scoring."""
    if bvh is None:
        bvh = build_bvh(scene)
    f = bvh.flat
    h, w = camera.height, camera.width
    dirs = camera.ray_dirs().reshape(-1, 3)
    origins = np.broadcast_to(camera.position, (h * w, 3))
    tri, _, _, _ = bvh.intersect_many(origins, dirs)
    instance = np.zeros(h * w, dtype=np.int32)
    hit = tri >= 0
    if hit.any() and f.n_tris:
        instance[hit] = f.node_instance[f.tri_node[tri[hit]]]
    return instance.reshape(h, w)


def render_visibility(scene: Scene, camera: Camera, bvh: Bvh | None = None) -> VisBuffers:
    """Item buffers for one camera: ids, view-axis depth, camera-space normals."""
    if bvh is None:
        bvh = build_bvh(scene)
    f = bvh.flat
    h, w = camera.height, camera.width
    dirs = camera.ray_dirs().reshape(-1, 3)
    origins = np.broadcast_to(camera.position, (h * w, 3))
    tri, t, u, v = bvh.intersect_many(origins, dirs)

    hit = tri >= 0
    tri_safe = np.where(hit, tri, 0)
    right, up, forward = camera.basis()

    instance = np.zeros(h * w, dtype=np.int32)
    category = np.zeros(h * w, dtype=np.int32)
    depth = np.full(h * w, np.inf)
    normal_w = np.zeros((h * w, 3))
    albedo = np.zeros((h * w, 3))

    if hit.any() and f.n_tris:
        node_idx = f.tri_node[tri_safe]
        instance[hit] = f.node_instance[node_idx][hit]
        category[hit] = f.node_category[node_idx][hit]
        depth[hit] = (t * (dirs @ forward))[hit]

        w0 = (1.0 - u - v)[:, None]
        sn = w0 * f.tn0[tri_safe] + u[:, None] * f.tn1[tri_safe] + v[:, None] * f.tn2[tri_safe]
        lens = np.linalg.norm(sn, axis=1)
        bad = lens < 1e-12
        sn[bad] = f.tgn[tri_safe][bad]
        sn[~bad] /= lens[~bad, None]
        # align with the geometric normal facing the ray for two-sided materials
        gn = f.tgn[tri_safe].copy()
        two = f.mat_two[f.tri_mat[tri_safe]].astype(bool)
        back = np.einsum("ij,ij->i", gn, dirs) > 0
        gn[two & back] = -gn[two & back]
        flip = np.einsum("ij,ij->i", sn, gn) < 0
        sn[flip & two] = -sn[flip & two]
        normal_w[hit] = sn[hit]
        albedo[hit] = _albedo_at(f, tri_safe, u, v)[hit]

    cam_mat = np.vstack([right, up, -forward])
    normal_c = normal_w @ cam_mat.T

    return VisBuffers(
        instance=instance.reshape(h, w),
        category=category.reshape(h, w),
        depth=depth.reshape(h, w),
        normal=normal_c.reshape(h, w, 3),
        triangle=np.where(hit, tri, -1).astype(np.int32).reshape(h, w),
        albedo=albedo.reshape(h, w, 3),
        world_normal=normal_w.reshape(h, w, 3),
    )


def _albedo_at(f, tri, u, v) -> np.ndarray:
    """Per-ray diffuse albedo, sampling nearest texel for textured materials."""
    mat = f.tri_mat[tri]
    out = f.mat_diffuse[mat].copy()
    tex = f.mat_tex[mat]
    textured = tex >= 0
    if not textured.any():
        return out
    w0 = (1.0 - u - v)[:, None]
    uv = w0 * f.tuv0[tri] + u[:, None] * f.tuv1[tri] + v[:, None] * f.tuv2[tri]
    ti = tex[textured]
    tw = f.tex_w[ti]
    th = f.tex_h[ti]
    iu = np.floor(uv[textured, 0] * tw).astype(np.int64) % tw
    iv = np.floor(uv[textured, 1] * th).astype(np.int64) % th
    base = f.tex_off[ti] + (iv * tw + iu) * 3
    out[textured] = np.stack([f.tex_data[base], f.tex_data[base + 1],
                              f.tex_data[base + 2]], axis=1)
    return out


@dataclass
class DirectionalRig:
    """Headlight along the view direction plus two diagonal fill lights."""
    headlight_weight: float = 0.7
    fill_dirs: tuple = (
        (1.0, 0.5, 1.0),
        (-1.0, 0.5, -0.8),
    )
    fill_weights: tuple = (0.25, 0.25)
    ambient: float = 0.3


def shade_directional(scene: Scene, camera: Camera, vis: VisBuffers,
                      rig: DirectionalRig | None = None) -> np.ndarray:
    """8-bit render with directional lights only; no shadows, no falloff."""
    rig = rig or DirectionalRig()
    _, _, forward = camera.basis()
    hit = vis.instance > 0
    n = vis.world_normal

    lit = np.full(n.shape[:2], rig.ambient)
    lights = [(-forward, rig.headlight_weight)]
    lights += [(_unit(d), wt) for d, wt in zip(rig.fill_dirs, rig.fill_weights)]
    for ldir, wt in lights:
        lit += wt * np.maximum(0.0, n @ ldir)
    color = vis.albedo * lit[:, :, None]
    color[~hit] = 0.0
    return quantize8(color)


@dataclass
class LocalLight:
    kind: str                   # "point" | "spot"
    position: np.ndarray        # m
    intensity: np.ndarray       # RGB, W/sr
    axis: np.ndarray | None = None
    cone_half_angle: float = 0.0
    power: float = 0.0          # scalar ranking key


def fit_local_lights(node: SceneNode, scene: Scene, max_lights: int = 8) -> list[LocalLight]:
    """Approximate a node's emissive face groups with point/spot lights.

    Each emissive group becomes a point light at its area-weighted centroid
    with intensity = total emitted power / 4pi, or a spot (axis = mean
    normal, half-angle 60 deg, intensity = power / cone solid angle) when
    all face normals lie within 30 deg of the mean. Strongest max_lights by
    power are kept.
    """
    if not node.emitter:
        return []
    mesh = scene.meshes[node.mesh]
    m = node.transform
    rot = m[:3, :3]
    pos = mesh.positions @ rot.T + m[:3, 3]
    lights: list[LocalLight] = []
    for g in mesh.groups:
        mat = scene.materials[g.material]
        if not mat.is_emissive:
            continue
        tris = mesh.triangles[g.triangles]
        a, b, c = pos[tris[:, 0]], pos[tris[:, 1]], pos[tris[:, 2]]
        cross = np.cross(b - a, c - a)
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        total_area = float(areas.sum())
        if total_area <= 0:
            continue
        centroid = ((a + b + c) / 3.0 * areas[:, None]).sum(axis=0) / total_area
        sides = 2.0 if mat.two_sided else 1.0
        emission = np.asarray(mat.emission)
        power_rgb = emission * math.pi * total_area * sides
        power = float(power_rgb.mean())

        lens = np.linalg.norm(cross, axis=1)
        lens[lens == 0] = 1.0
        fnormals = cross / lens[:, None]
        mean_n = (fnormals * areas[:, None]).sum(axis=0)
        mlen = np.linalg.norm(mean_n)
        spot = False
        if mlen > 1e-9:
            mean_n = mean_n / mlen
            cos_spread = fnormals @ mean_n
            spot = bool(np.all(cos_spread >= math.cos(math.radians(30.0))))
        if spot:
            omega = 2.0 * math.pi * (1.0 - math.cos(math.radians(60.0)))
            lights.append(LocalLight("spot", centroid, power_rgb / omega,
                                     axis=mean_n,
                                     cone_half_angle=math.radians(60.0),
                                     power=power))
        else:
            lights.append(LocalLight("point", centroid,
                                     power_rgb / (4.0 * math.pi), power=power))
    lights.sort(key=lambda l: -l.power)
    return lights[:max_lights]


def scene_local_lights(scene: Scene, max_lights: int = 8) -> list[LocalLight]:
    out = []
    for node in scene.nodes:
        if node.emitter:
            out.extend(fit_local_lights(node, scene, max_lights))
    return out


def shade_local(scene: Scene, camera: Camera, vis: VisBuffers,
                lights: list[LocalLight], ambient: float = 0.15) -> np.ndarray:
    """8-bit render with fitted point/spot lights; inverse-square falloff,
    hard spot cones, no occlusion tests."""
    h, w = vis.instance.shape
    hit = vis.instance > 0
    dirs = camera.ray_dirs()
    depth = np.where(np.isfinite(vis.depth), vis.depth, 0.0)
    ray_t = depth / np.maximum(dirs @ camera.basis()[2], 1e-12)
    points = camera.position[None, None, :] + ray_t[:, :, None] * dirs
    n = vis.world_normal

    lit = np.full((h, w, 3), ambient)
    for light in lights:
        to_l = light.position[None, None, :] - points
        d2 = np.sum(to_l * to_l, axis=2)
        d2 = np.maximum(d2, 1e-12)
        wl = to_l / np.sqrt(d2)[:, :, None]
        cos = np.maximum(0.0, np.einsum("hwc,hwc->hw", n, wl))
        fall = cos / d2
        if light.kind == "spot":
            inside = (-wl) @ light.axis >= math.cos(light.cone_half_angle)
            fall = np.where(inside, fall, 0.0)
        lit += light.intensity[None, None, :] * fall[:, :, None]
    color = vis.albedo * lit
    color[~hit] = 0.0
    return quantize8(color)
