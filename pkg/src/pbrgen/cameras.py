"""Camera model and viewpoint sampling.

In-context sampling picks the best view per 60-degree yaw sector from a
dense grid of candidates inside each room; object-without-context sampling
places cameras on icosphere directions around an object's bounding box.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PbrgenError
from .scene import Room, Scene, point_in_polygon


@dataclass
class Camera:
    id: str
    position: np.ndarray        # (3,) meters
    yaw: float                  # rad, about +y; 0 looks along +x
    pitch: float                # rad, downward tilt positive
    hfov: float                 # rad, horizontal field of view
    width: int
    height: int

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if not 0 < self.hfov < math.pi:
            raise PbrgenError(f"camera '{self.id}': hfov must be in (0, pi)")
        if self.width <= 0 or self.height <= 0:
            raise PbrgenError(f"camera '{self.id}': image size must be positive")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward) in world space."""
        cp = math.cos(self.pitch)
        forward = np.array([cp * math.cos(self.yaw),
                            -math.sin(self.pitch),
                            cp * math.sin(self.yaw)])
        world_up = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, world_up)
        n = np.linalg.norm(right)
        if n < 1e-9:
            right = np.array([0.0, 0.0, 1.0]) if forward[1] < 0 else np.array([0.0, 0.0, -1.0])
        else:
            right = right / n
        up = np.cross(right, forward)
        return right, up, forward

    def tan_half(self) -> tuple[float, float]:
        tx = math.tan(self.hfov / 2.0)
        return tx, tx * self.height / self.width

    def ray_dirs(self) -> np.ndarray:
        """(h, w, 3) unit directions through pixel centers."""
        right, up, forward = self.basis()
        tx, ty = self.tan_half()
        xs = ((np.arange(self.width) + 0.5) / self.width) * 2.0 - 1.0
        ys = 1.0 - ((np.arange(self.height) + 0.5) / self.height) * 2.0
        d = (forward[None, None, :]
             + xs[None, :, None] * tx * right[None, None, :]
             + ys[:, None, None] * ty * up[None, None, :])
        return d / np.linalg.norm(d, axis=2, keepdims=True)

    def pack(self) -> np.ndarray:
        """Flat float64 layout consumed by the path-tracing kernels."""
        right, up, forward = self.basis()
        tx, ty = self.tan_half()
        return np.ascontiguousarray(
            np.concatenate([self.position, right, up, forward, [tx, ty]]))

    def with_size(self, width: int, height: int) -> "Camera":
        return replace(self, width=width, height=height)

    def to_line(self) -> str:
        p = [float(x) for x in self.position]
        return (f"{self.id} {p[0]!r} {p[1]!r} {p[2]!r} {float(self.yaw)!r} "
                f"{float(self.pitch)!r} {float(self.hfov)!r} "
                f"{self.width} {self.height}")

    @classmethod
    def from_line(cls, line: str) -> "Camera":
        parts = line.split()
        if len(parts) != 9:
            raise PbrgenError(f"bad camera record: {line!r}")
        return cls(id=parts[0],
                   position=np.array([float(parts[1]), float(parts[2]), float(parts[3])]),
                   yaw=float(parts[4]), pitch=float(parts[5]), hfov=float(parts[6]),
                   width=int(parts[7]), height=int(parts[8]))


def save_cameras(cameras: list[Camera], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for c in cameras:
            f.write(c.to_line() + "\n")


def load_cameras(path) -> list[Camera]:
    cams = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                cams.append(Camera.from_line(line))
    return cams


@dataclass
class CameraParams:
    grid_resolution: float = 0.25       # m
    sector_count: int = 6
    height_range: tuple[float, float] = (1.5, 1.6)   # m above floor
    tilt_deg: float = 11.0
    clearance: float = 0.10             # m from any obstacle
    min_objects: int = 3
    min_coverage: float = 0.01          # fraction of pixels per object
    hfov_deg: float = 60.0
    probe_size: tuple[int, int] = (320, 240)   # (w, h) of scoring item buffers
    seed: int = 0

    def validate(self):
        if self.grid_resolution <= 0:
            raise PbrgenError("grid_resolution must be > 0")
        if not 0 <= self.min_coverage <= 1:
            raise PbrgenError("min_coverage must be in [0, 1]")
        if self.sector_count < 1:
            raise PbrgenError("sector_count must be >= 1")


@dataclass
class ObjectViewParams:
    subdivision: int = 2
    distance_range: tuple[float, float] = (1.5, 4.5)   # multiples of bbox diagonal
    cameras_per_object: int = 20
    hfov_deg: float = 60.0
    image_size: tuple[int, int] = (320, 240)
    seed: int = 0

    def validate(self):
        if self.subdivision < 0:
            raise PbrgenError("subdivision must be >= 0")
        lo, hi = self.distance_range
        if lo <= 0 or hi < lo:
            raise PbrgenError("distance_range must be positive and ordered")


@dataclass
class CoverageReport:
    fractions: dict[int, float] = field(default_factory=dict)  # instance id -> pixel fraction
    object_fraction: float = 0.0
    object_count: int = 0

    def qualifying_objects(self, scene: Scene, min_coverage: float) -> int:
        n = 0
        for iid, frac in self.fractions.items():
            node = scene.node_by_id(iid)
            if scene.categories.is_object(node.category) and frac >= min_coverage:
                n += 1
        return n


def coverage_report(instance_map: np.ndarray, scene: Scene) -> CoverageReport:
    """Per-instance pixel fractions; objects exclude wall/ceiling/floor."""
    total = instance_map.size
    ids, counts = np.unique(instance_map, return_counts=True)
    rep = CoverageReport()
    for iid, cnt in zip(ids.tolist(), counts.tolist()):
        if iid == 0:
            continue
        try:
            node = scene.node_by_id(iid)
        except KeyError:
            raise PbrgenError(f"coverage_report: unknown instance id {iid}") from None
        frac = cnt / total
        rep.fractions[iid] = frac
        if scene.categories.is_object(node.category):
            rep.object_fraction += frac
            rep.object_count += 1
    return rep


def stable_seed(*parts) -> int:
    """Deterministic 64-bit seed from string/int parts (scheduling-independent)."""
    h = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _min_distance_to_tris(point: np.ndarray, v0, e1, e2) -> float:
    """Exact point-to-triangle distance (Ericson regions), min over all tris."""
    if len(v0) == 0:
        return float("inf")
    ab, ac = e1, e2
    ap = point[None, :] - v0
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = ap - ab
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = ap - ac
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.clip(d1 / (d1 - d3), 0.0, 1.0)
        v_ac = np.clip(d2 / (d2 - d6), 0.0, 1.0)
        v_bc = np.clip((d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0, 1.0)
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom
    for arr in (v_ab, v_ac, v_bc, v_in, w_in):
        np.nan_to_num(arr, copy=False)

    closest = v0 + v_in[:, None] * ab + w_in[:, None] * ac       # interior
    m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)              # edge BC
    closest[m] = (v0 + ab)[m] + v_bc[m, None] * (ac - ab)[m]
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)                        # edge AC
    closest[m] = v0[m] + v_ac[m, None] * ac[m]
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)                        # edge AB
    closest[m] = v0[m] + v_ab[m, None] * ab[m]
    m = (d6 >= 0) & (d5 <= d6)                                   # vertex C
    closest[m] = (v0 + ac)[m]
    m = (d3 >= 0) & (d4 <= d3)                                   # vertex B
    closest[m] = (v0 + ab)[m]
    m = (d1 <= 0) & (d2 <= 0)                                    # vertex A
    closest[m] = v0[m]
    dist2 = np.sum((point[None, :] - closest) ** 2, axis=1)
    return float(np.sqrt(dist2.min()))


def clearance_ok(bvh, point: np.ndarray, clearance: float) -> bool:
    f = bvh.flat
    return _min_distance_to_tris(point, f.tv0, f.te1, f.te2) >= clearance


def sample_room_cameras(scene: Scene, room: Room, params: CameraParams,
                        visibility=None, bvh=None) -> list[Camera]:
    """Best camera per horizontal view sector, or nothing for a sector with
    no candidate seeing >= min_objects objects at >= min_coverage each.

    ``visibility`` is a callable (scene, camera) -> instance id map; defaults
    to the raster item-buffer renderer. Deterministic in (scene, room, seed).
    """
    params.validate()
    if visibility is None:
        from .raster import render_item_buffer

        def visibility(sc, cam):
            return render_item_buffer(sc, cam, bvh=bvh)

    if bvh is None:
        from .bvh import build_bvh
        bvh = build_bvh(scene)

    if len(room.floor) < 3:
        return []
    rng = np.random.default_rng(stable_seed(scene.name, room.id, params.seed))
    res = params.grid_resolution
    fx0, fz0 = room.floor.min(axis=0)
    fx1, fz1 = room.floor.max(axis=0)
    nx = max(1, int(math.ceil((fx1 - fx0) / res)))
    nz = max(1, int(math.ceil((fz1 - fz0) / res)))
    sector = 2.0 * math.pi / params.sector_count
    tilt = math.radians(params.tilt_deg)
    hfov = math.radians(params.hfov_deg)
    w, h = params.probe_size

    chosen: list[Camera] = []
    for si in range(params.sector_count):
        best_cov = -1.0
        best_cam = None
        for j in range(nz):
            for i in range(nx):
                # fixed draw count per cell keeps the stream aligned
                u = rng.random(4)
                x = fx0 + (i + u[0]) * res
                z = fz0 + (j + u[1]) * res
                yaw = si * sector + u[2] * sector
                y = room.floor_y + params.height_range[0] + u[3] * (
                    params.height_range[1] - params.height_range[0])
                if x > fx1 or z > fz1:
                    continue
                if not point_in_polygon(np.array([x, z]), room.floor):
                    continue
                pos = np.array([x, y, z])
                if not clearance_ok(bvh, pos, params.clearance):
                    continue
                cam = Camera(id=f"{room.id}.s{si}", position=pos, yaw=yaw,
                             pitch=tilt, hfov=hfov, width=w, height=h)
                rep = coverage_report(visibility(scene, cam), scene)
                if rep.qualifying_objects(scene, params.min_coverage) < params.min_objects:
                    continue
                if rep.object_fraction > best_cov:
                    best_cov = rep.object_fraction
                    best_cam = cam
        if best_cam is not None:
            chosen.append(best_cam)
    return chosen


def icosphere(subdiv: int) -> tuple[np.ndarray, np.ndarray]:
    """Subdivided icosahedron: (unit vertices, triangle index array).

    Vertex count is 10 * 4**subdiv + 2.
    """
    if subdiv < 0:
        raise PbrgenError("subdivision must be >= 0")
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]

    for _ in range(subdiv):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.vstack(verts), np.asarray(faces, dtype=np.int32)


def icosphere_points(subdiv: int) -> np.ndarray:
    """Unit vertices of a subdivided icosahedron; count = 10 * 4**subdiv + 2."""
    return icosphere(subdiv)[0]


def sample_object_cameras(bbox_min, bbox_max, params: ObjectViewParams) -> list[Camera]:
    """Cameras on random icosphere vertices looking at the bbox center."""
    params.validate()
    bbox_min = np.asarray(bbox_min, dtype=np.float64)
    bbox_max = np.asarray(bbox_max, dtype=np.float64)
    diag = float(np.linalg.norm(bbox_max - bbox_min))
    if diag <= 0:
        raise PbrgenError("sample_object_cameras: degenerate bounding box")
    center = 0.5 * (bbox_min + bbox_max)
    points = icosphere_points(params.subdivision)
    rng = np.random.default_rng(params.seed)
    lo, hi = params.distance_range
    hfov = math.radians(params.hfov_deg)
    w, h = params.image_size

    cams = []
    for k in range(params.cameras_per_object):
        v = points[rng.integers(0, len(points))]
        dist = (lo + rng.random() * (hi - lo)) * diag
        pos = center + v * dist
        f = (center - pos) / np.linalg.norm(center - pos)
        yaw = math.atan2(f[2], f[0])
        pitch = math.asin(max(-1.0, min(1.0, -f[1])))
        cams.append(Camera(id=f"obj.{k}", position=pos, yaw=yaw, pitch=pitch,
                           hfov=hfov, width=w, height=h))
    return cams
