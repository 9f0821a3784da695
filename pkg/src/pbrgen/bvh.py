"""BVH construction over scene triangles and ray queries.

The scene is flattened to world-space triangle arrays once (FlatScene); the
BVH is a flat array representation traversed by the kernel backends. Both
are immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PbrgenError
from .kernels import impl as _kernels
from .scene import Material, Scene, SceneNode

EPS = 1e-4          # self-intersection offset, meters
_LEAF_SIZE = 4
_MAX_DEPTH = 60


@dataclass
class Hit:
    """Nearest intersection record."""
    distance: float
    position: np.ndarray
    normal: np.ndarray          # geometric, unit, flipped toward ray origin if two-sided
    instance_id: int
    category_id: int
    material: Material
    uv: tuple[float, float]
    triangle: int               # global triangle index (FlatScene order)


class FlatScene:
    """World-space triangle soup plus per-triangle attributes."""

    def __init__(self, scene: Scene):
        self.scene = scene
        v0s, e1s, e2s = [], [], []
        gns, sn0, sn1, sn2 = [], [], [], []
        uv0, uv1, uv2 = [], [], []
        tri_mat, tri_node = [], []

        for node_idx, node in enumerate(scene.nodes):
            mesh = scene.meshes[node.mesh]
            if len(mesh.triangles) == 0:
                continue
            m = node.transform
            rot = m[:3, :3]
            pos = mesh.positions @ rot.T + m[:3, 3]
            # normals transform by inverse-transpose
            nmat = np.linalg.inv(rot).T
            nrm = mesh.normals @ nmat.T
            lens = np.linalg.norm(nrm, axis=1)
            lens[lens == 0] = 1.0
            nrm = nrm / lens[:, None]
            for g in mesh.groups:
                tris = mesh.triangles[g.triangles]
                a = pos[tris[:, 0]]
                b = pos[tris[:, 1]]
                c = pos[tris[:, 2]]
                v0s.append(a)
                e1s.append(b - a)
                e2s.append(c - a)
                gn = np.cross(b - a, c - a)
                gl = np.linalg.norm(gn, axis=1)
                gl[gl == 0] = 1.0
                gns.append(gn / gl[:, None])
                sn0.append(nrm[tris[:, 0]])
                sn1.append(nrm[tris[:, 1]])
                sn2.append(nrm[tris[:, 2]])
                uv0.append(mesh.uvs[tris[:, 0]])
                uv1.append(mesh.uvs[tris[:, 1]])
                uv2.append(mesh.uvs[tris[:, 2]])
                tri_mat.append(np.full(len(tris), g.material, dtype=np.int32))
                tri_node.append(np.full(len(tris), node_idx, dtype=np.int32))

        def cat(parts, width, dtype=np.float64):
            if parts:
                return np.ascontiguousarray(np.concatenate(parts), dtype=dtype)
            return np.zeros((0, width), dtype=dtype) if width > 1 else np.zeros(0, dtype=dtype)

        self.tv0 = cat(v0s, 3)
        self.te1 = cat(e1s, 3)
        self.te2 = cat(e2s, 3)
        self.tgn = cat(gns, 3)
        self.tn0 = cat(sn0, 3)
        self.tn1 = cat(sn1, 3)
        self.tn2 = cat(sn2, 3)
        self.tuv0 = cat(uv0, 2)
        self.tuv1 = cat(uv1, 2)
        self.tuv2 = cat(uv2, 2)
        self.tri_mat = cat(tri_mat, 1, np.int32)
        self.tri_node = cat(tri_node, 1, np.int32)
        self.n_tris = len(self.tv0)

        alphas = np.array([m.alpha for m in scene.materials] or [1.0])
        # alpha = 0 transmits; anything else blocks shadow rays
        self.tri_block = np.ascontiguousarray(
            (alphas[self.tri_mat] > 0.0).astype(np.uint8) if self.n_tris else
            np.zeros(0, dtype=np.uint8))

        self.node_instance = np.array([n.instance_id for n in scene.nodes] or [0],
                                      dtype=np.int32)
        self.node_category = np.array([n.category for n in scene.nodes] or [0],
                                      dtype=np.int32)

        # material tables for the shading kernels
        self.mat_diffuse = np.ascontiguousarray(
            [m.diffuse for m in scene.materials] or np.zeros((1, 3)), dtype=np.float64)
        self.mat_alpha = np.ascontiguousarray(
            [m.alpha for m in scene.materials] or [1.0], dtype=np.float64)
        self.mat_emission = np.ascontiguousarray(
            [m.emission for m in scene.materials] or np.zeros((1, 3)), dtype=np.float64)
        self.mat_two = np.ascontiguousarray(
            [1 if m.two_sided else 0 for m in scene.materials] or [0], dtype=np.uint8)

        tex_names = sorted(scene.textures)
        tex_index = {n: i for i, n in enumerate(tex_names)}
        self.mat_tex = np.ascontiguousarray(
            [tex_index.get(m.texture, -1) if m.texture else -1
             for m in scene.materials] or [-1], dtype=np.int32)
        datas, offs, ws, hs = [], [], [], []
        off = 0
        for n in tex_names:
            img = scene.textures[n]
            h, w = img.shape[:2]
            datas.append(np.asarray(img, dtype=np.float64).reshape(-1))
            offs.append(off)
            ws.append(w)
            hs.append(h)
            off += h * w * 3
        self.tex_data = np.ascontiguousarray(
            np.concatenate(datas) if datas else np.zeros(1), dtype=np.float64)
        self.tex_off = np.asarray(offs or [0], dtype=np.int64)
        self.tex_w = np.asarray(ws or [1], dtype=np.int32)
        self.tex_h = np.asarray(hs or [1], dtype=np.int32)


class Bvh:
    """Flat-array bounding volume hierarchy over a FlatScene."""

    def __init__(self, flat: FlatScene):
        self.flat = flat
        n = flat.n_tris
        if n == 0:
            self.nbounds = np.zeros((0, 6), dtype=np.float64)
            self.nchild = np.zeros(0, dtype=np.int32)
            self.ncount = np.zeros(0, dtype=np.int32)
            self.naxis = np.zeros(0, dtype=np.int32)
            self.prim = np.zeros(0, dtype=np.int32)
            return

        lo = np.minimum(np.minimum(flat.tv0, flat.tv0 + flat.te1), flat.tv0 + flat.te2)
        hi = np.maximum(np.maximum(flat.tv0, flat.tv0 + flat.te1), flat.tv0 + flat.te2)
        centroids = 0.5 * (lo + hi)

        bounds_list: list[np.ndarray] = []
        child: list[int] = []
        count: list[int] = []
        axis: list[int] = []
        prim_order: list[np.ndarray] = []
        prim_written = [0]

        def emit(idx: np.ndarray, depth: int) -> int:
            me = len(bounds_list)
            bmin = lo[idx].min(axis=0)
            bmax = hi[idx].max(axis=0)
            bounds_list.append(np.concatenate([bmin, bmax]))
            child.append(0)
            count.append(0)
            axis.append(0)
            ext = centroids[idx].max(axis=0) - centroids[idx].min(axis=0)
            ax = int(np.argmax(ext))
            if len(idx) <= _LEAF_SIZE or depth >= _MAX_DEPTH or ext[ax] <= 0:
                child[me] = prim_written[0]
                count[me] = len(idx)
                prim_order.append(idx)
                prim_written[0] += len(idx)
                return me
            order = idx[np.argsort(centroids[idx, ax], kind="stable")]
            half = len(order) // 2
            axis[me] = ax
            emit(order[:half], depth + 1)          # left child = me + 1
            child[me] = emit(order[half:], depth + 1)
            return me

        emit(np.arange(n, dtype=np.int32), 0)
        self.nbounds = np.ascontiguousarray(np.vstack(bounds_list), dtype=np.float64)
        self.nchild = np.asarray(child, dtype=np.int32)
        self.ncount = np.asarray(count, dtype=np.int32)
        self.naxis = np.asarray(axis, dtype=np.int32)
        self.prim = np.ascontiguousarray(np.concatenate(prim_order), dtype=np.int32)

    @property
    def n_tris(self) -> int:
        return self.flat.n_tris

    def _ray_args(self):
        f = self.flat
        return (self.nbounds, self.nchild, self.ncount, self.naxis, self.prim,
                f.tv0, f.te1, f.te2, f.tri_block)

    def intersect_many(self, origins: np.ndarray, dirs: np.ndarray,
                       tmaxs: np.ndarray | float = np.inf):
        """Batch nearest-hit query. Returns (tri, t, u, v) arrays; tri=-1 misses."""
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        nr = len(origins)
        if np.isscalar(tmaxs):
            tmaxs = np.full(nr, min(float(tmaxs), 1e30))
        tmaxs = np.ascontiguousarray(tmaxs, dtype=np.float64)
        out_tri = np.empty(nr, dtype=np.int32)
        out_t = np.empty(nr, dtype=np.float64)
        out_u = np.empty(nr, dtype=np.float64)
        out_v = np.empty(nr, dtype=np.float64)
        _kernels.intersect_rays(*self._ray_args(), origins, dirs, tmaxs,
                                out_tri, out_t, out_u, out_v)
        return out_tri, out_t, out_u, out_v

    def occluded_many(self, origins, dirs, tmins, tmaxs) -> np.ndarray:
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        tmins = np.ascontiguousarray(tmins, dtype=np.float64)
        tmaxs = np.ascontiguousarray(tmaxs, dtype=np.float64)
        out = np.empty(len(origins), dtype=np.uint8)
        _kernels.occluded_rays(*self._ray_args(), origins, dirs, tmins, tmaxs, out)
        return out


def build_bvh(scene: Scene) -> Bvh:
    """Build the acceleration structure; empty scenes yield an all-miss Bvh."""
    return Bvh(FlatScene(scene))


def intersect(bvh: Bvh, origin, direction, t_max: float = np.inf) -> Hit | None:
    """Nearest hit with distance in (eps, t_max), eps = 1e-4 m."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise PbrgenError("intersect: ray direction must be nonzero")
    direction = direction / norm
    tri, t, u, v = bvh.intersect_many(origin[None, :], direction[None, :],
                                      np.array([min(t_max, 1e30)]))
    if tri[0] < 0:
        return None
    return _make_hit(bvh, int(tri[0]), float(t[0]), float(u[0]), float(v[0]),
                     origin, direction)


def _make_hit(bvh: Bvh, tri: int, t: float, u: float, v: float,
              origin: np.ndarray, direction: np.ndarray) -> Hit:
    f = bvh.flat
    scene = f.scene
    normal = f.tgn[tri].copy()
    mat = scene.materials[f.tri_mat[tri]]
    if mat.two_sided and float(np.dot(normal, direction)) > 0.0:
        normal = -normal
    node_idx = int(f.tri_node[tri])
    node: SceneNode = scene.nodes[node_idx]
    w0 = 1.0 - u - v
    uv = tuple(w0 * f.tuv0[tri] + u * f.tuv1[tri] + v * f.tuv2[tri])
    return Hit(distance=t, position=origin + t * direction, normal=normal,
               instance_id=node.instance_id, category_id=node.category,
               material=mat, uv=uv, triangle=tri)


def occluded(bvh: Bvh, a, b) -> bool:
    """True iff any blocking surface crosses the open segment (a, b).

    Fully transparent materials (alpha = 0) never occlude; a == b is a
    degenerate empty segment and returns False.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = b - a
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        return False
    d = d / dist
    if dist - EPS <= EPS:
        return False
    out = bvh.occluded_many(a[None, :], d[None, :], np.array([EPS]),
                            np.array([dist - EPS]))
    return bool(out[0])
