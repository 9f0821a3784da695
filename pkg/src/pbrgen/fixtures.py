"""Procedural fixture scenes: small rooms, furnace spheres, emitter rigs.

These stand in for a real scene repository so the pipeline, tests, and CLI
demos run self-contained. All builders are deterministic given their
arguments.
"""

from __future__ import annotations

import math

import numpy as np

from .cameras import icosphere
from .envmap import EnvironmentMap
from .scene import (
    CategoryTable,
    FaceGroup,
    Material,
    Room,
    Scene,
    SceneNode,
    TriMesh,
    WallSegment,
)

DEFAULT_CATEGORIES = ["wall", "ceiling", "floor", "chair", "table", "lamp",
                      "window", "person", "plant", "box"]


def _translate(x, y, z) -> np.ndarray:
    t = np.eye(4)
    t[:3, 3] = (x, y, z)
    return t


class SceneBuilder:
    def __init__(self, name: str, categories=None):
        self.scene = Scene(name=name, rooms=[], nodes=[], meshes=[],
                           materials=[],
                           categories=CategoryTable(categories or DEFAULT_CATEGORIES))
        self._next_id = 1

    def material(self, name, diffuse=(0.7, 0.7, 0.7), **kw) -> int:
        self.scene.materials.append(Material(name=name, diffuse=diffuse, **kw))
        return len(self.scene.materials) - 1

    def _add_mesh(self, mesh: TriMesh) -> int:
        self.scene.meshes.append(mesh)
        return len(self.scene.meshes) - 1

    def node(self, category: str, mesh: int, transform=None,
             emitter=False) -> SceneNode:
        cid = self.scene.categories.id_of(category)
        if cid is None:
            cid = self.scene.categories.add(category)
        n = SceneNode(instance_id=self._next_id, category=cid, mesh=mesh,
                      transform=np.eye(4) if transform is None else transform,
                      emitter=emitter)
        self._next_id += 1
        self.scene.nodes.append(n)
        return n

    def box_mesh(self, name: str, size, material: int) -> int:
        """Axis-aligned box centered in x/z, base at y=0, flat outward normals."""
        sx, sy, sz = size
        x0, x1 = -sx / 2.0, sx / 2.0
        z0, z1 = -sz / 2.0, sz / 2.0
        corners = np.array([
            [x0, 0.0, z0], [x1, 0.0, z0], [x1, 0.0, z1], [x0, 0.0, z1],
            [x0, sy, z0], [x1, sy, z0], [x1, sy, z1], [x0, sy, z1],
        ])
        faces = [(0, 1, 2, 3), (7, 6, 5, 4), (0, 4, 5, 1),
                 (1, 5, 6, 2), (2, 6, 7, 3), (3, 7, 4, 0)]
        center = corners.mean(axis=0)
        positions, normals, tris = [], [], []
        for q in faces:
            for tri in ((q[0], q[1], q[2]), (q[0], q[2], q[3])):
                a, b, c = corners[tri[0]], corners[tri[1]], corners[tri[2]]
                n = np.cross(b - a, c - a)
                if np.dot(n, (a + b + c) / 3.0 - center) < 0:
                    b, c = c, b
                    n = -n
                n = n / np.linalg.norm(n)
                base = len(positions)
                positions += [a, b, c]
                normals += [n, n, n]
                tris.append((base, base + 1, base + 2))
        mesh = TriMesh(name, np.asarray(positions), np.asarray(normals),
                       np.zeros((len(positions), 2)),
                       np.asarray(tris, dtype=np.int32),
                       [FaceGroup(material, np.arange(len(tris), dtype=np.int32))])
        return self._add_mesh(mesh)

    def quad_mesh(self, name: str, corners, material: int, normal=None) -> int:
        """Single rectangle (two triangles) from 4 corners in order."""
        c = np.asarray(corners, dtype=np.float64)
        n = np.cross(c[1] - c[0], c[2] - c[0])
        n = n / np.linalg.norm(n)
        if normal is not None and np.dot(n, normal) < 0:
            c = c[::-1]
            n = -n
        tris = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
        mesh = TriMesh(name, c, np.tile(n, (4, 1)), np.zeros((4, 2)), tris,
                       [FaceGroup(material, np.arange(2, dtype=np.int32))])
        return self._add_mesh(mesh)

    def multi_quad_mesh(self, name: str, quads, material: int) -> int:
        """Several rectangles in one mesh (e.g. all wall panels of a room)."""
        positions, normals, tris = [], [], []
        for corners in quads:
            c = np.asarray(corners, dtype=np.float64)
            n = np.cross(c[1] - c[0], c[2] - c[0])
            n = n / np.linalg.norm(n)
            base = len(positions)
            positions += list(c)
            normals += [n] * 4
            tris += [(base, base + 1, base + 2), (base, base + 2, base + 3)]
        mesh = TriMesh(name, np.asarray(positions), np.asarray(normals),
                       np.zeros((len(positions), 2)),
                       np.asarray(tris, dtype=np.int32),
                       [FaceGroup(material, np.arange(len(tris), dtype=np.int32))])
        return self._add_mesh(mesh)

    def sphere_mesh(self, name: str, radius: float, material: int,
                    subdiv: int = 3, center=(0.0, 0.0, 0.0)) -> int:
        verts, tris = icosphere(subdiv)
        tris = tris.copy()
        a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
        inward = np.einsum("ij,ij->i", np.cross(b - a, c - a), (a + b + c)) < 0
        tris[inward] = tris[inward][:, [0, 2, 1]]
        positions = np.asarray(center)[None, :] + verts * radius
        mesh = TriMesh(name, positions, verts.copy(),
                       np.zeros((len(verts), 2)), tris,
                       [FaceGroup(material, np.arange(len(tris), dtype=np.int32))])
        return self._add_mesh(mesh)

    def polygon_floor_mesh(self, name: str, poly: np.ndarray, y: float,
                           material: int, up: bool = True) -> int:
        tris_idx = _ear_clip(poly)
        positions = np.array([[p[0], y, p[1]] for p in poly])
        n = np.array([0.0, 1.0, 0.0]) if up else np.array([0.0, -1.0, 0.0])
        mesh = TriMesh(name, positions, np.tile(n, (len(poly), 1)),
                       np.zeros((len(poly), 2)),
                       np.asarray(tris_idx, dtype=np.int32),
                       [FaceGroup(material, np.arange(len(tris_idx), dtype=np.int32))])
        return self._add_mesh(mesh)

    def room(self, rid: str, poly, height: float, floor_y: float = 0.0,
             node_ids=None) -> Room:
        poly = np.asarray(poly, dtype=np.float64)
        walls = [WallSegment(a=tuple(poly[i]), b=tuple(poly[(i + 1) % len(poly)]),
                             height=height) for i in range(len(poly))]
        r = Room(id=rid, floor=poly, floor_y=floor_y, height=height,
                 walls=walls, node_ids=list(node_ids or []))
        self.scene.rooms.append(r)
        return r

    def build(self) -> Scene:
        self.scene.validate()
        return self.scene


def _ear_clip(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple polygon in the (x, z) plane."""
    idx = list(range(len(poly)))
    area = 0.0
    for i in range(len(poly)):
        x1, z1 = poly[i]
        x2, z2 = poly[(i + 1) % len(poly)]
        area += x1 * z2 - x2 * z1
    ccw = area > 0

    def cross(o, a, b):
        return ((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))

    def inside(p, a, b, c):
        d1 = cross(a, b, p)
        d2 = cross(b, c, p)
        d3 = cross(c, a, p)
        neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
        pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
        return not (neg and pos)

    tris = []
    guard = 0
    while len(idx) > 3 and guard < 10000:
        guard += 1
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = poly[i0], poly[i1], poly[i2]
            turn = cross(a, b, c)
            if (turn <= 0 and ccw) or (turn >= 0 and not ccw):
                continue
            if any(inside(poly[j], a, b, c) for j in idx
                   if j not in (i0, i1, i2)):
                continue
            tris.append((i0, i1, i2))
            idx.pop(k)
            clipped = True
            break
        if not clipped:
            break
    if len(idx) == 3:
        tris.append(tuple(idx))
    return tris


def _wall_panels(poly: np.ndarray, height: float, floor_y: float,
                 seam: float) -> list[np.ndarray]:
    """Single-surface wall quads along the polygon loop, each end inset by
    ``seam`` (loosely modeled sources leave such corner gaps)."""
    quads = []
    for i in range(len(poly)):
        a = np.asarray(poly[i], dtype=np.float64)
        b = np.asarray(poly[(i + 1) % len(poly)], dtype=np.float64)
        d = b - a
        length = np.linalg.norm(d)
        d = d / length
        a2 = a + d * seam
        b2 = b - d * seam
        quads.append(np.array([
            [a2[0], floor_y, a2[1]],
            [b2[0], floor_y, b2[1]],
            [b2[0], floor_y + height, b2[1]],
            [a2[0], floor_y + height, a2[1]],
        ]))
    return quads


def _rect_poly(w: float, d: float) -> np.ndarray:
    return np.array([[0.0, 0.0], [w, 0.0], [w, d], [0.0, d]])


def make_box_room(name: str = "boxroom", size=(5.0, 2.5, 5.0),
                  n_boxes: int = 12, seam: float = 0.0, closed: bool = True,
                  margin: float = 0.25, box_size: float = 0.55,
                  seed: int = 0, lamp: bool = False) -> Scene:
    """Rectangular room with a deterministic scatter of box 'objects'.

    ``seam`` insets the raw wall panels at corners (light-leak failure mode);
    ``closed`` adds floor + ceiling panels that extend past the walls so the
    repaired room is light-tight.
    """
    w, h, d = size
    b = SceneBuilder(name)
    m_floor = b.material("floor", (0.55, 0.5, 0.45))
    m_wall = b.material("wall", (0.8, 0.8, 0.78))
    m_ceil = b.material("ceiling", (0.85, 0.85, 0.85))
    palette = [b.material(f"obj{i}", c) for i, c in enumerate(
        [(0.7, 0.2, 0.2), (0.2, 0.6, 0.25), (0.25, 0.3, 0.75),
         (0.75, 0.65, 0.2), (0.6, 0.3, 0.65), (0.3, 0.65, 0.65)])]

    poly = _rect_poly(w, d)
    ex = margin
    slab = 0.02
    node_ids = []
    # floor/ceiling are thin slabs extending past the walls: junctions with
    # thickened walls overlap solidly instead of meeting surfaces edge-on
    fl = b.node("floor", b.box_mesh("floor", (w + 2 * ex, slab, d + 2 * ex),
                                    m_floor),
                _translate(w / 2.0, -slab, d / 2.0))
    node_ids.append(fl.instance_id)
    if closed:
        ce = b.node("ceiling", b.box_mesh("ceiling",
                                          (w + 2 * ex, slab, d + 2 * ex),
                                          m_ceil),
                    _translate(w / 2.0, h, d / 2.0))
        node_ids.append(ce.instance_id)
    walls = b.node("wall", b.multi_quad_mesh("walls",
                                             _wall_panels(poly, h, 0.0, seam),
                                             m_wall))
    node_ids.append(walls.instance_id)

    rng = np.random.default_rng(seed)
    grid = max(2, int(math.ceil(math.sqrt(n_boxes))))
    placed = 0
    for gz in range(grid):
        for gx in range(grid):
            if placed >= n_boxes:
                break
            cx = (gx + 0.5) / grid * (w - 1.2) + 0.6
            cz = (gz + 0.5) / grid * (d - 1.2) + 0.6
            cx += float(rng.uniform(-0.15, 0.15))
            cz += float(rng.uniform(-0.15, 0.15))
            bh = float(rng.uniform(0.45, 0.95))
            mesh = b.box_mesh(f"box{placed}", (box_size, bh, box_size),
                              palette[placed % len(palette)])
            # embedded 1 mm so no face is coplanar with the floor surface
            node = b.node("box", mesh, _translate(cx, -0.001, cz))
            node_ids.append(node.instance_id)
            placed += 1
    if lamp:
        # thin pole: the default centroid bulb pokes out of the shaft and
        # lights the room without needing an anchor offset
        m_lamp = b.material("lampshade", (0.9, 0.85, 0.7))
        mesh = b.box_mesh("lamp", (0.12, 1.5, 0.12), m_lamp)
        node = b.node("lamp", mesh, _translate(w - 0.8, -0.001, d - 0.8))
        node_ids.append(node.instance_id)
    b.room("r0", poly, h, node_ids=node_ids)
    return b.build()


def make_l_room(name: str = "lroom", height: float = 2.5) -> Scene:
    """L-shaped room (one concave corner) for corner-sealing probes."""
    poly = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [2.0, 2.0],
                     [2.0, 4.0], [0.0, 4.0]])
    b = SceneBuilder(name)
    m_floor = b.material("floor", (0.5, 0.5, 0.5))
    m_wall = b.material("wall", (0.8, 0.8, 0.8))
    node_ids = []
    node_ids.append(b.node("floor", b.polygon_floor_mesh("floor", poly, 0.0,
                                                         m_floor)).instance_id)
    node_ids.append(b.node("wall", b.multi_quad_mesh(
        "walls", _wall_panels(poly, height, 0.0, 0.0), m_wall)).instance_id)
    b.room("r0", poly, height, node_ids=node_ids)
    return b.build()


def two_rooms_scene() -> Scene:
    """Two-room fixture: 2 rooms, 7 nodes (floors, wall sets, furniture)."""
    b = SceneBuilder("two_rooms")
    m_floor = b.material("floor", (0.5, 0.45, 0.4))
    m_wall = b.material("wall", (0.82, 0.8, 0.78))
    m_chair = b.material("chair", (0.65, 0.25, 0.2))
    m_table = b.material("table", (0.45, 0.3, 0.2))
    m_lamp = b.material("lampshade", (0.9, 0.85, 0.65))

    ids_a = []
    poly_a = _rect_poly(4.0, 4.0)
    ids_a.append(b.node("floor", b.quad_mesh(
        "floorA", [[-0.2, 0, -0.2], [4.2, 0, -0.2], [4.2, 0, 4.2], [-0.2, 0, 4.2]],
        m_floor, normal=(0, 1, 0))).instance_id)
    ids_a.append(b.node("wall", b.multi_quad_mesh(
        "wallsA", _wall_panels(poly_a, 2.5, 0.0, 0.0), m_wall)).instance_id)
    ids_a.append(b.node("chair", b.box_mesh("chair", (0.5, 0.9, 0.5), m_chair),
                        _translate(1.2, -0.001, 1.4)).instance_id)
    ids_a.append(b.node("lamp", b.box_mesh("lamp", (0.3, 1.4, 0.3), m_lamp),
                        _translate(3.2, -0.001, 3.0)).instance_id)
    b.room("ra", poly_a, 2.5, node_ids=ids_a)

    ids_b = []
    poly_b = _rect_poly(3.5, 4.0) + np.array([4.6, 0.0])
    ids_b.append(b.node("floor", b.quad_mesh(
        "floorB", [[4.4, 0, -0.2], [8.3, 0, -0.2], [8.3, 0, 4.2], [4.4, 0, 4.2]],
        m_floor, normal=(0, 1, 0))).instance_id)
    ids_b.append(b.node("wall", b.multi_quad_mesh(
        "wallsB", _wall_panels(poly_b, 2.5, 0.0, 0.0), m_wall)).instance_id)
    ids_b.append(b.node("table", b.box_mesh("table", (1.2, 0.75, 0.8), m_table),
                        _translate(6.4, -0.001, 2.0)).instance_id)
    b.room("rb", poly_b, 2.5, node_ids=ids_b)
    return b.build()


def furnace_scene(albedo: float = 0.5, subdiv: int = 3) -> Scene:
    """Convex Lambertian sphere, nothing else (furnace-test subject)."""
    b = SceneBuilder("furnace")
    m = b.material("gray", (albedo, albedo, albedo))
    b.node("box", b.sphere_mesh("ball", 1.0, m, subdiv=subdiv))
    return b.build()


def emitter_oracle_scene(floor_albedo: float = 0.8, emitter_height: float = 1.0,
                         radius: float = 0.001, radiance: float = 2.5e5) -> Scene:
    """Large floor plus a tiny emitter sphere straight above the origin."""
    b = SceneBuilder("emitter_oracle")
    m_floor = b.material("floor", (floor_albedo, floor_albedo, floor_albedo))
    m_bulb = b.material("bulb", (1.0, 1.0, 1.0),
                        emission=(radiance, radiance, radiance))
    b.node("floor", b.quad_mesh(
        "floor", [[-20, 0, -20], [20, 0, -20], [20, 0, 20], [-20, 0, 20]],
        m_floor, normal=(0, 1, 0)))
    b.node("lamp", b.sphere_mesh("bulb", radius, m_bulb, subdiv=2,
                                 center=(0.0, emitter_height, 0.0)),
           emitter=True)
    return b.build()


def emitter_power(scene: Scene, node_index: int = 1) -> float:
    """Total one-sided emitted power of a node's mesh (W, per channel mean)."""
    node = scene.nodes[node_index]
    mesh = scene.meshes[node.mesh]
    total = 0.0
    for g in mesh.groups:
        mat = scene.materials[g.material]
        if not mat.is_emissive:
            continue
        tris = mesh.triangles[g.triangles]
        a = mesh.positions[tris[:, 0]]
        bb_ = mesh.positions[tris[:, 1]]
        c = mesh.positions[tris[:, 2]]
        area = 0.5 * np.linalg.norm(np.cross(bb_ - a, c - a), axis=1).sum()
        sides = 2.0 if mat.two_sided else 1.0
        total += float(np.mean(mat.emission)) * math.pi * area * sides
    return total


def gradient_sky(width: int = 64, height: int = 32,
                 zenith=(0.6, 0.75, 1.2), horizon=(1.0, 0.85, 0.6),
                 ground=(0.12, 0.1, 0.08)) -> EnvironmentMap:
    """Smooth analytic sky: bright zenith, warm horizon, dark ground."""
    v = (np.arange(height) + 0.5) / height
    rad = np.empty((height, width, 3))
    zen = np.asarray(zenith)
    hor = np.asarray(horizon)
    gnd = np.asarray(ground)
    for j, vv in enumerate(v):
        if vv < 0.5:
            t = vv / 0.5
            col = zen * (1 - t) + hor * t
        else:
            t = (vv - 0.5) / 0.5
            col = hor * (1 - t) + gnd * t
        rad[j, :] = col
    return EnvironmentMap(rad)
