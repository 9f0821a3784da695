"""Scene repair: turn raw scenes into render-ready ones.

Walls become solid prisms extruded away from the room interior (overlapping
at shared corners so no seam survives), windows go fully transparent, person
and plant nodes are dropped, lighting appliances get emissive face groups or
an inserted spherical bulb, and materials are flagged two-sided.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cameras import icosphere
from .errors import ConfigError, SceneFormatError, SceneWarning
from .scene import (
    FaceGroup,
    Material,
    Room,
    Scene,
    SceneNode,
    TriMesh,
    point_in_polygon,
)

ANNOTATION_FORMAT_VERSION = 1
AUTO_BULB = "auto-bulb"


@dataclass
class RepairConfig:
    wall_thickness: float = 0.10
    removed_categories: tuple = ("person", "plant")
    bulb_radius_fraction: float = 0.05      # of the node bbox diagonal
    bulb_radius_bounds: tuple[float, float] = (0.02, 0.10)
    bulb_anchor_offsets: dict = field(default_factory=dict)  # category -> (dx,dy,dz) m
    wall_color: tuple[float, float, float] = (1.0, 1.0, 1.0)
    bulb_emission: tuple[float, float, float] = (30.0, 30.0, 30.0)

    def validate(self):
        if self.wall_thickness <= 0:
            raise ConfigError("wall_thickness must be > 0")
        lo, hi = self.bulb_radius_bounds
        if lo <= 0 or hi < lo:
            raise ConfigError("bulb_radius_bounds must be positive and ordered")


@dataclass
class EmitterAnnotations:
    """Per-node lighting labels: face group ids that emit, or auto-bulb."""
    groups: dict[int, list[int]] = field(default_factory=dict)
    auto_bulb: set[int] = field(default_factory=set)

    @classmethod
    def load(cls, path: str | Path) -> "EmitterAnnotations":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("format_version") != ANNOTATION_FORMAT_VERSION:
            raise SceneFormatError(
                f"{path}: unsupported annotation format_version")
        ann = cls()
        for nid, val in doc.get("nodes", {}).items():
            if val == AUTO_BULB:
                ann.auto_bulb.add(int(nid))
            else:
                ann.groups[int(nid)] = [int(g) for g in val["groups"]]
        return ann

    def save(self, path: str | Path) -> None:
        doc = {"format_version": ANNOTATION_FORMAT_VERSION, "nodes": {}}
        for nid, gids in self.groups.items():
            doc["nodes"][str(nid)] = {"groups": gids}
        for nid in self.auto_bulb:
            doc["nodes"][str(nid)] = AUTO_BULB
        Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def _next_instance_id(scene: Scene) -> int:
    return max((n.instance_id for n in scene.nodes), default=0) + 1


def _quad_mesh_box(name: str, corners: np.ndarray, material: int) -> TriMesh:
    """Closed box from 8 corners ordered [bottom quad, matching top quad].

    Triangle winding is corrected per face so normals point away from the
    box centroid (consistent outward orientation).
    """
    faces = [
        (0, 1, 2, 3),
        (7, 6, 5, 4),
        (0, 4, 5, 1),
        (1, 5, 6, 2),
        (2, 6, 7, 3),
        (3, 7, 4, 0),
    ]
    center = corners.mean(axis=0)
    tris = []
    for q in faces:
        tris.append((q[0], q[1], q[2]))
        tris.append((q[0], q[2], q[3]))
    # flat shading: duplicate vertices per face so normals stay per-face
    positions, normals, out_tris = [], [], []
    for tri in tris:
        a, b, c = corners[tri[0]], corners[tri[1]], corners[tri[2]]
        n = np.cross(b - a, c - a)
        if np.dot(n, (a + b + c) / 3.0 - center) < 0:
            b, c = c, b
            n = -n
        ln = np.linalg.norm(n)
        n = n / ln if ln > 0 else np.array([0.0, 1.0, 0.0])
        base = len(positions)
        positions += [a, b, c]
        normals += [n, n, n]
        out_tris.append((base, base + 1, base + 2))
    positions = np.asarray(positions, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    out_tris = np.asarray(out_tris, dtype=np.int32)
    uvs = np.zeros((len(positions), 2))
    group = FaceGroup(material, np.arange(len(out_tris), dtype=np.int32))
    return TriMesh(name, positions, normals, uvs, out_tris, [group])


def _wall_prism(seg, room: Room, thickness: float, ext_a: float, ext_b: float,
                name: str, material: int) -> TriMesh:
    a = np.asarray(seg.a, dtype=np.float64)
    b = np.asarray(seg.b, dtype=np.float64)
    d = b - a
    length = np.linalg.norm(d)
    if length <= 0:
        raise SceneFormatError(f"room '{room.id}': zero-length wall segment")
    d = d / length
    perp = np.array([-d[1], d[0]])
    mid = 0.5 * (a + b)
    probe = mid + perp * min(0.01, thickness / 2.0)
    outward = -perp if point_in_polygon(probe, room.floor) else perp

    a_ext = a - d * ext_a
    b_ext = b + d * ext_b
    y0 = room.floor_y
    y1 = room.floor_y + seg.height
    inner = [a_ext, b_ext]
    outer = [a_ext + outward * thickness, b_ext + outward * thickness]
    c = [
        np.array([inner[0][0], y0, inner[0][1]]),
        np.array([inner[1][0], y0, inner[1][1]]),
        np.array([outer[1][0], y0, outer[1][1]]),
        np.array([outer[0][0], y0, outer[0][1]]),
        np.array([inner[0][0], y1, inner[0][1]]),
        np.array([inner[1][0], y1, inner[1][1]]),
        np.array([outer[1][0], y1, outer[1][1]]),
        np.array([outer[0][0], y1, outer[0][1]]),
    ]
    return _quad_mesh_box(name, np.asarray(c), material)


def thicken_walls(scene: Scene, cfg: RepairConfig) -> Scene:
    """Replace each room's single-surface wall nodes with solid prisms.

    Prisms extrude away from the interior by cfg.wall_thickness and extend
    along the segment by the thickness at every endpoint shared with another
    segment, so corners overlap solidly.
    """
    cfg.validate()
    out = scene.shallow_copy()
    wall_cat = out.categories.id_of("wall")
    wall_mat_idx = len(out.materials)
    out.materials.append(Material(name="repaired-wall", diffuse=cfg.wall_color,
                                  alpha=1.0, two_sided=True))
    next_id = _next_instance_id(out)

    for room in out.rooms:
        if not room.walls:
            continue
        # drop the original single-surface wall nodes of this room
        doomed = set()
        for nid in room.node_ids:
            node = out.node_by_id(nid)
            if node.category == wall_cat:
                doomed.add(nid)
        out.nodes = [n for n in out.nodes if n.instance_id not in doomed]
        room.node_ids = [i for i in room.node_ids if i not in doomed]

        endpoints = []
        for seg in room.walls:
            endpoints.append(np.asarray(seg.a))
            endpoints.append(np.asarray(seg.b))

        def shared(pt) -> bool:
            pt = np.asarray(pt)
            n = sum(1 for e in endpoints if np.linalg.norm(e - pt) < 1e-6)
            return n > 1

        for wi, seg in enumerate(room.walls):
            ext_a = cfg.wall_thickness if shared(seg.a) else 0.0
            ext_b = cfg.wall_thickness if shared(seg.b) else 0.0
            mesh = _wall_prism(seg, room, cfg.wall_thickness, ext_a, ext_b,
                               f"{room.id}-wall{wi}", wall_mat_idx)
            out.meshes.append(mesh)
            node = SceneNode(instance_id=next_id, category=wall_cat,
                             mesh=len(out.meshes) - 1, transform=np.eye(4))
            next_id += 1
            out.nodes.append(node)
            room.node_ids.append(node.instance_id)
    out.validate()
    return out


def make_windows_transparent(scene: Scene) -> Scene:
    """Set alpha = 0 on every material used by window-category nodes."""
    out = scene.shallow_copy()
    window_cat = out.categories.id_of("window")
    if window_cat is None:
        return out
    targets = set()
    for node in out.nodes:
        if node.category == window_cat:
            for g in out.meshes[node.mesh].groups:
                targets.add(g.material)
    for mi in targets:
        out.materials[mi] = replace(out.materials[mi], alpha=0.0)
    return out


def remove_categories(scene: Scene, categories) -> Scene:
    """Drop all nodes whose category name is in the given set."""
    out = scene.shallow_copy()
    cat_ids = {out.categories.id_of(c) for c in categories}
    cat_ids.discard(None)
    doomed = {n.instance_id for n in out.nodes if n.category in cat_ids}
    out.nodes = [n for n in out.nodes if n.instance_id not in doomed]
    for room in out.rooms:
        room.node_ids = [i for i in room.node_ids if i not in doomed]
    return out


def set_two_sided(scene: Scene) -> Scene:
    out = scene.shallow_copy()
    out.materials = [replace(m, two_sided=True) for m in out.materials]
    return out


def _icosphere_mesh(center: np.ndarray, radius: float, material: int,
                    name: str) -> TriMesh:
    verts, tris = icosphere(1)
    tris = tris.copy()
    # force outward winding so a one-sided emitter radiates outward
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    inward = np.einsum("ij,ij->i", np.cross(b - a, c - a), (a + b + c)) < 0
    tris[inward] = tris[inward][:, [0, 2, 1]]
    positions = center[None, :] + verts * radius
    normals = verts.copy()
    uvs = np.zeros((len(verts), 2))
    group = FaceGroup(material, np.arange(len(tris), dtype=np.int32))
    return TriMesh(name, positions, normals, uvs, tris, [group])


def insert_bulbs(scene: Scene, cfg: RepairConfig,
                 labels: EmitterAnnotations) -> Scene:
    """Make labeled light-generating face groups emissive; give auto-bulb
    nodes a new emitter sphere sized from the node bbox diagonal."""
    cfg.validate()
    out = scene.shallow_copy()

    for nid, group_ids in labels.groups.items():
        idx = next((i for i, n in enumerate(out.nodes) if n.instance_id == nid), None)
        if idx is None:
            warnings.warn(f"emitter annotation for missing node {nid}",
                          SceneWarning, stacklevel=2)
            continue
        node = out.nodes[idx]
        mesh = out.meshes[node.mesh]
        new_groups = []
        for gi, g in enumerate(mesh.groups):
            if gi in group_ids:
                emissive = replace(out.materials[g.material],
                                   name=f"{out.materials[g.material].name}-emit",
                                   emission=cfg.bulb_emission)
                out.materials.append(emissive)
                new_groups.append(FaceGroup(len(out.materials) - 1,
                                            g.triangles.copy()))
            else:
                new_groups.append(g)
        clone = TriMesh(mesh.name + "-lit", mesh.positions, mesh.normals,
                        mesh.uvs, mesh.triangles, new_groups)
        out.meshes.append(clone)
        out.nodes[idx] = replace(node, mesh=len(out.meshes) - 1, emitter=True)

    for nid in sorted(labels.auto_bulb):
        idx = next((i for i, n in enumerate(out.nodes) if n.instance_id == nid), None)
        if idx is None:
            warnings.warn(f"emitter annotation for missing node {nid}",
                          SceneWarning, stacklevel=2)
            continue
        node = out.nodes[idx]
        bmin, bmax = out.node_bbox_world(node)
        diag = float(np.linalg.norm(bmax - bmin))
        if diag <= 0:
            warnings.warn(f"node {nid}: empty bbox, bulb skipped",
                          SceneWarning, stacklevel=2)
            continue
        radius = min(max(cfg.bulb_radius_fraction * diag,
                         cfg.bulb_radius_bounds[0]), cfg.bulb_radius_bounds[1])
        center = 0.5 * (bmin + bmax)
        cat_name = out.categories.name_of(node.category)
        offset = np.asarray(cfg.bulb_anchor_offsets.get(cat_name, (0.0, 0.0, 0.0)))
        center = center + offset

        out.materials.append(Material(name=f"bulb-{nid}",
                                      diffuse=(1.0, 1.0, 1.0),
                                      emission=cfg.bulb_emission))
        bulb_mat = len(out.materials) - 1
        # build the sphere in world space and pull it back into node-local
        # coordinates so the node transform reproduces it exactly
        inv = np.linalg.inv(node.transform)
        sphere = _icosphere_mesh(center, radius, bulb_mat, f"bulb-{nid}")
        local_pos = sphere.positions @ inv[:3, :3].T + inv[:3, 3]
        nmat = node.transform[:3, :3].T  # inverse of the node's normal matrix
        local_nrm = sphere.normals @ nmat.T
        lens = np.linalg.norm(local_nrm, axis=1)
        lens[lens == 0] = 1.0
        local_nrm = local_nrm / lens[:, None]

        mesh = out.meshes[node.mesh]
        base_v = len(mesh.positions)
        base_t = len(mesh.triangles)
        merged = TriMesh(
            mesh.name + "-bulb",
            np.vstack([mesh.positions, local_pos]),
            np.vstack([mesh.normals, local_nrm]),
            np.vstack([mesh.uvs, sphere.uvs]),
            np.vstack([mesh.triangles, sphere.triangles + base_v]).astype(np.int32),
            [FaceGroup(g.material, g.triangles.copy()) for g in mesh.groups]
            + [FaceGroup(bulb_mat, np.arange(base_t, base_t + len(sphere.triangles),
                                             dtype=np.int32))],
        )
        out.meshes.append(merged)
        out.nodes[idx] = replace(node, mesh=len(out.meshes) - 1, emitter=True)

    out.validate()
    return out


def repair_scene(scene: Scene, cfg: RepairConfig,
                 labels: EmitterAnnotations | None = None) -> Scene:
    """Full repair pipeline in pinned order.

    Bulbs are inserted after the two-sided pass so bulb spheres stay
    one-sided (a closed emitter radiates outward only).
    """
    out = remove_categories(scene, cfg.removed_categories)
    out = thicken_walls(out, cfg)
    out = make_windows_transparent(out)
    out = set_two_sided(out)
    if labels is not None:
        out = insert_bulbs(out, cfg, labels)
    return out


def mesh_volume(mesh: TriMesh) -> float:
    """Signed volume via the divergence theorem (exact for closed meshes)."""
    a = mesh.positions[mesh.triangles[:, 0]]
    b = mesh.positions[mesh.triangles[:, 1]]
    c = mesh.positions[mesh.triangles[:, 2]]
    return float(np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)).sum()) / 6.0)
