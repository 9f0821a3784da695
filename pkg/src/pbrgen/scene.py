"""Scene data model and the documented scene file format.

World frame is right-handed, y-up, units meters. Scene files are UTF-8 JSON
with top-level keys ``rooms``, ``nodes``, ``meshes``, ``materials``,
``categories`` and a ``format_version`` field; see docs/scene-format.md.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DanglingReferenceError,
    InvalidTransformError,
    SceneFormatError,
    SceneWarning,
)

SCENE_FORMAT_VERSION = 1

# Categories that do not count as "objects" for camera coverage purposes.
STRUCTURAL_CATEGORIES = ("wall", "ceiling", "floor")
UNKNOWN_CATEGORY = "unknown"


class CategoryTable:
    """Bidirectional category id <-> name table.

    Id 0 is reserved for background/no-hit; the table always contains an
    "unknown" category that unmatched names fall back to.
    """

    def __init__(self, names: list[str]):
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        for name in names:
            self.add(name)
        if UNKNOWN_CATEGORY not in self._ids:
            self.add(UNKNOWN_CATEGORY)

    def add(self, name: str) -> int:
        if name in self._ids:
            return self._ids[name]
        self._names.append(name)
        cid = len(self._names)  # ids start at 1; 0 = background
        self._ids[name] = cid
        return cid

    def id_of(self, name: str) -> int | None:
        return self._ids.get(name)

    def name_of(self, cid: int) -> str:
        if not 1 <= cid <= len(self._names):
            raise KeyError(f"category id {cid} not in table")
        return self._names[cid - 1]

    @property
    def unknown_id(self) -> int:
        return self._ids[UNKNOWN_CATEGORY]

    def names(self) -> list[str]:
        return list(self._names)

    def is_object(self, cid: int) -> bool:
        """True for everything except wall/ceiling/floor."""
        return self.name_of(cid) not in STRUCTURAL_CATEGORIES

    def __len__(self) -> int:
        return len(self._names)

    def __eq__(self, other) -> bool:
        return isinstance(other, CategoryTable) and self._names == other._names


@dataclass
class Material:
    name: str
    diffuse: tuple[float, float, float] = (0.75, 0.75, 0.75)
    texture: str | None = None
    alpha: float = 1.0           # 1 = opaque, 0 = fully transparent
    emission: tuple[float, float, float] = (0.0, 0.0, 0.0)  # W sr^-1 m^-2
    two_sided: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise SceneFormatError(f"material '{self.name}': alpha {self.alpha} outside [0,1]")
        if any(not np.isfinite(e) or e < 0 for e in self.emission):
            raise SceneFormatError(f"material '{self.name}': emission must be finite and >= 0")
        if any(not 0.0 <= c <= 1.0 for c in self.diffuse):
            raise SceneFormatError(f"material '{self.name}': diffuse outside [0,1]^3")

    @property
    def is_emissive(self) -> bool:
        return any(e > 0 for e in self.emission)


@dataclass
class FaceGroup:
    material: int                 # index into Scene.materials
    triangles: np.ndarray         # (k,) int32 indices into the mesh triangle list


@dataclass
class TriMesh:
    name: str
    positions: np.ndarray         # (v, 3) float64, meters
    normals: np.ndarray           # (v, 3) float64, unit
    uvs: np.ndarray               # (v, 2) float64
    triangles: np.ndarray         # (t, 3) int32 vertex indices
    groups: list[FaceGroup]       # partition of the triangle list

    def validate(self, n_materials: int) -> None:
        nv = len(self.positions)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise DanglingReferenceError(
                f"mesh '{self.name}': triangle index out of range (vertices={nv})")
        if self.normals.shape != self.positions.shape:
            raise SceneFormatError(f"mesh '{self.name}': normals shape mismatch")
        if self.uvs.shape != (nv, 2):
            raise SceneFormatError(f"mesh '{self.name}': uvs shape mismatch")
        if nv:
            lens = np.linalg.norm(self.normals, axis=1)
            if np.any(np.abs(lens - 1.0) > 1e-4):
                raise SceneFormatError(f"mesh '{self.name}': vertex normals not unit length")
        seen = np.zeros(len(self.triangles), dtype=bool)
        for gi, g in enumerate(self.groups):
            if g.material < 0 or g.material >= n_materials:
                raise DanglingReferenceError(
                    f"mesh '{self.name}' group {gi}: material index {g.material} out of range")
            if g.triangles.size and (g.triangles.min() < 0 or g.triangles.max() >= len(self.triangles)):
                raise DanglingReferenceError(
                    f"mesh '{self.name}' group {gi}: triangle index out of range")
            if np.any(seen[g.triangles]):
                raise SceneFormatError(f"mesh '{self.name}' group {gi}: triangle in multiple groups")
            seen[g.triangles] = True
        if not seen.all():
            raise SceneFormatError(f"mesh '{self.name}': triangles not covered by any face group")

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self.positions) == 0:
            z = np.zeros(3)
            return z, z
        return self.positions.min(axis=0), self.positions.max(axis=0)


@dataclass
class SceneNode:
    instance_id: int              # unique positive; 0 reserved for background
    category: int                 # category id
    mesh: int                     # index into Scene.meshes
    transform: np.ndarray         # (4, 4) float64 affine, last row [0,0,0,1]
    emitter: bool = False

    def validate(self, n_meshes: int, name: str = "") -> None:
        label = name or f"node {self.instance_id}"
        if self.instance_id <= 0:
            raise SceneFormatError(f"{label}: instance id must be a positive integer")
        if self.mesh < 0 or self.mesh >= n_meshes:
            raise DanglingReferenceError(f"{label}: mesh index {self.mesh} out of range")
        t = self.transform
        if t.shape != (4, 4):
            raise InvalidTransformError(f"{label}: transform must be 4x4")
        if not np.allclose(t[3], [0.0, 0.0, 0.0, 1.0], atol=1e-9):
            raise InvalidTransformError(f"{label}: transform last row must be [0,0,0,1]")
        if abs(np.linalg.det(t[:3, :3])) < 1e-12:
            raise InvalidTransformError(f"{label}: transform is not invertible")


@dataclass
class WallSegment:
    a: tuple[float, float]        # (x, z) endpoints in meters
    b: tuple[float, float]
    height: float


@dataclass
class Room:
    id: str
    floor: np.ndarray             # (k, 2) floor polygon in (x, z), y = floor_y
    floor_y: float
    height: float                 # ceiling height above floor_y
    walls: list[WallSegment]
    node_ids: list[int]

    def validate(self) -> None:
        if self.height <= 0:
            raise SceneFormatError(f"room '{self.id}': ceiling height must be > 0")
        if len(self.floor) >= 3 and not _polygon_is_simple(self.floor):
            raise SceneFormatError(f"room '{self.id}': floor polygon self-intersects")


@dataclass
class Scene:
    name: str
    rooms: list[Room]
    nodes: list[SceneNode]
    meshes: list[TriMesh]
    materials: list[Material]
    categories: CategoryTable
    textures: dict[str, np.ndarray] = field(default_factory=dict)  # name -> (h, w, 3) float albedo

    def validate(self) -> None:
        for m in self.materials:
            m.validate()
        for mesh in self.meshes:
            mesh.validate(len(self.materials))
        ids = [n.instance_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            dup = sorted(i for i in set(ids) if ids.count(i) > 1)
            raise SceneFormatError(f"duplicate instance ids: {dup}")
        for n in self.nodes:
            n.validate(len(self.meshes))
            self.categories.name_of(n.category)  # raises if dangling
        node_ids = set(ids)
        for r in self.rooms:
            r.validate()
            for nid in r.node_ids:
                if nid not in node_ids:
                    raise DanglingReferenceError(f"room '{r.id}': node id {nid} not in scene")

    def node_by_id(self, instance_id: int) -> SceneNode:
        for n in self.nodes:
            if n.instance_id == instance_id:
                return n
        raise KeyError(f"no node with instance id {instance_id}")

    def node_bbox_world(self, node: SceneNode) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned world-space bounds of a node's transformed mesh."""
        mesh = self.meshes[node.mesh]
        if len(mesh.positions) == 0:
            z = np.zeros(3)
            return z, z
        p = mesh.positions @ node.transform[:3, :3].T + node.transform[:3, 3]
        return p.min(axis=0), p.max(axis=0)

    def shallow_copy(self) -> "Scene":
        """Copy with fresh top-level lists; meshes/materials shared until edited."""
        return Scene(
            name=self.name,
            rooms=[replace(r, floor=r.floor.copy(), walls=list(r.walls),
                           node_ids=list(r.node_ids)) for r in self.rooms],
            nodes=[replace(n, transform=n.transform.copy()) for n in self.nodes],
            meshes=list(self.meshes),
            materials=[replace(m) for m in self.materials],
            categories=CategoryTable(self.categories.names()),
            textures=dict(self.textures),
        )


def _polygon_is_simple(poly: np.ndarray) -> bool:
    """True if no two non-adjacent edges intersect (O(k^2) check)."""
    k = len(poly)

    def seg(i):
        return poly[i], poly[(i + 1) % k]

    for i in range(k):
        a1, a2 = seg(i)
        for j in range(i + 1, k):
            if j == i or (j + 1) % k == i or (i + 1) % k == j:
                continue
            b1, b2 = seg(j)
            if _segments_cross(a1, a2, b1, b2):
                return False
    return True


def _segments_cross(a1, a2, b1, b2) -> bool:
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    o1, o2 = orient(a1, a2, b1), orient(a1, a2, b2)
    o3, o4 = orient(b1, b2, a1), orient(b1, b2, a2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def point_in_polygon(p: np.ndarray, poly: np.ndarray) -> bool:
    """Even-odd rule point-in-polygon test in the (x, z) plane."""
    x, z = float(p[0]), float(p[1])
    inside = False
    k = len(poly)
    for i in range(k):
        x1, z1 = poly[i]
        x2, z2 = poly[(i + 1) % k]
        if (z1 > z) != (z2 > z):
            t = (z - z1) / (z2 - z1)
            if x < x1 + t * (x2 - x1):
                inside = not inside
    return inside


# ---------------------------------------------------------------------------
# Serialization

def _mesh_to_json(mesh: TriMesh) -> dict:
    return {
        "name": mesh.name,
        "positions": mesh.positions.reshape(-1).tolist(),
        "normals": mesh.normals.reshape(-1).tolist(),
        "uvs": mesh.uvs.reshape(-1).tolist(),
        "triangles": mesh.triangles.reshape(-1).tolist(),
        "groups": [{"material": g.material, "triangles": g.triangles.tolist()}
                   for g in mesh.groups],
    }


def _mesh_from_json(obj: dict, idx: int) -> TriMesh:
    name = obj.get("name", f"mesh{idx}")
    try:
        positions = np.asarray(obj["positions"], dtype=np.float64).reshape(-1, 3)
        normals = np.asarray(obj["normals"], dtype=np.float64).reshape(-1, 3)
        uvs = np.asarray(obj["uvs"], dtype=np.float64).reshape(-1, 2)
        triangles = np.asarray(obj["triangles"], dtype=np.int32).reshape(-1, 3)
        groups = [FaceGroup(int(g["material"]),
                            np.asarray(g["triangles"], dtype=np.int32))
                  for g in obj["groups"]]
    except (KeyError, ValueError) as exc:
        raise SceneFormatError(f"mesh '{name}': {exc}") from exc
    return TriMesh(name, positions, normals, uvs, triangles, groups)


def save_scene(scene: Scene, path: str | Path) -> None:
    doc = {
        "format_version": SCENE_FORMAT_VERSION,
        "name": scene.name,
        "categories": scene.categories.names(),
        "materials": [{
            "name": m.name, "diffuse": list(m.diffuse), "texture": m.texture,
            "alpha": m.alpha, "emission": list(m.emission), "two_sided": m.two_sided,
        } for m in scene.materials],
        "meshes": [_mesh_to_json(m) for m in scene.meshes],
        "nodes": [{
            "id": n.instance_id,
            "category": scene.categories.name_of(n.category),
            "mesh": n.mesh,
            "transform": n.transform.reshape(-1).tolist(),
            "emitter": n.emitter,
        } for n in scene.nodes],
        "rooms": [{
            "id": r.id,
            "floor": r.floor.reshape(-1).tolist(),
            "floor_y": r.floor_y,
            "height": r.height,
            "walls": [{"a": list(w.a), "b": list(w.b), "height": w.height} for w in r.walls],
            "nodes": list(r.node_ids),
        } for r in scene.rooms],
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_scene(path: str | Path) -> Scene:
    """Load and validate a scene file.

    Unknown category names map to the reserved "unknown" category and are
    reported as SceneWarning. Any structural problem raises a subclass of
    SceneFormatError naming the offending entity.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"cannot parse scene file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{path}: top level must be an object")
    version = doc.get("format_version")
    if version != SCENE_FORMAT_VERSION:
        raise SceneFormatError(f"{path}: unsupported format_version {version!r}")

    categories = CategoryTable([str(c) for c in doc.get("categories", [])])
    materials = []
    for i, m in enumerate(doc.get("materials", [])):
        materials.append(Material(
            name=m.get("name", f"material{i}"),
            diffuse=tuple(float(c) for c in m.get("diffuse", (0.75, 0.75, 0.75))),
            texture=m.get("texture"),
            alpha=float(m.get("alpha", 1.0)),
            emission=tuple(float(c) for c in m.get("emission", (0.0, 0.0, 0.0))),
            two_sided=bool(m.get("two_sided", False)),
        ))
    meshes = [_mesh_from_json(m, i) for i, m in enumerate(doc.get("meshes", []))]

    nodes = []
    for n in doc.get("nodes", []):
        cat_name = str(n.get("category", UNKNOWN_CATEGORY))
        cid = categories.id_of(cat_name)
        if cid is None:
            warnings.warn(
                f"node {n.get('id')}: unknown category '{cat_name}' mapped to 'unknown'",
                SceneWarning, stacklevel=2)
            cid = categories.unknown_id
        try:
            transform = np.asarray(n["transform"], dtype=np.float64).reshape(4, 4)
        except (KeyError, ValueError) as exc:
            raise InvalidTransformError(f"node {n.get('id')}: bad transform: {exc}") from exc
        nodes.append(SceneNode(
            instance_id=int(n["id"]),
            category=cid,
            mesh=int(n["mesh"]),
            transform=transform,
            emitter=bool(n.get("emitter", False)),
        ))

    rooms = []
    for r in doc.get("rooms", []):
        rooms.append(Room(
            id=str(r["id"]),
            floor=np.asarray(r.get("floor", []), dtype=np.float64).reshape(-1, 2),
            floor_y=float(r.get("floor_y", 0.0)),
            height=float(r["height"]),
            walls=[WallSegment(a=tuple(w["a"]), b=tuple(w["b"]),
                               height=float(w.get("height", r["height"])))
                   for w in r.get("walls", [])],
            node_ids=[int(i) for i in r.get("nodes", [])],
        ))

    scene = Scene(name=doc.get("name", path.stem), rooms=rooms, nodes=nodes,
                  meshes=meshes, materials=materials, categories=categories)
    _load_textures(scene, path.parent)
    scene.validate()
    return scene


def _load_textures(scene: Scene, base_dir: Path) -> None:
    """Resolve material texture refs to linear-albedo arrays (value/255)."""
    from PIL import Image

    for m in scene.materials:
        if m.texture is None or m.texture in scene.textures:
            continue
        tex_path = base_dir / m.texture
        if not tex_path.exists():
            raise DanglingReferenceError(
                f"material '{m.name}': texture file '{m.texture}' not found")
        img = np.asarray(Image.open(tex_path).convert("RGB"), dtype=np.float64) / 255.0
        scene.textures[m.texture] = img
