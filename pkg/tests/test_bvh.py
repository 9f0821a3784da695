"""BVH vs brute-force oracle, hit invariants, occlusion semantics."""

import numpy as np
import pytest

from pbrgen.bvh import EPS, build_bvh, intersect, occluded
from pbrgen.errors import PbrgenError
from pbrgen.fixtures import SceneBuilder, furnace_scene, make_box_room

from conftest import random_unit


def brute_force_intersect(flat, origin, direction, t_max=1e30):
    """Independent all-triangles Moller-Trumbore scan (the oracle)."""
    best = (-1, t_max)
    for tri in range(flat.n_tris):
        v0 = flat.tv0[tri]
        e1 = flat.te1[tri]
        e2 = flat.te2[tri]
        p = np.cross(direction, e2)
        det = float(np.dot(e1, p))
        if abs(det) < 1e-12:
            continue
        s = origin - v0
        u = float(np.dot(s, p)) / det
        if u < 0 or u > 1:
            continue
        q = np.cross(s, e1)
        v = float(np.dot(direction, q)) / det
        if v < 0 or u + v > 1:
            continue
        t = float(np.dot(e2, q)) / det
        if EPS < t < best[1]:
            best = (tri, t)
    return best


def single_triangle_scene():
    b = SceneBuilder("tri")
    m = b.material("m", (0.5, 0.5, 0.5))
    from pbrgen.scene import FaceGroup, TriMesh
    mesh = TriMesh("t",
                   positions=np.array([[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0],
                                       [0.0, 1.0, 0.0]]),
                   normals=np.tile([0.0, 0.0, 1.0], (3, 1)),
                   uvs=np.zeros((3, 2)),
                   triangles=np.array([[0, 1, 2]], dtype=np.int32),
                   groups=[FaceGroup(m, np.array([0], dtype=np.int32))])
    b.scene.meshes.append(mesh)
    b.node("box", 0)
    return b.build()


def test_empty_scene_all_miss():
    b = SceneBuilder("empty")
    bvh = build_bvh(b.build())
    assert intersect(bvh, (0, 0, 5), (0, 0, -1)) is None
    assert not occluded(bvh, (0, 0, 0), (1, 1, 1))


def test_single_triangle_hit():
    bvh = build_bvh(single_triangle_scene())
    hit = intersect(bvh, (0, 0, 5), (0, 0, -1))
    assert hit is not None
    assert hit.distance == pytest.approx(5.0, abs=1e-12)
    assert hit.instance_id == 1
    hit2 = intersect(bvh, (0, 0, 5), (0, 0, -1), t_max=4.0)
    assert hit2 is None


def test_zero_direction_rejected():
    bvh = build_bvh(single_triangle_scene())
    with pytest.raises(PbrgenError):
        intersect(bvh, (0, 0, 5), (0, 0, 0))


def brute_force_intersect_batch(flat, origins, dirs, eps=EPS):
    """Vectorized exhaustive Moller-Trumbore over every (ray, triangle)."""
    v0 = flat.tv0[None, :, :]
    e1 = flat.te1[None, :, :]
    e2 = flat.te2[None, :, :]
    d = dirs[:, None, :]
    o = origins[:, None, :]
    p = np.cross(d, e2)
    det = np.einsum("rtc,rtc->rt", np.broadcast_to(e1, p.shape), p)
    ok = np.abs(det) >= 1e-12
    det_safe = np.where(ok, det, 1.0)
    s = o - v0
    u = np.einsum("rtc,rtc->rt", s, p) / det_safe
    q = np.cross(s, np.broadcast_to(e1, s.shape))
    v = np.einsum("rtc,rtc->rt", np.broadcast_to(d, q.shape), q) / det_safe
    t = np.einsum("rtc,rtc->rt", np.broadcast_to(e2, q.shape), q) / det_safe
    ok &= (u >= 0) & (u <= 1) & (v >= 0) & (u + v <= 1) & (t > eps)
    t = np.where(ok, t, np.inf)
    best = np.argmin(t, axis=1)
    best_t = t[np.arange(len(t)), best]
    best_tri = np.where(np.isfinite(best_t), best, -1)
    return best_tri, best_t


@pytest.mark.parametrize("scene_fn,n_rays", [
    (lambda: make_box_room(n_boxes=6, seed=1, lamp=True), 10_000),
    (lambda: furnace_scene(0.5, subdiv=2), 10_000),
])
def test_bvh_matches_brute_force(scene_fn, n_rays):
    scene = scene_fn()
    bvh = build_bvh(scene)
    rng = np.random.default_rng(42)
    lo = np.array([-1.0, -1.0, -1.0])
    hi = np.array([6.0, 3.5, 6.0])
    origins = rng.uniform(lo, hi, (n_rays, 3))
    dirs = random_unit(rng, n_rays)
    tri, t, _, _ = bvh.intersect_many(origins, dirs)
    btri, bt = brute_force_intersect_batch(bvh.flat, origins, dirs)
    assert np.array_equal(tri, btri)
    hit = tri >= 0
    assert np.allclose(t[hit], bt[hit], rtol=1e-6)
    # the scalar oracle double-checks the vectorized one on a subsample
    for i in rng.choice(n_rays, size=50, replace=False):
        otri, ot = brute_force_intersect(bvh.flat, origins[i], dirs[i])
        assert otri == btri[i]


def test_hit_normal_invariants(box_room_bvh):
    from pbrgen.repair import set_two_sided
    scene = set_two_sided(box_room_bvh.flat.scene)
    bvh = build_bvh(scene)
    rng = np.random.default_rng(3)
    for _ in range(300):
        o = rng.uniform([0.2, 0.2, 0.2], [4.8, 2.2, 4.8])
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        hit = intersect(bvh, o, d)
        if hit is None:
            continue
        assert abs(np.linalg.norm(hit.normal) - 1.0) < 1e-4
        assert np.dot(hit.normal, -d) >= 0  # two-sided: faces the origin


def test_occluded_semantics():
    b = SceneBuilder("walls")
    opaque = b.material("opaque", alpha=1.0)
    glass = b.material("glass", alpha=0.0)
    b.node("wall", b.quad_mesh(
        "w", [[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]], opaque))
    b.node("window", b.quad_mesh(
        "g", [[-1, -1, 2], [1, -1, 2], [1, 1, 2], [-1, 1, 2]], glass))
    bvh = build_bvh(b.build())
    # opaque wall at z=0 blocks, transparent pane at z=2 does not
    assert occluded(bvh, (0, 0, -1), (0, 0, 1))
    assert not occluded(bvh, (0, 0, 1.5), (0, 0, 2.5))
    assert occluded(bvh, (0, 0, -1), (0, 0, 3))  # crosses the opaque one
    assert not occluded(bvh, (0.0, 0.0, 1.0), (0.0, 0.0, 1.0))  # degenerate


def test_bvh_preserves_triangle_count(box_room):
    bvh = build_bvh(box_room)
    assert len(bvh.prim) == bvh.n_tris
    assert sorted(bvh.prim.tolist()) == list(range(bvh.n_tris))


def test_parent_boxes_contain_children(box_room_bvh):
    b = box_room_bvh
    for ni in range(len(b.nbounds)):
        if b.ncount[ni] > 0:
            continue
        for child in (ni + 1, int(b.nchild[ni])):
            assert (b.nbounds[ni, :3] <= b.nbounds[child, :3] + 1e-12).all()
            assert (b.nbounds[ni, 3:] >= b.nbounds[child, 3:] - 1e-12).all()
