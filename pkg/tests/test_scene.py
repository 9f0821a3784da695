import json

import numpy as np
import pytest

from pbrgen.errors import (
    DanglingReferenceError,
    InvalidTransformError,
    SceneFormatError,
    SceneWarning,
)
from pbrgen.fixtures import two_rooms_scene
from pbrgen.scene import load_scene, save_scene


@pytest.fixture()
def two_rooms_file(tmp_path):
    path = tmp_path / "two_rooms.scene"
    save_scene(two_rooms_scene(), path)
    return path


def test_two_rooms_counts(two_rooms_file):
    scene = load_scene(two_rooms_file)
    assert len(scene.rooms) == 2
    assert len(scene.nodes) == 7


def test_roundtrip_structural_identity(two_rooms_file, tmp_path):
    a = load_scene(two_rooms_file)
    again = tmp_path / "again.scene"
    save_scene(a, again)
    b = load_scene(again)
    assert len(a.nodes) == len(b.nodes)
    assert a.categories.names() == b.categories.names()
    for na, nb in zip(a.nodes, b.nodes):
        assert na.instance_id == nb.instance_id
        assert na.category == nb.category
        assert np.array_equal(na.transform, nb.transform)
    for ma, mb in zip(a.meshes, b.meshes):
        assert np.array_equal(ma.positions, mb.positions)
        assert np.array_equal(ma.triangles, mb.triangles)
        assert np.array_equal(ma.normals, mb.normals)
    for xa, xb in zip(a.materials, b.materials):
        assert xa == xb
    for ra, rb in zip(a.rooms, b.rooms):
        assert np.array_equal(ra.floor, rb.floor)
        assert ra.node_ids == rb.node_ids


def test_triangle_index_out_of_range(two_rooms_file, tmp_path):
    doc = json.loads(two_rooms_file.read_text())
    doc["meshes"][0]["triangles"][0] = 9999
    bad = tmp_path / "bad.scene"
    bad.write_text(json.dumps(doc))
    with pytest.raises(DanglingReferenceError) as exc:
        load_scene(bad)
    assert doc["meshes"][0]["name"] in str(exc.value)


def test_unknown_category_warns_and_maps(two_rooms_file, tmp_path):
    doc = json.loads(two_rooms_file.read_text())
    doc["nodes"][2]["category"] = "zzz"
    f = tmp_path / "warn.scene"
    f.write_text(json.dumps(doc))
    with pytest.warns(SceneWarning) as rec:
        scene = load_scene(f)
    assert len(rec) == 1
    node = scene.nodes[2]
    assert scene.categories.name_of(node.category) == "unknown"


def test_duplicate_instance_ids_rejected(two_rooms_file, tmp_path):
    doc = json.loads(two_rooms_file.read_text())
    doc["nodes"][1]["id"] = doc["nodes"][0]["id"]
    f = tmp_path / "dup.scene"
    f.write_text(json.dumps(doc))
    with pytest.raises(SceneFormatError):
        load_scene(f)


def test_singular_transform_rejected(two_rooms_file, tmp_path):
    doc = json.loads(two_rooms_file.read_text())
    doc["nodes"][0]["transform"] = [0.0] * 12 + [0.0, 0.0, 0.0, 1.0]
    f = tmp_path / "sing.scene"
    f.write_text(json.dumps(doc))
    with pytest.raises(InvalidTransformError):
        load_scene(f)


def test_parse_failure(tmp_path):
    f = tmp_path / "junk.scene"
    f.write_text("{not json")
    with pytest.raises(SceneFormatError):
        load_scene(f)


def test_bad_format_version(two_rooms_file, tmp_path):
    doc = json.loads(two_rooms_file.read_text())
    doc["format_version"] = 99
    f = tmp_path / "v99.scene"
    f.write_text(json.dumps(doc))
    with pytest.raises(SceneFormatError):
        load_scene(f)


def test_point_in_polygon():
    from pbrgen.scene import point_in_polygon
    poly = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [2.0, 2.0],
                     [2.0, 4.0], [0.0, 4.0]])
    assert point_in_polygon(np.array([1.0, 1.0]), poly)
    assert point_in_polygon(np.array([1.0, 3.0]), poly)
    assert not point_in_polygon(np.array([3.0, 3.0]), poly)
    assert not point_in_polygon(np.array([-0.5, 1.0]), poly)
