import math

import numpy as np
import pytest

from pbrgen.bvh import build_bvh
from pbrgen.cameras import Camera
from pbrgen.fixtures import make_box_room, two_rooms_scene


@pytest.fixture(scope="session")
def box_room():
    return make_box_room(n_boxes=6, seed=1, lamp=True)


@pytest.fixture(scope="session")
def box_room_bvh(box_room):
    return build_bvh(box_room)


@pytest.fixture(scope="session")
def two_rooms():
    return two_rooms_scene()


@pytest.fixture()
def simple_camera():
    return Camera(id="t", position=np.array([2.5, 1.5, 0.6]),
                  yaw=math.radians(70), pitch=math.radians(11),
                  hfov=math.radians(60), width=64, height=48)


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
