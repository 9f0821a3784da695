"""Self-contained demo tree: fixture scenes, annotations, a sky map, a small
reference corpus, and a ready-to-run pipeline config."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .bvh import build_bvh
from .cameras import Camera
from .envmap import EnvironmentMap
from .fixtures import gradient_sky, make_box_room, two_rooms_scene
from .image_io import depth_to_mm, write_gray16, write_rgb8
from .pathtrace import PathConfig, render_path, tonemap
from .raster import render_visibility
from .repair import EmitterAnnotations, RepairConfig, repair_scene
from .scene import save_scene


def write_demo_tree(root: Path, n_scenes: int = 2, seed: int = 0,
                    render_size=(96, 72), spp: int = 16) -> Path:
    """Create scenes/, annotations/, refs/, sky.env32, and config.json."""
    root = Path(root)
    scenes_dir = root / "scenes"
    ann_dir = root / "annotations"
    refs_dir = root / "refs"
    for d in (scenes_dir, ann_dir, refs_dir):
        d.mkdir(parents=True, exist_ok=True)

    sky = gradient_sky()
    sky.save(root / "sky.env32")

    names = []
    for i in range(n_scenes):
        scene = make_box_room(name=f"room{i:02d}", size=(3.4, 2.5, 3.4),
                              n_boxes=6 + i, seed=seed + i, lamp=True,
                              closed=False)
        save_scene(scene, scenes_dir / f"{scene.name}.scene")
        lamp_id = next(n.instance_id for n in scene.nodes
                       if scene.categories.name_of(n.category) == "lamp")
        EmitterAnnotations(auto_bulb={lamp_id}).save(
            ann_dir / f"{scene.name}.emitters.json")
        names.append(scene.name)
    save_scene(two_rooms_scene(), scenes_dir / "two_rooms.scene")

    _write_reference_corpus(refs_dir, sky, seed, render_size, spp)

    cfg = {
        "scenes_dir": "scenes",
        "output_root": "out",
        "reference_dir": "refs",
        "annotations_dir": "annotations",
        "env_map": "sky.env32",
        "global_seed": seed,
        "workers": 1,
        "backends": ["raster-dl", "raster-il", "path-ol", "path-ilol"],
        "render": {"width": render_size[0], "height": render_size[1],
                   "spp": spp, "max_depth": 5, "rr_start": 3,
                   "exposure_stops": 1.0},
        "cameras": {"probe_size": [64, 48], "min_objects": 1,
                    "grid_resolution": 0.5},
        "select": {"tau": 0.10},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(cfg, indent=1), encoding="utf-8")
    return cfg_path


def _write_reference_corpus(refs_dir: Path, sky: EnvironmentMap, seed: int,
                            render_size, spp: int) -> None:
    """A few rendered views standing in for a real reference dataset."""
    scene = make_box_room(name="refroom", size=(3.4, 2.5, 3.4), n_boxes=6,
                          seed=seed + 100, lamp=True, closed=False)
    lamp_id = next(n.instance_id for n in scene.nodes
                   if scene.categories.name_of(n.category) == "lamp")
    repaired = repair_scene(scene, RepairConfig(),
                            EmitterAnnotations(auto_bulb={lamp_id}))
    bvh = build_bvh(repaired)
    w, h = render_size
    poses = [((0.8, 1.55, 0.8), 0.7), ((2.7, 1.5, 0.9), 2.3),
             ((1.7, 1.6, 2.7), -1.8)]
    for i, (pos, yaw) in enumerate(poses):
        cam = Camera(id=f"ref{i}", position=np.array(pos), yaw=yaw,
                     pitch=math.radians(11), hfov=math.radians(60),
                     width=w, height=h)
        cfg = PathConfig(spp=spp, max_depth=6, rr_start=3, env=sky,
                         seed=seed + i, exposure_stops=1.0)
        hdr = render_path(repaired, cam, cfg, bvh=bvh)
        write_rgb8(refs_dir / f"ref{i}.color.png", tonemap(hdr, 1.0, 2.2))
        vis = render_visibility(repaired, cam, bvh=bvh)
        write_gray16(refs_dir / f"ref{i}.depth.png", depth_to_mm(vis.depth))
