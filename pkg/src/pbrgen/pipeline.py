"""End-to-end pipeline: repair -> cameras -> render -> gt -> select -> stats.

Jobs are keyed by a content hash of (inputs, stage config, seed); rerunning
a completed stage with unchanged inputs is a no-op. Failures isolate to
(scene, camera) granularity and are recorded in the manifest, a line-
delimited JSON log under the output root. Per-job seeds derive from
hash(global seed, scene, camera, backend) so results do not depend on
scheduling order or worker count.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bvh import Bvh, build_bvh
from .cameras import Camera, CameraParams, load_cameras, save_cameras, stable_seed
from .curation import (
    class_stats,
    color_histogram,
    depth_histogram,
    load_reference_corpus,
    score_candidate,
    write_stats_csv,
)
from .envmap import EnvironmentMap
from .errors import ConfigError, MissingUpstreamError, PbrgenError
from .groundtruth import (
    BACKEND_TAGS,
    FrameBundle,
    extract_boundaries,
    read_bundle,
    write_bundle,
)
from .image_io import depth_to_mm, write_float_image, write_rgb8
from .pathtrace import PathConfig, render_path, tonemap
from .raster import (
    DirectionalRig,
    render_visibility,
    scene_local_lights,
    shade_directional,
    shade_local,
)
from .repair import EmitterAnnotations, RepairConfig, repair_scene
from .scene import Scene, load_scene, save_scene

MANIFEST_VERSION = 1
STAGES = ("repair", "cameras", "render", "gt", "select", "stats")


@dataclass
class PipelineConfig:
    scenes_dir: Path
    output_root: Path
    reference_dir: Path | None = None
    annotations_dir: Path | None = None
    env_map: Path | None = None
    global_seed: int = 0
    workers: int = 1
    backends: tuple = BACKEND_TAGS
    render_width: int = 640
    render_height: int = 480
    spp: int = 256
    max_depth: int = 8
    rr_start: int = 4
    exposure_stops: float = 0.0
    gamma: float = 2.2
    save_hdr: bool = False
    local_ambient: float = 0.15
    select_tau: float = 0.70
    select_backend: str = "path-ilol"
    repair: RepairConfig = field(default_factory=RepairConfig)
    cameras: CameraParams = field(default_factory=CameraParams)

    def validate(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.scenes_dir.is_dir():
            raise ConfigError(f"scenes_dir does not exist: {self.scenes_dir}")
        for b in self.backends:
            if b not in BACKEND_TAGS:
                raise ConfigError(f"unknown backend '{b}'")
        if self.select_backend not in BACKEND_TAGS:
            raise ConfigError(f"unknown select backend '{self.select_backend}'")
        self.repair.validate()
        self.cameras.validate()

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        base = path.parent

        def respath(key):
            v = doc.get(key)
            return (base / v) if v is not None else None

        rep = doc.get("repair", {})
        cam = doc.get("cameras", {})
        ren = doc.get("render", {})
        sel = doc.get("select", {})
        for key in ("scenes_dir", "output_root"):
            if key not in doc:
                raise ConfigError(f"{path}: missing required key '{key}'")
        cfg = cls(
            scenes_dir=base / doc["scenes_dir"],
            output_root=base / doc["output_root"],
            reference_dir=respath("reference_dir"),
            annotations_dir=respath("annotations_dir"),
            env_map=respath("env_map"),
            global_seed=int(doc.get("global_seed", 0)),
            workers=int(doc.get("workers", 1)),
            backends=tuple(doc.get("backends", BACKEND_TAGS)),
            render_width=int(ren.get("width", 640)),
            render_height=int(ren.get("height", 480)),
            spp=int(ren.get("spp", 256)),
            max_depth=int(ren.get("max_depth", 8)),
            rr_start=int(ren.get("rr_start", 4)),
            exposure_stops=float(ren.get("exposure_stops", 0.0)),
            gamma=float(ren.get("gamma", 2.2)),
            save_hdr=bool(ren.get("save_hdr", False)),
            local_ambient=float(ren.get("local_ambient", 0.15)),
            select_tau=float(sel.get("tau", 0.70)),
            select_backend=sel.get("backend", "path-ilol"),
            repair=RepairConfig(
                wall_thickness=float(rep.get("wall_thickness", 0.10)),
                removed_categories=tuple(rep.get("removed_categories",
                                                 ("person", "plant"))),
                bulb_radius_fraction=float(rep.get("bulb_radius_fraction", 0.05)),
                bulb_radius_bounds=tuple(rep.get("bulb_radius_bounds", (0.02, 0.10))),
                bulb_anchor_offsets={k: tuple(v) for k, v in
                                     rep.get("bulb_anchor_offsets", {}).items()},
                wall_color=tuple(rep.get("wall_color", (1.0, 1.0, 1.0))),
                bulb_emission=tuple(rep.get("bulb_emission", (30.0, 30.0, 30.0))),
            ),
            cameras=CameraParams(
                grid_resolution=float(cam.get("grid_resolution", 0.25)),
                sector_count=int(cam.get("sector_count", 6)),
                height_range=tuple(cam.get("height_range", (1.5, 1.6))),
                tilt_deg=float(cam.get("tilt_deg", 11.0)),
                clearance=float(cam.get("clearance", 0.10)),
                min_objects=int(cam.get("min_objects", 3)),
                min_coverage=float(cam.get("min_coverage", 0.01)),
                hfov_deg=float(cam.get("hfov_deg", 60.0)),
                probe_size=tuple(cam.get("probe_size", (320, 240))),
                seed=int(doc.get("global_seed", 0)),
            ),
        )
        cfg.validate()
        return cfg

    def _stage_dict(self, stage: str) -> dict:
        if stage == "repair":
            r = self.repair
            return {"wall_thickness": r.wall_thickness,
                    "removed_categories": sorted(r.removed_categories),
                    "bulb_radius_fraction": r.bulb_radius_fraction,
                    "bulb_radius_bounds": list(r.bulb_radius_bounds),
                    "bulb_anchor_offsets": {k: list(v) for k, v in
                                            sorted(r.bulb_anchor_offsets.items())},
                    "wall_color": list(r.wall_color),
                    "bulb_emission": list(r.bulb_emission)}
        if stage == "cameras":
            c = self.cameras
            return {"grid_resolution": c.grid_resolution,
                    "sector_count": c.sector_count,
                    "height_range": list(c.height_range),
                    "tilt_deg": c.tilt_deg, "clearance": c.clearance,
                    "min_objects": c.min_objects, "min_coverage": c.min_coverage,
                    "hfov_deg": c.hfov_deg, "probe_size": list(c.probe_size),
                    "seed": self.global_seed}
        if stage == "render":
            return {"width": self.render_width, "height": self.render_height,
                    "spp": self.spp, "max_depth": self.max_depth,
                    "rr_start": self.rr_start, "exposure_stops": self.exposure_stops,
                    "gamma": self.gamma, "local_ambient": self.local_ambient,
                    "seed": self.global_seed,
                    "env_map": self.env_map.name if self.env_map else None}
        if stage == "gt":
            return {"width": self.render_width, "height": self.render_height}
        if stage == "select":
            return {"tau": self.select_tau, "backend": self.select_backend}
        return {}

    def stage_hash(self, stage: str) -> str:
        return hashlib.sha256(
            json.dumps(self._stage_dict(stage), sort_keys=True).encode()).hexdigest()

    def config_hash(self) -> str:
        doc = {s: self._stage_dict(s) for s in STAGES}
        doc["backends"] = list(self.backends)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    # output layout
    @property
    def manifest_path(self) -> Path:
        return self.output_root / "manifest.jsonl"

    def repaired_path(self, scene: str) -> Path:
        return self.output_root / "repaired" / f"{scene}.scene"

    def cameras_path(self, scene: str) -> Path:
        return self.output_root / "cameras" / f"{scene}.cameras.txt"

    def bundle_dir(self, scene: str, camera: str, backend: str) -> Path:
        return self.output_root / "bundles" / scene / camera / backend


class Manifest:
    """Append-only line-delimited JSON event log with a consolidated view."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def append(self, records: list[dict]) -> None:
        ordered = sorted(records, key=lambda r: (
            r.get("stage", ""), r.get("scene", ""), r.get("camera", ""),
            r.get("backend", ""), r.get("event", "")))
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as f:
                for r in ordered:
                    f.write(json.dumps(r, sort_keys=True) + "\n")

    def mark_stage(self, stage: str, event: str) -> None:
        self.append([{"event": f"stage-{event}", "stage": stage,
                      "ts": time.time(), "format_version": MANIFEST_VERSION}])

    def read_events(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                continue  # truncated tail from a crash; replayable
        return out

    def consolidated(self) -> dict:
        """Latest job record per (scene, camera, backend) plus stage states."""
        jobs: dict = {}
        stages: dict = {}
        for ev in self.read_events():
            e = ev.get("event", "")
            if e.startswith("stage-"):
                stages[ev.get("stage")] = e
            elif e in ("done", "failed", "select"):
                key = (ev.get("scene"), ev.get("camera"), ev.get("backend"))
                if e == "select":
                    for b in BACKEND_TAGS:
                        k = (ev.get("scene"), ev.get("camera"), b)
                        if k in jobs:
                            jobs[k] = {**jobs[k], "scores": ev.get("scores"),
                                       "kept": ev.get("kept")}
                else:
                    jobs[key] = {**jobs.get(key, {}), **ev}
        return {"jobs": jobs, "stages": stages}


def _record(stage, event, scene="", camera="", backend="", **extra) -> dict:
    r = {"event": event, "stage": stage, "scene": scene, "camera": camera,
         "backend": backend, "ts": time.time(),
         "format_version": MANIFEST_VERSION}
    r.update(extra)
    return r


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _job_done(out_dir_or_file: Path, keyfile: Path, key: str) -> bool:
    return keyfile.exists() and keyfile.read_text() == key


def _mark_done(keyfile: Path, key: str) -> None:
    keyfile.parent.mkdir(parents=True, exist_ok=True)
    keyfile.write_text(key)


def check_config_lock(cfg: PipelineConfig, force: bool = False) -> None:
    """Refuse to mix configs in one output root unless forced."""
    cfg.output_root.mkdir(parents=True, exist_ok=True)
    lock = cfg.output_root / "run.lock.json"
    h = cfg.config_hash()
    if lock.exists():
        prev = json.loads(lock.read_text()).get("config_hash")
        if prev != h and not force:
            raise ConfigError(
                "output root was produced with a different config "
                "(config hash mismatch); rerun with --force to override")
    lock.write_text(json.dumps({"config_hash": h,
                                "format_version": MANIFEST_VERSION}))


def _scene_files(cfg: PipelineConfig) -> list[Path]:
    return sorted(cfg.scenes_dir.glob("*.scene"))


def _parallel(workers: int, jobs, fn) -> list:
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


# ---------------------------------------------------------------------------
# stages

def stage_repair(cfg: PipelineConfig, manifest: Manifest) -> list[dict]:
    files = _scene_files(cfg)
    if not files:
        raise MissingUpstreamError(f"no *.scene files in {cfg.scenes_dir}")
    stage_cfg = cfg.stage_hash("repair")

    def job(path: Path) -> dict:
        name = path.stem
        out = cfg.repaired_path(name)
        keyfile = out.with_suffix(".key")
        try:
            key = hashlib.sha256(
                (_file_hash(path) + stage_cfg).encode()).hexdigest()
            if _job_done(out, keyfile, key) and out.exists():
                return _record("repair", "done", scene=name, key=key,
                               path=str(out), skipped=True)
            scene = load_scene(path)
            ann = None
            if cfg.annotations_dir is not None:
                ann_path = cfg.annotations_dir / f"{name}.emitters.json"
                if ann_path.exists():
                    ann = EmitterAnnotations.load(ann_path)
            repaired = repair_scene(scene, cfg.repair, ann)
            out.parent.mkdir(parents=True, exist_ok=True)
            save_scene(repaired, out)
            _mark_done(keyfile, key)
            return _record("repair", "done", scene=name, key=key, path=str(out))
        except PbrgenError as exc:
            return _record("repair", "failed", scene=name, error=str(exc))

    records = _parallel(cfg.workers, files, job)
    manifest.append(records)
    return records


def stage_cameras(cfg: PipelineConfig, manifest: Manifest) -> list[dict]:
    files = _scene_files(cfg)
    stage_cfg = cfg.stage_hash("cameras")
    any_input = False
    records = []

    def job(path: Path) -> dict:
        name = path.stem
        repaired = cfg.repaired_path(name)
        if not repaired.exists():
            return _record("cameras", "failed", scene=name,
                           error="missing repaired scene (run repair first)")
        out = cfg.cameras_path(name)
        keyfile = out.with_suffix(".key")
        key = hashlib.sha256(
            (_file_hash(repaired) + stage_cfg).encode()).hexdigest()
        if _job_done(out, keyfile, key) and out.exists():
            return _record("cameras", "done", scene=name, key=key,
                           path=str(out), skipped=True)
        try:
            scene = load_scene(repaired)
            bvh = build_bvh(scene)
            cams = []
            for room in scene.rooms:
                cams.extend(sample_room(scene, room, cfg, bvh))
            out.parent.mkdir(parents=True, exist_ok=True)
            save_cameras(cams, out)
            _mark_done(keyfile, key)
            return _record("cameras", "done", scene=name, key=key,
                           path=str(out), count=len(cams))
        except PbrgenError as exc:
            return _record("cameras", "failed", scene=name, error=str(exc))

    for path in files:
        if cfg.repaired_path(path.stem).exists():
            any_input = True
    if not any_input:
        raise MissingUpstreamError("cameras stage: no repaired scenes found")
    records = _parallel(cfg.workers, files, job)
    manifest.append(records)
    return records


def sample_room(scene: Scene, room, cfg: PipelineConfig, bvh: Bvh):
    from .cameras import sample_room_cameras
    params = cfg.cameras
    params.seed = cfg.global_seed
    return sample_room_cameras(scene, room, params, bvh=bvh)


def _load_env(cfg: PipelineConfig) -> EnvironmentMap | None:
    if cfg.env_map is None:
        return None
    return EnvironmentMap.load(cfg.env_map)


def _render_one(scene: Scene, bvh: Bvh, camera: Camera, backend: str,
                cfg: PipelineConfig, env, lights, seed: int):
    """Color image for one (camera, backend); returns (uint8 rgb, hdr|None)."""
    cam = camera.with_size(cfg.render_width, cfg.render_height)
    if backend == "raster-dl":
        vis = render_visibility(scene, cam, bvh=bvh)
        return shade_directional(scene, cam, vis, DirectionalRig()), None
    if backend == "raster-il":
        vis = render_visibility(scene, cam, bvh=bvh)
        return shade_local(scene, cam, vis, lights, ambient=cfg.local_ambient), None
    mode = "outdoor-only" if backend == "path-ol" else "indoor+outdoor"
    pc = PathConfig(spp=cfg.spp, max_depth=cfg.max_depth, rr_start=cfg.rr_start,
                    lighting_mode=mode, env=env, seed=seed,
                    exposure_stops=cfg.exposure_stops, gamma=cfg.gamma)
    hdr = render_path(scene, cam, pc, bvh=bvh)
    return tonemap(hdr, cfg.exposure_stops, cfg.gamma), hdr


def stage_render(cfg: PipelineConfig, manifest: Manifest) -> list[dict]:
    stage_cfg = cfg.stage_hash("render")
    env = _load_env(cfg)
    if env is None and any(b.startswith("path") for b in cfg.backends):
        raise ConfigError("render stage: path backends require env_map")
    records = []
    any_cameras = False
    for path in _scene_files(cfg):
        name = path.stem
        repaired = cfg.repaired_path(name)
        cam_file = cfg.cameras_path(name)
        if not repaired.exists() or not cam_file.exists():
            records.append(_record("render", "failed", scene=name,
                                   error="missing repaired scene or cameras"))
            continue
        any_cameras = True
        scene = load_scene(repaired)
        bvh = build_bvh(scene)
        lights = scene_local_lights(scene)
        cams = load_cameras(cam_file)
        scene_hash = _file_hash(repaired)

        def job(args) -> dict:
            camera, backend = args
            out_dir = cfg.bundle_dir(name, camera.id, backend)
            keyfile = out_dir / "color.key"
            seed = stable_seed(cfg.global_seed, name, camera.id, backend)
            key = hashlib.sha256(
                (scene_hash + camera.to_line() + backend + stage_cfg).encode()
            ).hexdigest()
            if _job_done(out_dir, keyfile, key) and (out_dir / "color.png").exists():
                return _record("render", "done", scene=name, camera=camera.id,
                               backend=backend, key=key, seed=seed,
                               path=str(out_dir), skipped=True)
            try:
                color, hdr = _render_one(scene, bvh, camera, backend, cfg,
                                         env, lights, seed)
                out_dir.mkdir(parents=True, exist_ok=True)
                write_rgb8(out_dir / "color.png", color)
                if hdr is not None and cfg.save_hdr:
                    write_float_image(out_dir / "color.hdr32", hdr)
                _mark_done(keyfile, key)
                return _record("render", "done", scene=name, camera=camera.id,
                               backend=backend, key=key, seed=seed,
                               path=str(out_dir))
            except PbrgenError as exc:
                return _record("render", "failed", scene=name, camera=camera.id,
                               backend=backend, error=str(exc))

        jobs = [(c, b) for c in cams for b in cfg.backends]
        records.extend(_parallel(cfg.workers, jobs, job))
    if not any_cameras:
        raise MissingUpstreamError("render stage: no cameras found (run cameras)")
    manifest.append(records)
    return records


def stage_gt(cfg: PipelineConfig, manifest: Manifest) -> list[dict]:
    stage_cfg = cfg.stage_hash("gt")
    records = []
    any_input = False
    for path in _scene_files(cfg):
        name = path.stem
        repaired = cfg.repaired_path(name)
        cam_file = cfg.cameras_path(name)
        if not repaired.exists() or not cam_file.exists():
            records.append(_record("gt", "failed", scene=name,
                                   error="missing repaired scene or cameras"))
            continue
        any_input = True
        scene = load_scene(repaired)
        bvh = build_bvh(scene)
        cams = load_cameras(cam_file)
        scene_hash = _file_hash(repaired)

        def job(camera: Camera) -> list[dict]:
            out = []
            cam = camera.with_size(cfg.render_width, cfg.render_height)
            key = hashlib.sha256(
                (scene_hash + camera.to_line() + stage_cfg).encode()).hexdigest()
            backend_dirs = [cfg.bundle_dir(name, camera.id, b)
                            for b in cfg.backends]
            made = None
            for backend, out_dir in zip(cfg.backends, backend_dirs):
                keyfile = out_dir / "gt.key"
                if _job_done(out_dir, keyfile, key) and (out_dir / "meta.txt").exists():
                    out.append(_record("gt", "done", scene=name, camera=camera.id,
                                       backend=backend, key=key, skipped=True))
                    continue
                if not (out_dir / "color.png").exists():
                    out.append(_record("gt", "failed", scene=name,
                                       camera=camera.id, backend=backend,
                                       error="missing rendered color (run render)"))
                    continue
                try:
                    if made is None:
                        made = _gt_channels(scene, cam, bvh)
                    depth, normal, semantic, instance, boundary = made
                    seed = stable_seed(cfg.global_seed, name, camera.id, backend)
                    from .image_io import read_rgb8
                    bundle = FrameBundle(
                        color=read_rgb8(out_dir / "color.png"),
                        depth=depth, normal=normal, semantic=semantic,
                        instance=instance, boundary=boundary,
                        camera=cam, backend=backend, seed=seed)
                    write_bundle(bundle, out_dir)
                    _mark_done(keyfile, key)
                    out.append(_record("gt", "done", scene=name, camera=camera.id,
                                       backend=backend, key=key,
                                       path=str(out_dir)))
                except PbrgenError as exc:
                    out.append(_record("gt", "failed", scene=name,
                                       camera=camera.id, backend=backend,
                                       error=str(exc)))
            return out

        for chunk in _parallel(cfg.workers, cams, job):
            records.extend(chunk)
    if not any_input:
        raise MissingUpstreamError("gt stage: no upstream outputs found")
    manifest.append(records)
    return records


def _gt_channels(scene: Scene, cam: Camera, bvh: Bvh):
    from .groundtruth import encode_normal
    vis = render_visibility(scene, cam, bvh=bvh)
    depth = depth_to_mm(vis.depth)
    normal = encode_normal(vis.normal)
    semantic = vis.category.astype(np.uint16)
    instance = vis.instance.astype(np.uint16)
    boundary = extract_boundaries(vis.instance)
    return depth, normal, semantic, instance, boundary


def stage_select(cfg: PipelineConfig, manifest: Manifest) -> list[dict]:
    if cfg.reference_dir is None:
        raise ConfigError("select stage requires reference_dir")
    refs = load_reference_corpus(cfg.reference_dir)
    records = []
    any_input = False
    for path in _scene_files(cfg):
        name = path.stem
        cam_file = cfg.cameras_path(name)
        if not cam_file.exists():
            continue
        for camera in load_cameras(cam_file):
            bdir = cfg.bundle_dir(name, camera.id, cfg.select_backend)
            if not (bdir / "meta.txt").exists():
                records.append(_record("select", "failed", scene=name,
                                       camera=camera.id,
                                       error=f"missing {cfg.select_backend} "
                                             "bundle (run render + gt)"))
                continue
            any_input = True
            try:
                bundle = read_bundle(bdir)
                sc = score_candidate(color_histogram(bundle.color),
                                     depth_histogram(bundle.depth), refs)
                records.append(_record(
                    "select", "select", scene=name, camera=camera.id,
                    scores={"color": sc.color, "depth": sc.depth},
                    kept=sc.kept(cfg.select_tau)))
            except PbrgenError as exc:
                records.append(_record("select", "failed", scene=name,
                                       camera=camera.id, error=str(exc)))
    if not any_input:
        raise MissingUpstreamError("select stage: no bundles found "
                                   "(run render and gt first)")
    manifest.append(records)
    return records


def stage_stats(cfg: PipelineConfig, manifest: Manifest) -> list[dict]:
    state = manifest.consolidated()
    scored = [rec for rec in state["jobs"].values() if "kept" in rec]
    if not scored:
        raise MissingUpstreamError("stats stage: no selection records "
                                   "(run select first)")
    kept_dirs = []
    categories = None
    for (scene, camera, backend), rec in sorted(state["jobs"].items()):
        if backend != cfg.select_backend or rec.get("event") == "failed":
            continue
        if rec.get("kept") is not True:
            continue
        bdir = cfg.bundle_dir(scene, camera, backend)
        if (bdir / "meta.txt").exists():
            kept_dirs.append(bdir)
    if not kept_dirs:
        raise MissingUpstreamError("stats stage: no kept bundles")
    for path in _scene_files(cfg):
        repaired = cfg.repaired_path(path.stem)
        if repaired.exists():
            categories = load_scene(repaired).categories
            break
    bundles = [read_bundle(d) for d in kept_dirs]
    rows = class_stats(bundles, categories)
    out = cfg.output_root / "stats.csv"
    write_stats_csv(rows, out)
    rec = _record("stats", "done", path=str(out), bundles=len(bundles))
    manifest.append([rec])
    return [rec]


_STAGE_FNS = {
    "repair": stage_repair,
    "cameras": stage_cameras,
    "render": stage_render,
    "gt": stage_gt,
    "select": stage_select,
    "stats": stage_stats,
}


def run_stage(stage: str, cfg: PipelineConfig, force: bool = False) -> list[dict]:
    """Run one pipeline stage; returns its manifest records.

    Raises MissingUpstreamError / ConfigError on fatal problems; individual
    job failures are recorded and reported, never silently skipped.
    """
    if stage not in _STAGE_FNS:
        raise ConfigError(f"unknown stage '{stage}' (choose from {STAGES})")
    cfg.validate()
    check_config_lock(cfg, force=force)
    manifest = Manifest(cfg.manifest_path)
    manifest.mark_stage(stage, "start")
    records = _STAGE_FNS[stage](cfg, manifest)
    manifest.mark_stage(stage, "end")
    return records


def full_run(cfg: PipelineConfig, force: bool = False,
             stages=STAGES) -> dict:
    """All stages in order; returns {stage: records} plus the consolidated
    manifest under key "manifest"."""
    results = {}
    for stage in stages:
        results[stage] = run_stage(stage, cfg, force=force)
    results["manifest"] = Manifest(cfg.manifest_path).consolidated()
    return results


def failures(records: list[dict]) -> list[dict]:
    return [r for r in records if r.get("event") == "failed"]
