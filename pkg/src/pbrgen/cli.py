"""Command-line interface.

Pipeline stages (repair, cameras, render, gt, select, stats) operate on a
JSON config file; eval-* commands compare prediction/ground-truth image
directories; bench-* commands exercise the integrator and the kernel
backends. Exit codes: 0 success, 2 partial failure, 1 fatal error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from pathlib import Path

import numpy as np

from .errors import PbrgenError
from .groundtruth import decode_normal
from .image_io import read_gray8, read_gray16, read_rgb8
from .metrics import boundary_metrics, mean_iou, normal_metrics
from .pipeline import Manifest, PipelineConfig, failures, full_run, run_stage

STAGE_NAMES = ("repair", "cameras", "render", "gt", "select", "stats")


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--seed", type=int, default=None, help="override global seed")
    p.add_argument("--workers", type=int, default=None, help="override worker count")
    p.add_argument("--backend", default=None,
                   help="restrict to one backend "
                        "(raster-dl|raster-il|path-ol|path-ilol)")
    p.add_argument("--force", action="store_true",
                   help="allow running with a changed config in the same output root")


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config)
    if args.seed is not None:
        cfg.global_seed = args.seed
        cfg.cameras.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.backend is not None:
        cfg.backends = (args.backend,)
        if args.backend.startswith("path"):
            cfg.select_backend = args.backend
    cfg.validate()
    return cfg


def _report(records: list[dict]) -> int:
    bad = failures(records)
    done = [r for r in records if r.get("event") in ("done", "select")]
    skipped = [r for r in done if r.get("skipped")]
    print(f"{len(done)} job(s) complete ({len(skipped)} skipped), "
          f"{len(bad)} failed")
    for r in bad:
        where = "/".join(x for x in (r.get("scene"), r.get("camera"),
                                     r.get("backend")) if x)
        print(f"  FAILED {where}: {r.get('error')}", file=sys.stderr)
    return 2 if bad else 0


def _cmd_stage(stage: str, args) -> int:
    cfg = _load_config(args)
    records = run_stage(stage, cfg, force=args.force)
    return _report(records)


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    results = full_run(cfg, force=args.force)
    code = 0
    for stage in STAGE_NAMES:
        print(f"[{stage}]", end=" ")
        code = max(code, _report(results[stage]))
    return code


def _cmd_manifest(args) -> int:
    cfg = _load_config(args)
    state = Manifest(cfg.manifest_path).consolidated()
    print(f"{'scene':<16} {'camera':<12} {'backend':<10} "
          f"{'status':<8} {'kept':<5} scores")
    for (scene, camera, backend), rec in sorted(state["jobs"].items()):
        if not backend:
            continue  # stage-level records (repair/cameras/stats)
        scores = rec.get("scores")
        stxt = (f"c={scores['color']:.3f} d={scores['depth']:.3f}"
                if scores else "-")
        kept = rec.get("kept")
        ktxt = "-" if kept is None else ("yes" if kept else "no")
        print(f"{scene:<16} {camera:<12} {backend:<10} "
              f"{rec.get('event', '?'):<8} {ktxt:<5} {stxt}")
    for stage, ev in sorted(state["stages"].items()):
        if ev != "stage-end":
            print(f"stage {stage}: incomplete ({ev})")
    return 0


def _paired_files(pred_dir: str, gt_dir: str) -> list[tuple[Path, Path]]:
    preds = {p.name: p for p in sorted(Path(pred_dir).iterdir()) if p.is_file()}
    pairs = []
    for g in sorted(Path(gt_dir).iterdir()):
        if g.is_file() and g.name in preds:
            pairs.append((preds[g.name], g))
    if not pairs:
        raise PbrgenError(f"no matching prediction/gt filenames between "
                          f"{pred_dir} and {gt_dir}")
    return pairs


def _write_csv(path: str | None, rows: list[dict]) -> None:
    if not path or not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def _cmd_eval_normals(args) -> int:
    preds, gts, valids = [], [], []
    for p, g in _paired_files(args.pred, args.gt):
        pn = decode_normal(read_rgb8(p))
        gn = decode_normal(read_rgb8(g))
        preds.append(pn.reshape(-1, 3))
        gts.append(gn.reshape(-1, 3))
        valids.append((np.linalg.norm(gn, axis=-1) > 0.5).reshape(-1))
    m = normal_metrics(np.concatenate(preds), np.concatenate(gts),
                       np.concatenate(valids))
    print(f"mean {m.mean_deg:.2f} deg | median {m.median_deg:.2f} deg | "
          f"<11.25: {m.pct_11_25:.2f}% | <22.5: {m.pct_22_5:.2f}% | "
          f"<30: {m.pct_30:.2f}%")
    _write_csv(args.out, [{
        "mean_deg": m.mean_deg, "median_deg": m.median_deg,
        "pct_11_25": m.pct_11_25, "pct_22_5": m.pct_22_5, "pct_30": m.pct_30}])
    return 0


def _cmd_eval_seg(args) -> int:
    ignore = {int(x) for x in args.ignore.split(",") if x} if args.ignore else set()
    preds, gts = [], []
    for p, g in _paired_files(args.pred, args.gt):
        preds.append(read_gray16(p).reshape(-1))
        gts.append(read_gray16(g).reshape(-1))
    m = mean_iou(np.concatenate(preds), np.concatenate(gts), ignore)
    print(f"mean IoU {m.mean_iou:.4f} over "
          f"{len(m.per_class) - len(m.absent)} class(es)")
    rows = [{"class": c, "iou": iou, "absent_in_gt": c in m.absent}
            for c, iou in sorted(m.per_class.items())]
    rows.append({"class": "mean", "iou": m.mean_iou, "absent_in_gt": ""})
    _write_csv(args.out, rows)
    return 0


def _cmd_eval_boundary(args) -> int:
    preds, gts = [], []
    for p, g in _paired_files(args.pred, args.gt):
        preds.append(read_gray8(p).astype(np.float64) / 255.0)
        gts.append(read_gray8(g) > 127)
    m = boundary_metrics(preds, gts, tol=args.tol)
    print(f"ODS {m.ods:.4f} | OIS {m.ois:.4f} | AP {m.ap:.4f} | R50 {m.r50:.4f}")
    rows = [{"threshold": t, "precision": p, "recall": r} for t, p, r in m.curve]
    rows.append({"threshold": "summary",
                 "precision": f"ODS={m.ods:.6f} OIS={m.ois:.6f}",
                 "recall": f"AP={m.ap:.6f} R50={m.r50:.6f}"})
    _write_csv(args.out, rows)
    return 0


def _cmd_bench_integrator(args) -> int:
    from .bvh import build_bvh
    from .cameras import Camera
    from .fixtures import gradient_sky, make_box_room
    from .pathtrace import PathConfig, integrator_benchmark, write_benchmark_csv
    from .repair import RepairConfig, repair_scene

    spp_list = [int(s) for s in args.spp.split(",")]
    scene = repair_scene(make_box_room(n_boxes=6, seed=2, closed=False),
                         RepairConfig())
    bvh = build_bvh(scene)
    cam = Camera(id="bench", position=np.array([2.5, 1.5, 0.7]),
                 yaw=math.radians(60), pitch=math.radians(11),
                 hfov=math.radians(60), width=args.width, height=args.height)
    cfg = PathConfig(env=gradient_sky(), seed=args.seed, max_depth=6)
    rows = integrator_benchmark(scene, cam, spp_list, cfg=cfg, bvh=bvh)
    for r in rows:
        print(f"spp {r['spp']:>5}  {r['seconds']:8.3f} s  "
              f"variance {r['variance']:.3e}")
    if args.out:
        write_benchmark_csv(rows, args.out)
    return 0


def _cmd_bench_kernels(args) -> int:
    from .bvh import build_bvh
    from .cameras import Camera
    from .fixtures import gradient_sky, make_box_room
    from .kernels import BACKEND, get_backend
    from .pathtrace import EmitterTable

    scene = make_box_room(n_boxes=8, seed=4)
    bvh = build_bvh(scene)
    f = bvh.flat
    cam = Camera(id="bench", position=np.array([2.5, 1.5, 0.7]),
                 yaw=math.radians(60), pitch=math.radians(11),
                 hfov=math.radians(60), width=args.width, height=args.height)
    env = gradient_sky()
    em = EmitterTable(f)
    kernel_args = (
        bvh.nbounds, bvh.nchild, bvh.ncount, bvh.naxis, bvh.prim,
        f.tv0, f.te1, f.te2, f.tgn, f.tn0, f.tn1, f.tn2,
        f.tuv0, f.tuv1, f.tuv2, f.tri_mat, f.tri_block,
        f.mat_diffuse, f.mat_alpha, f.mat_emission, f.mat_two, f.mat_tex,
        f.tex_data, f.tex_off, f.tex_w, f.tex_h,
        em.tri, em.cdf, em.pdf_area,
        env.radiance, env.marginal_cdf, env.conditional_cdf, env.pdf,
        cam.pack(), args.spp, 6, 3, args.seed, 1, 1)

    results = {}
    print(f"active backend: {BACKEND}")
    for name in ("compiled", "pure"):
        mod = get_backend(name)
        if mod is None:
            print(f"{name:>9}: unavailable (extension not built)")
            continue
        out = np.zeros((cam.height, cam.width, 3))
        t0 = time.perf_counter()
        mod.render_path_rows(*kernel_args, out, 0, cam.height)
        dt = time.perf_counter() - t0
        rays = cam.width * cam.height * args.spp
        results[name] = (dt, out)
        print(f"{name:>9}: {dt:8.3f} s  ({rays / dt:,.0f} paths/s)")
    if len(results) == 2:
        same = np.array_equal(results["compiled"][1], results["pure"][1])
        speedup = results["pure"][0] / results["compiled"][0]
        print(f"bit-identical output: {same}; speedup: {speedup:.1f}x")
        if not same:
            return 1
    return 0


def _cmd_make_fixtures(args) -> int:
    from .demo import write_demo_tree
    cfg_path = write_demo_tree(Path(args.out), n_scenes=args.scenes,
                               seed=args.seed or 0)
    print(f"fixture tree written; config: {cfg_path}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="pbrgen",
        description="Render indoor scenes into curated synthetic training "
                    "data with per-pixel ground truth.")
    sub = ap.add_subparsers(dest="command", required=True)

    for stage in STAGE_NAMES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_pipeline_args(p)
    p = sub.add_parser("run", help="run all stages in order")
    _add_pipeline_args(p)
    p = sub.add_parser("manifest", help="show the consolidated manifest")
    _add_pipeline_args(p)

    p = sub.add_parser("eval-normals", help="normal prediction metrics")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default=None, help="CSV output path")

    p = sub.add_parser("eval-seg", help="semantic segmentation mean IoU")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--ignore", default="", help="comma-separated label ids")
    p.add_argument("--out", default=None)

    p = sub.add_parser("eval-boundary", help="boundary ODS/OIS/AP/R50")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--tol", type=float, default=0.0075,
                   help="match radius as a fraction of the image diagonal")
    p.add_argument("--out", default=None)

    p = sub.add_parser("bench-integrator",
                       help="variance/time vs samples per pixel")
    p.add_argument("--spp", default="16,64,256")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)

    p = sub.add_parser("bench-kernels",
                       help="compare compiled and pure-Python kernels")
    p.add_argument("--spp", type=int, default=16)
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--height", type=int, default=36)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("make-fixtures",
                       help="write a self-contained demo scene tree + config")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)

    args = ap.parse_args(argv)
    try:
        if args.command in STAGE_NAMES:
            return _cmd_stage(args.command, args)
        handler = {
            "run": _cmd_run,
            "manifest": _cmd_manifest,
            "eval-normals": _cmd_eval_normals,
            "eval-seg": _cmd_eval_seg,
            "eval-boundary": _cmd_eval_boundary,
            "bench-integrator": _cmd_bench_integrator,
            "bench-kernels": _cmd_bench_kernels,
            "make-fixtures": _cmd_make_fixtures,
        }[args.command]
        return handler(args)
    except PbrgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
