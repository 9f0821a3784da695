"""Evaluation suites: normal angular error, semantic mean IoU, and boundary
precision/recall (ODS / OIS / AP / R50).

Boundary matching is greedy nearest-distance one-to-one assignment within a
tolerance radius of tol * image diagonal (ties broken by scan order); this
is a documented stand-in for the assignment solver used by the classic
benchmark and is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EvalError

BOUNDARY_THRESHOLDS = np.arange(1, 100) / 100.0    # 0.01 .. 0.99
RECALL_SAMPLES = np.linspace(0.0, 1.0, 101)


@dataclass
class NormalMetrics:
    mean_deg: float
    median_deg: float
    pct_11_25: float
    pct_22_5: float
    pct_30: float

    def as_tuple(self):
        return (self.mean_deg, self.median_deg, self.pct_11_25,
                self.pct_22_5, self.pct_30)


def normal_metrics(pred: np.ndarray, gt: np.ndarray,
                   valid: np.ndarray | None = None) -> NormalMetrics:
    """Angular error statistics over valid pixels.

    Error = acos(clamp(pred . gt, -1, 1)) in degrees. Median averages the
    two central order statistics for even counts. Percentages count errors
    strictly below each threshold.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise EvalError("normal_metrics: shape mismatch")
    if valid is None:
        valid = np.ones(pred.shape[:-1], dtype=bool)
    if not valid.any():
        raise EvalError("normal_metrics: empty valid mask")
    p = pred[valid]
    g = gt[valid]
    dots = np.einsum("ij,ij->i", p, g)
    # atan2 form of acos(clamp(dot)): identical angle, well conditioned
    # near 0 and 180 degrees (identical inputs give exactly 0)
    cross = np.linalg.norm(np.cross(p, g), axis=-1)
    err = np.degrees(np.arctan2(cross, dots))
    return NormalMetrics(
        mean_deg=float(err.mean()),
        median_deg=float(np.median(err)),
        pct_11_25=float((err < 11.25).mean() * 100.0),
        pct_22_5=float((err < 22.5).mean() * 100.0),
        pct_30=float((err < 30.0).mean() * 100.0),
    )


@dataclass
class SegMetrics:
    per_class: dict[int, float]        # class id -> IoU
    absent: set[int]                   # classes with no ground-truth pixels
    mean_iou: float


def mean_iou(pred: np.ndarray, gt: np.ndarray,
             ignore: set | frozenset = frozenset()) -> SegMetrics:
    """Pixel IoU per class; mean over classes present in the ground truth.

    Classes appearing only in the prediction are reported but flagged absent
    and excluded from the mean. Ignored labels are dropped from both maps.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise EvalError("mean_iou: shape mismatch")
    keep = ~np.isin(gt, list(ignore)) & ~np.isin(pred, list(ignore))
    if not keep.any():
        raise EvalError("mean_iou: no non-ignored pixels")
    p = pred[keep]
    g = gt[keep]
    classes = np.union1d(np.unique(p), np.unique(g))
    per_class: dict[int, float] = {}
    absent: set[int] = set()
    present_scores = []
    for c in classes.tolist():
        inter = int(np.count_nonzero((p == c) & (g == c)))
        union = int(np.count_nonzero((p == c) | (g == c)))
        iou = inter / union if union else 0.0
        per_class[c] = iou
        if np.count_nonzero(g == c) == 0:
            absent.add(c)
        else:
            present_scores.append(iou)
    return SegMetrics(per_class=per_class, absent=absent,
                      mean_iou=float(np.mean(present_scores)) if present_scores else 0.0)


@dataclass
class BoundaryMetrics:
    ods: float
    ois: float
    ap: float
    r50: float
    curve: list[tuple[float, float, float]] = field(default_factory=list)
    # (threshold, dataset precision, dataset recall) per threshold


def match_boundaries(pred_pixels: np.ndarray, gt_pixels: np.ndarray,
                     radius: float) -> int:
    """Greedy one-to-one matching of pred to gt pixel coordinates.

    Candidate pairs within the radius are processed in order of increasing
    distance (ties by pred then gt scan index); each endpoint matches at
    most once. Returns the number of matched pairs.
    """
    if len(pred_pixels) == 0 or len(gt_pixels) == 0:
        return 0
    tree = cKDTree(gt_pixels)
    neighbors = tree.query_ball_point(pred_pixels, r=radius)
    pairs = []
    for pi, gts in enumerate(neighbors):
        for gi in gts:
            d = pred_pixels[pi] - gt_pixels[gi]
            pairs.append((float(d[0] * d[0] + d[1] * d[1]), pi, gi))
    pairs.sort()
    pred_used = np.zeros(len(pred_pixels), dtype=bool)
    gt_used = np.zeros(len(gt_pixels), dtype=bool)
    matches = 0
    for _, pi, gi in pairs:
        if not pred_used[pi] and not gt_used[gi]:
            pred_used[pi] = True
            gt_used[gi] = True
            matches += 1
    return matches


def _pr(tp: int, n_pred: int, n_gt: int) -> tuple[float, float]:
    # empty prediction: perfect only when the ground truth is empty too
    if n_pred:
        p = tp / n_pred
    else:
        p = 1.0 if n_gt == 0 else 0.0
    r = tp / n_gt if n_gt else 1.0
    return p, r


def _f(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def _pixels(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return np.stack([ys, xs], axis=1).astype(np.float64)


def _envelope(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Monotone-cleaned P/R points: max precision per recall, then a running
    maximum from high recall down. Sorted by recall ascending."""
    by_recall: dict[float, float] = {}
    for p, r in points:
        if r not in by_recall or p > by_recall[r]:
            by_recall[r] = p
    rs = sorted(by_recall)
    ps = [by_recall[r] for r in rs]
    for i in range(len(ps) - 2, -1, -1):
        if ps[i + 1] > ps[i]:
            ps[i] = ps[i + 1]
    return list(zip(rs, ps))


def average_precision(points: list[tuple[float, float]]) -> float:
    """Mean interpolated precision over 101 recall samples in [0, 1]."""
    env = _envelope(points)
    if not env:
        return 0.0
    total = 0.0
    for r in RECALL_SAMPLES:
        p = 0.0
        for er, ep in env:
            if er >= r - 1e-12:
                p = ep
                break
        total += p
    return total / len(RECALL_SAMPLES)


def recall_at_precision(points: list[tuple[float, float]],
                        target: float = 0.5) -> float:
    """Recall where the interpolated envelope crosses the target precision;
    0 if precision never reaches it."""
    env = _envelope(points)
    if not env or env[0][1] < target:
        return 0.0
    best = 0.0
    for i, (r, p) in enumerate(env):
        if p >= target:
            best = r
            if i + 1 < len(env) and env[i + 1][1] < target:
                r2, p2 = env[i + 1]
                best = r + (r2 - r) * (p - target) / (p - p2)
                break
    return best


def boundary_metrics(preds: list[np.ndarray], gts: list[np.ndarray],
                     tol: float = 0.0075) -> BoundaryMetrics:
    """Dataset boundary benchmark over per-image (probability map, mask) pairs.

    At each of 99 thresholds, predicted pixels (prob >= threshold) match
    one-to-one to ground-truth pixels within tol * image diagonal.
    ODS: best F over a single dataset-wide threshold. OIS: mean per-image
    best F. AP: area under the monotone-cleaned P/R curve. R50: recall at
    the interpolated precision-0.5 point.
    """
    if len(preds) != len(gts) or not preds:
        raise EvalError("boundary_metrics: paired nonempty inputs required")
    n_t = len(BOUNDARY_THRESHOLDS)
    tp = np.zeros(n_t)
    npred = np.zeros(n_t)
    ngt = np.zeros(n_t)
    ois_sum = 0.0

    for pred, gt in zip(preds, gts):
        pred = np.asarray(pred, dtype=np.float64)
        gt = np.asarray(gt).astype(bool)
        if pred.shape != gt.shape:
            raise EvalError("boundary_metrics: resolution mismatch")
        if pred.min() < 0.0 or pred.max() > 1.0:
            raise EvalError("boundary_metrics: prediction values outside [0, 1]")
        h, w = gt.shape
        radius = tol * math.hypot(h, w)
        gt_px = _pixels(gt)
        best_img_f = 0.0
        # thresholds falling between the same adjacent prediction values
        # binarize identically; match each distinct mask once
        uniq = np.unique(pred)
        cache: dict[int, tuple[int, int]] = {}
        for ti, thresh in enumerate(BOUNDARY_THRESHOLDS):
            k = int(np.searchsorted(uniq, thresh, side="left"))
            if k == len(uniq):
                m, n_pred = 0, 0
            else:
                if k not in cache:
                    pred_px = _pixels(pred >= uniq[k])
                    cache[k] = (match_boundaries(pred_px, gt_px, radius),
                                len(pred_px))
                m, n_pred = cache[k]
            tp[ti] += m
            npred[ti] += n_pred
            ngt[ti] += len(gt_px)
            best_img_f = max(best_img_f, _f(*_pr(m, n_pred, len(gt_px))))
        ois_sum += best_img_f

    curve = []
    points = []
    ods = 0.0
    for ti, thresh in enumerate(BOUNDARY_THRESHOLDS):
        p, r = _pr(int(tp[ti]), int(npred[ti]), int(ngt[ti]))
        curve.append((float(thresh), p, r))
        points.append((p, r))
        ods = max(ods, _f(p, r))
    return BoundaryMetrics(ods=ods, ois=ois_sum / len(preds),
                           ap=average_precision(points),
                           r50=recall_at_precision(points), curve=curve)
