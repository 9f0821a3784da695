"""Metric suites vs independent brute-force reimplementations."""

import math

import numpy as np
import pytest

from pbrgen.errors import EvalError
from pbrgen.metrics import (
    BOUNDARY_THRESHOLDS,
    boundary_metrics,
    match_boundaries,
    mean_iou,
    normal_metrics,
)


# --------------------------------------------------------------------------
# normals

def oracle_normal(pred, gt, valid):
    errs = []
    h, w = valid.shape
    for y in range(h):
        for x in range(w):
            if not valid[y, x]:
                continue
            d = float(np.dot(pred[y, x], gt[y, x]))
            d = max(-1.0, min(1.0, d))
            errs.append(math.degrees(math.acos(d)))
    errs.sort()
    n = len(errs)
    if n % 2:
        med = errs[n // 2]
    else:
        med = 0.5 * (errs[n // 2 - 1] + errs[n // 2])
    mean = sum(errs) / n
    pct = lambda t: 100.0 * sum(1 for e in errs if e < t) / n
    return mean, med, pct(11.25), pct(22.5), pct(30.0)


def rand_normals(rng, h, w):
    v = rng.normal(size=(h, w, 3))
    return v / np.linalg.norm(v, axis=2, keepdims=True)


def test_normal_identity():
    n = rand_normals(np.random.default_rng(0), 8, 8)
    m = normal_metrics(n, n)
    assert m.as_tuple() == (0.0, 0.0, 100.0, 100.0, 100.0)


def test_normal_orthogonal():
    h, w = 6, 6
    pred = np.zeros((h, w, 3))
    gt = np.zeros((h, w, 3))
    pred[:, :] = [0.0, 0.0, 1.0]
    gt[:, :] = [0.0, 1.0, 0.0]
    m = normal_metrics(pred, gt)
    assert m.mean_deg == pytest.approx(90.0)
    assert m.median_deg == pytest.approx(90.0)
    assert (m.pct_11_25, m.pct_22_5, m.pct_30) == (0.0, 0.0, 0.0)


def test_normal_half_zero_half_twenty():
    h, w = 2, 10
    gt = np.zeros((h, w, 3))
    gt[:, :] = [0.0, 0.0, 1.0]
    pred = gt.copy()
    a = math.radians(20.0)
    pred[1, :] = [math.sin(a), 0.0, math.cos(a)]
    m = normal_metrics(pred, gt)
    assert m.mean_deg == pytest.approx(10.0, abs=1e-9)
    assert m.median_deg == pytest.approx(10.0, abs=1e-9)
    assert m.pct_11_25 == pytest.approx(50.0)
    assert m.pct_22_5 == pytest.approx(100.0)
    assert m.pct_30 == pytest.approx(100.0)


def test_normal_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        h, w = rng.integers(2, 17), rng.integers(2, 17)
        pred = rand_normals(rng, h, w)
        gt = rand_normals(rng, h, w)
        valid = rng.random((h, w)) > 0.3
        if not valid.any():
            valid[0, 0] = True
        m = normal_metrics(pred, gt, valid)
        o = oracle_normal(pred, gt, valid)
        assert np.allclose(m.as_tuple(), o, atol=1e-9)


def test_normal_symmetry_and_rotation_invariance():
    rng = np.random.default_rng(2)
    pred = rand_normals(rng, 8, 8)
    gt = rand_normals(rng, 8, 8)
    a = normal_metrics(pred, gt)
    b = normal_metrics(gt, pred)
    assert np.allclose(a.as_tuple(), b.as_tuple(), atol=1e-12)
    # random rotation applied to both maps
    q = np.linalg.qr(rng.normal(size=(3, 3)))[0]
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    c = normal_metrics(pred @ q.T, gt @ q.T)
    assert np.allclose(a.as_tuple(), c.as_tuple(), atol=1e-7)


def test_normal_empty_mask_rejected():
    n = rand_normals(np.random.default_rng(0), 4, 4)
    with pytest.raises(EvalError):
        normal_metrics(n, n, np.zeros((4, 4), dtype=bool))


# --------------------------------------------------------------------------
# segmentation

def oracle_iou(pred, gt, ignore):
    keep = [(p, g) for p, g in zip(pred.reshape(-1), gt.reshape(-1))
            if p not in ignore and g not in ignore]
    classes = sorted({p for p, _ in keep} | {g for _, g in keep})
    per, present = {}, []
    for c in classes:
        inter = sum(1 for p, g in keep if p == c and g == c)
        union = sum(1 for p, g in keep if p == c or g == c)
        per[c] = inter / union if union else 0.0
        if any(g == c for _, g in keep):
            present.append(per[c])
    return per, (sum(present) / len(present)) if present else 0.0


def test_iou_identity():
    m = np.array([[1, 1], [2, 2]])
    r = mean_iou(m, m)
    assert r.mean_iou == 1.0
    assert r.per_class == {1: 1.0, 2: 1.0}


def test_iou_half_example():
    pred = np.full((2, 4), 1)
    gt = np.array([[1, 1, 1, 1], [2, 2, 2, 2]])
    r = mean_iou(pred, gt)
    assert r.per_class[1] == pytest.approx(0.5)
    assert r.per_class[2] == 0.0
    assert r.mean_iou == pytest.approx(0.25)


def test_iou_matches_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        h, w = rng.integers(2, 17), rng.integers(2, 17)
        pred = rng.integers(0, 3, size=(h, w))
        gt = rng.integers(0, 3, size=(h, w))
        ignore = {0} if rng.random() < 0.5 else set()
        try:
            r = mean_iou(pred, gt, ignore)
        except EvalError:
            continue
        per, mean = oracle_iou(pred, gt, ignore)
        assert abs(r.mean_iou - mean) < 1e-9
        for c, v in per.items():
            assert abs(r.per_class[c] - v) < 1e-9


def test_iou_permutation_equivariance():
    rng = np.random.default_rng(4)
    pred = rng.integers(0, 4, size=(10, 10))
    gt = rng.integers(0, 4, size=(10, 10))
    a = mean_iou(pred, gt)
    perm = {0: 3, 1: 0, 2: 2, 3: 1}
    relabel = np.vectorize(perm.get)
    b = mean_iou(relabel(pred), relabel(gt))
    assert a.mean_iou == pytest.approx(b.mean_iou, abs=1e-12)
    for c, v in a.per_class.items():
        assert b.per_class[perm[c]] == pytest.approx(v, abs=1e-12)


def test_iou_absent_class_flagged():
    pred = np.array([[1, 2], [1, 2]])
    gt = np.array([[1, 1], [1, 1]])
    r = mean_iou(pred, gt)
    assert 2 in r.absent
    assert r.mean_iou == pytest.approx(r.per_class[1])


# --------------------------------------------------------------------------
# boundaries

def oracle_match(pred_px, gt_px, radius):
    """Repeated global-minimum greedy matching (O(n^3))."""
    pairs = []
    for pi, p in enumerate(pred_px):
        for gi, g in enumerate(gt_px):
            d2 = (p[0] - g[0]) ** 2 + (p[1] - g[1]) ** 2
            if math.sqrt(d2) <= radius:
                pairs.append((d2, pi, gi))
    used_p, used_g = set(), set()
    matches = 0
    while True:
        avail = [x for x in pairs if x[1] not in used_p and x[2] not in used_g]
        if not avail:
            return matches
        d2, pi, gi = min(avail)
        used_p.add(pi)
        used_g.add(gi)
        matches += 1


def oracle_boundary(preds, gts, tol):
    nt = len(BOUNDARY_THRESHOLDS)
    tp = [0] * nt
    npred = [0] * nt
    ngt = [0] * nt
    ois = 0.0

    def pr(m, np_, ng):
        if np_:
            p = m / np_
        else:
            p = 1.0 if ng == 0 else 0.0
        r = m / ng if ng else 1.0
        return p, r

    def f1(p, r):
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    for pred, gt in zip(preds, gts):
        h, w = gt.shape
        radius = tol * math.hypot(h, w)
        gt_px = list(zip(*np.nonzero(gt)))
        best = 0.0
        for ti, t in enumerate(BOUNDARY_THRESHOLDS):
            pred_px = list(zip(*np.nonzero(pred >= t)))
            m = oracle_match(pred_px, gt_px, radius)
            tp[ti] += m
            npred[ti] += len(pred_px)
            ngt[ti] += len(gt_px)
            best = max(best, f1(*pr(m, len(pred_px), len(gt_px))))
        ois += best

    points = []
    ods = 0.0
    for ti in range(nt):
        p, r = pr(tp[ti], npred[ti], ngt[ti])
        points.append((p, r))
        ods = max(ods, f1(p, r))

    # monotone envelope over recall
    by_r = {}
    for p, r in points:
        by_r[r] = max(by_r.get(r, 0.0), p)
    rs = sorted(by_r)
    ps = [by_r[r] for r in rs]
    for i in range(len(ps) - 2, -1, -1):
        ps[i] = max(ps[i], ps[i + 1])
    ap = 0.0
    for rq in np.linspace(0, 1, 101):
        val = 0.0
        for r, p in zip(rs, ps):
            if r >= rq - 1e-12:
                val = p
                break
        ap += val
    ap /= 101.0
    # recall at precision 0.5 on the envelope
    r50 = 0.0
    if ps and ps[0] >= 0.5:
        for i, (r, p) in enumerate(zip(rs, ps)):
            if p >= 0.5:
                r50 = r
                if i + 1 < len(rs) and ps[i + 1] < 0.5:
                    r2, p2 = rs[i + 1], ps[i + 1]
                    r50 = r + (r2 - r) * (p - 0.5) / (p - p2)
                    break
    return ods, ois / len(preds), ap, r50


def sparse_boundary_maps(rng, h, w, levels=(0.0, 0.4, 0.8, 1.0)):
    pred = rng.choice(levels, size=(h, w), p=(0.82, 0.06, 0.06, 0.06))
    gt = rng.random((h, w)) < 0.1
    return pred, gt


def test_boundary_identity():
    rng = np.random.default_rng(5)
    gt = rng.random((12, 12)) < 0.15
    m = boundary_metrics([gt.astype(float)], [gt])
    assert m.ods == pytest.approx(1.0)
    assert m.ois == pytest.approx(1.0)


def test_boundary_empty_prediction():
    gt = np.zeros((10, 10), dtype=bool)
    gt[4, 4] = True
    m = boundary_metrics([np.zeros((10, 10))], [gt])
    assert all(r == 0.0 for _, _, r in m.curve)
    assert m.ap == 0.0


def test_boundary_displaced_pixel_beyond_tol():
    gt = np.zeros((20, 20), dtype=bool)
    gt[3, 3] = True
    pred = np.zeros((20, 20))
    pred[12, 14] = 1.0   # far from (3, 3)
    m = boundary_metrics([pred], [gt], tol=0.0075)
    t, p, r = m.curve[40]
    assert p == 0.0 and r == 0.0
    assert m.ods == 0.0


def test_boundary_one_to_one_matching():
    # two predictions near one gt pixel: only one may match
    gt_px = np.array([[5.0, 5.0]])
    pred_px = np.array([[5.0, 5.0], [5.0, 6.0]])
    assert match_boundaries(pred_px, gt_px, radius=2.0) == 1
    assert match_boundaries(pred_px, np.array([[5.0, 5.0], [9.0, 9.0]]),
                            radius=2.0) == 1


def test_boundary_matches_oracle():
    rng = np.random.default_rng(6)
    for trial in range(100):
        h = int(rng.integers(6, 17))
        w = int(rng.integers(6, 17))
        pred, gt = sparse_boundary_maps(rng, h, w)
        tol = float(rng.choice([0.0075, 0.05, 0.12]))
        m = boundary_metrics([pred], [gt], tol=tol)
        o = oracle_boundary([pred], [gt], tol)
        assert abs(m.ods - o[0]) < 1e-9, trial
        assert abs(m.ois - o[1]) < 1e-9, trial
        assert abs(m.ap - o[2]) < 1e-9, trial
        assert abs(m.r50 - o[3]) < 1e-9, trial


def test_boundary_multi_image_aggregation_matches_oracle():
    rng = np.random.default_rng(7)
    preds, gts = [], []
    for _ in range(4):
        p, g = sparse_boundary_maps(rng, 10, 13)
        preds.append(p)
        gts.append(g)
    m = boundary_metrics(preds, gts, tol=0.08)
    o = oracle_boundary(preds, gts, 0.08)
    assert np.allclose([m.ods, m.ois, m.ap, m.r50], o, atol=1e-9)


def test_boundary_tol_monotonicity():
    rng = np.random.default_rng(8)
    pred, gt = sparse_boundary_maps(rng, 14, 14)
    small = boundary_metrics([pred], [gt], tol=0.02)
    large = boundary_metrics([pred], [gt], tol=0.2)
    assert large.ods >= small.ods - 1e-12


def test_boundary_rejects_bad_probabilities():
    gt = np.zeros((4, 4), dtype=bool)
    with pytest.raises(EvalError):
        boundary_metrics([np.full((4, 4), 1.5)], [gt])
