import numpy as np
import pytest

from pbrgen.curation import (
    Histogram,
    class_stats,
    color_histogram,
    depth_histogram,
    intersection,
    load_reference_corpus,
    score_candidate,
    select,
)
from pbrgen.errors import EvalError


def test_color_histogram_black():
    img = np.zeros((10, 10, 3), dtype=np.uint8)
    h = color_histogram(img)
    assert h.values[0] == 1.0
    assert h.values.sum() == pytest.approx(1.0)


def test_color_histogram_half_half():
    img = np.zeros((2, 10, 3), dtype=np.uint8)
    img[1] = 255
    h = color_histogram(img)
    nonzero = np.sort(h.values[h.values > 0])
    assert np.allclose(nonzero, [0.5, 0.5])


def test_color_histogram_normalized_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        img = rng.integers(0, 256, size=(7, 9, 3)).astype(np.uint8)
        assert color_histogram(img).values.sum() == pytest.approx(1.0)


def test_depth_histogram_constant():
    d = np.full((8, 8), 2000, dtype=np.uint16)   # 2 m
    h = depth_histogram(d)
    assert h.values.max() == 1.0
    expected_bin = int(2.0 / 10.0 * 64)
    assert h.values[expected_bin] == 1.0


def test_depth_histogram_all_invalid():
    h = depth_histogram(np.zeros((4, 4), dtype=np.uint16))
    assert h.degenerate
    assert np.allclose(h.values, 1.0 / 64)


def test_depth_histogram_clamps_deep():
    d = np.full((4, 4), 12_000, dtype=np.uint16)  # 12 m > 10 m range
    h = depth_histogram(d)
    assert h.values[-1] == 1.0


def test_intersection_examples():
    a = Histogram(np.array([0.5, 0.5]), "x")
    b = Histogram(np.array([0.25, 0.75]), "x")
    assert intersection(a, b) == pytest.approx(0.75)
    assert intersection(a, a) == pytest.approx(1.0)
    c = Histogram(np.array([1.0, 0.0]), "x")
    d = Histogram(np.array([0.0, 1.0]), "x")
    assert intersection(c, d) == 0.0
    assert intersection(a, b) == intersection(b, a)
    with pytest.raises(EvalError):
        intersection(a, Histogram(np.array([1.0]), "y"))


class FakeBundle:
    def __init__(self, color, depth):
        self.color = color
        self.depth = depth


def flat_color(v, n=64):
    img = np.full((n, n, 3), v, dtype=np.uint8)
    return img


def flat_depth(mm, n=64):
    return np.full((n, n), mm, dtype=np.uint16)


class FakeRefs:
    def __init__(self, pairs):
        self.color = [color_histogram(c) for c, _ in pairs]
        self.depth = [depth_histogram(d) for _, d in pairs]

    def __len__(self):
        return len(self.color)


def test_select_identical_kept_and_black_rejected():
    ref = (flat_color(200), flat_depth(2000))
    refs = FakeRefs([ref])
    same = FakeBundle(*ref)
    black = FakeBundle(flat_color(0), flat_depth(2000))
    kept, scores = select([same, black], refs, tau=0.70)
    assert kept == [same]
    assert scores[0].color == pytest.approx(1.0)
    assert scores[0].depth == pytest.approx(1.0)
    assert scores[1].color == 0.0


def test_select_exactly_tau_rejected():
    # candidate/ref overlap exactly 0.70 in both channels
    cand_color = np.zeros((10, 10, 3), dtype=np.uint8)
    ref_color = np.zeros((10, 10, 3), dtype=np.uint8)
    ref_color[7:] = 255              # 30 of 100 pixels differ
    cand_depth = flat_depth(2000, n=10)
    ref_depth = flat_depth(2000, n=10).copy()
    ref_depth.reshape(-1)[:30] = 8000
    refs = FakeRefs([(ref_color, ref_depth)])
    cand = FakeBundle(cand_color, cand_depth)
    sc = score_candidate(color_histogram(cand.color),
                         depth_histogram(cand.depth), refs)
    assert sc.color == 0.70 and sc.depth == 0.70
    kept, _ = select([cand], refs, tau=0.70)
    assert kept == []


def _random_candidates(rng, n, size=12):
    out = []
    for _ in range(n):
        c = rng.integers(0, 256, size=(size, size, 3)).astype(np.uint8)
        d = rng.integers(0, 9000, size=(size, size)).astype(np.uint16)
        out.append(FakeBundle(c, d))
    return out


def test_select_matches_brute_force_and_monotone():
    rng = np.random.default_rng(7)
    cands = _random_candidates(rng, 50)
    refs_raw = [(r.color, r.depth) for r in _random_candidates(rng, 20)]
    refs = FakeRefs(refs_raw)

    def brute_force_kept(tau):
        kept = []
        for cand in cands:
            ch = color_histogram(cand.color)
            dh = depth_histogram(cand.depth)
            best_c = max(float(np.minimum(ch.values, r.values).sum())
                         for r in refs.color)
            best_d = max(float(np.minimum(dh.values, r.values).sum())
                         for r in refs.depth)
            if best_c > tau and best_d > tau:
                kept.append(cand)
        return kept

    prev = None
    for tau in (0.0, 0.5, 0.70, 0.9, 1.0):
        kept, _ = select(cands, refs, tau=tau)
        assert kept == brute_force_kept(tau)
        if prev is not None:
            assert set(map(id, kept)) <= set(map(id, prev))
        prev = kept
    assert len(select(cands, refs, tau=0.0)[0]) == len(cands)
    assert select(cands, refs, tau=1.0)[0] == []


def test_reference_corpus_cache(tmp_path):
    from pbrgen.image_io import write_gray16, write_rgb8
    rng = np.random.default_rng(3)
    for i in range(3):
        write_rgb8(tmp_path / f"r{i}.color.png",
                   rng.integers(0, 255, (8, 8, 3)).astype(np.uint8))
        write_gray16(tmp_path / f"r{i}.depth.png",
                     rng.integers(0, 5000, (8, 8)).astype(np.uint16))
    refs = load_reference_corpus(tmp_path)
    assert len(refs) == 3
    caches = list(tmp_path.glob(".histcache-*.npz"))
    assert len(caches) == 1
    again = load_reference_corpus(tmp_path)
    for a, b in zip(refs.color, again.color):
        assert np.array_equal(a.values, b.values)


def test_empty_reference_corpus(tmp_path):
    with pytest.raises(EvalError):
        load_reference_corpus(tmp_path)


class SemBundle:
    def __init__(self, semantic):
        self.semantic = semantic


def test_class_stats():
    a = SemBundle(np.full((4, 4), 1, dtype=np.uint16))
    rows = class_stats([a])
    assert len(rows) == 1 and rows[0]["fraction"] == 1.0
    b = SemBundle(np.full((4, 4), 2, dtype=np.uint16))
    rows = class_stats([a, b])
    by_id = {r["category_id"]: r for r in rows}
    assert by_id[1]["pixels"] == 16 and by_id[2]["pixels"] == 16
    assert sum(r["fraction"] for r in rows) == pytest.approx(1.0)
    with pytest.raises(EvalError):
        class_stats([])
