"""Image selection by histogram similarity against a reference corpus.

A candidate is kept iff its best color-histogram intersection and best
depth-histogram intersection over the references are both strictly greater
than the threshold (default 0.70).
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EvalError
from .image_io import read_gray16, read_rgb8

COLOR_BINS = 8          # per channel -> 8x8x8 joint histogram
DEPTH_BINS = 64
DEPTH_RANGE_M = 10.0


@dataclass
class Histogram:
    values: np.ndarray
    layout: str             # "color-512" | "depth-64"
    degenerate: bool = False  # all-invalid input, replaced by uniform


@dataclass
class SelectionScore:
    color: float
    depth: float
    best_color_ref: int = -1
    best_depth_ref: int = -1

    def kept(self, tau: float) -> bool:
        return self.color > tau and self.depth > tau


def color_histogram(image: np.ndarray) -> Histogram:
    """Joint 8x8x8 RGB histogram (value // 32 per channel), normalized."""
    if image.size == 0:
        raise EvalError("color_histogram: empty image")
    img = np.asarray(image)
    idx = (img.reshape(-1, 3) // 32).astype(np.int64)
    flat = (idx[:, 0] * COLOR_BINS + idx[:, 1]) * COLOR_BINS + idx[:, 2]
    counts = np.bincount(flat, minlength=COLOR_BINS ** 3).astype(np.float64)
    return Histogram(counts / counts.sum(), "color-512")


def depth_histogram(depth_mm: np.ndarray) -> Histogram:
    """64 uniform bins over [0, 10] m; invalid (0) pixels excluded; deeper
    than 10 m clamps into the last bin. All-invalid input yields a flagged
    uniform histogram."""
    d = np.asarray(depth_mm)
    valid = d > 0
    if not valid.any():
        return Histogram(np.full(DEPTH_BINS, 1.0 / DEPTH_BINS), "depth-64",
                         degenerate=True)
    meters = d[valid].astype(np.float64) / 1000.0
    bins = np.minimum((meters / DEPTH_RANGE_M * DEPTH_BINS).astype(np.int64),
                      DEPTH_BINS - 1)
    counts = np.bincount(bins, minlength=DEPTH_BINS).astype(np.float64)
    return Histogram(counts / counts.sum(), "depth-64")


def intersection(a: Histogram, b: Histogram) -> float:
    """Histogram intersection: sum of per-bin minima, in [0, 1]."""
    if a.layout != b.layout:
        raise EvalError(f"histogram layout mismatch: {a.layout} vs {b.layout}")
    return float(np.minimum(a.values, b.values).sum())


@dataclass
class ReferenceCorpus:
    color: list[Histogram] = field(default_factory=list)
    depth: list[Histogram] = field(default_factory=list)

    def __len__(self):
        return len(self.color)


def corpus_hash(directory: str | Path) -> str:
    """Content hash of the paired *.color.png / *.depth.png files."""
    d = Path(directory)
    h = hashlib.sha256()
    for p in sorted(d.glob("*.color.png")) + sorted(d.glob("*.depth.png")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    h.update(f"{COLOR_BINS}:{DEPTH_BINS}:{DEPTH_RANGE_M}".encode())
    return h.hexdigest()


def load_reference_corpus(directory: str | Path,
                          cache: bool = True) -> ReferenceCorpus:
    """Histograms for every *.color.png / *.depth.png pair, cached on disk
    keyed by corpus content hash."""
    d = Path(directory)
    stems = sorted(p.name[:-len(".color.png")] for p in d.glob("*.color.png"))
    if not stems:
        raise EvalError(f"reference corpus {d}: no *.color.png files")
    cache_path = d / f".histcache-{corpus_hash(d)[:16]}.npz"
    if cache and cache_path.exists():
        data = np.load(cache_path)
        return ReferenceCorpus(
            color=[Histogram(v, "color-512") for v in data["color"]],
            depth=[Histogram(v, "depth-64") for v in data["depth"]])
    corpus = ReferenceCorpus()
    for stem in stems:
        corpus.color.append(color_histogram(read_rgb8(d / f"{stem}.color.png")))
        depth_file = d / f"{stem}.depth.png"
        if not depth_file.exists():
            raise EvalError(f"reference corpus: missing {depth_file.name}")
        corpus.depth.append(depth_histogram(read_gray16(depth_file)))
    if cache:
        np.savez(cache_path,
                 color=np.stack([h.values for h in corpus.color]),
                 depth=np.stack([h.values for h in corpus.depth]))
    return corpus


def score_candidate(color_hist: Histogram, depth_hist: Histogram,
                    refs: ReferenceCorpus) -> SelectionScore:
    """Max intersection over the reference set, per channel."""
    if len(refs) == 0:
        raise EvalError("reference corpus is empty")
    best_c, best_ci = -1.0, -1
    for i, r in enumerate(refs.color):
        v = intersection(color_hist, r)
        if v > best_c:
            best_c, best_ci = v, i
    best_d, best_di = -1.0, -1
    for i, r in enumerate(refs.depth):
        v = intersection(depth_hist, r)
        if v > best_d:
            best_d, best_di = v, i
    return SelectionScore(color=best_c, depth=best_d,
                          best_color_ref=best_ci, best_depth_ref=best_di)


def select(candidates, refs: ReferenceCorpus, tau: float = 0.70):
    """Filter FrameBundles by histogram similarity.

    Returns (kept list, per-candidate SelectionScore list). Keeping is
    strict: both scores must exceed tau.
    """
    kept = []
    scores = []
    for bundle in candidates:
        sc = score_candidate(color_histogram(bundle.color),
                             depth_histogram(bundle.depth), refs)
        scores.append(sc)
        if sc.kept(tau):
            kept.append(bundle)
    return kept, scores


def class_stats(bundles, categories=None) -> list[dict]:
    """Per-category pixel counts and fractions over the bundles' semantic
    maps. Rows sorted by category id; fractions sum to 1 over counted
    (non-background) pixels."""
    if not bundles:
        raise EvalError("class_stats: no bundles")
    counts: dict[int, int] = {}
    for b in bundles:
        ids, c = np.unique(b.semantic, return_counts=True)
        for i, n in zip(ids.tolist(), c.tolist()):
            if i == 0:
                continue
            counts[i] = counts.get(i, 0) + n
    total = sum(counts.values())
    rows = []
    for cid in sorted(counts):
        name = categories.name_of(cid) if categories is not None else str(cid)
        rows.append({"category_id": cid, "category": name,
                     "pixels": counts[cid],
                     "fraction": counts[cid] / total if total else 0.0})
    return rows


def write_stats_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["category_id", "category",
                                           "pixels", "fraction"])
        w.writeheader()
        w.writerows(rows)
