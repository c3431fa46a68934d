"""Digit exemplar pools for the puzzle renderer.

Exemplars come either from MNIST IDX files or from a built-in 5x7 bitmap font
rendered with random jitter, so that everything works offline.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .idx import find_mnist, read_idx_file

CLASSES = tuple(range(1, 9))
GLYPH_SIZE = 28
DEFAULT_POOL = 200

_FONT = {
    1: ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."],
    2: [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"],
    3: ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."],
    4: ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."],
    5: ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."],
    6: ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."],
    7: ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."],
    8: [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."],
}
SCALE = 3
JITTER = 2


def font_mask(digit: int) -> np.ndarray:
    return np.array([[ch == "#" for ch in row] for row in _FONT[digit]], dtype=np.float64)


def glyph_template(digit: int) -> np.ndarray:
    """Centered, un-jittered 28x28 rendering at full intensity."""
    return _place(digit, 0, 0, 1.0)


def _place(digit: int, dy: int, dx: int, intensity: float) -> np.ndarray:
    big = np.kron(font_mask(digit), np.ones((SCALE, SCALE)))
    h, w = big.shape
    top = (GLYPH_SIZE - h) // 2 + dy
    left = (GLYPH_SIZE - w) // 2 + dx
    img = np.zeros((GLYPH_SIZE, GLYPH_SIZE))
    img[top:top + h, left:left + w] = big * intensity
    return img


@dataclass
class DigitSource:
    """Per-class exemplar pools plus the global exemplar ids they were drawn from."""

    pools: dict[int, np.ndarray]
    ids: dict[int, np.ndarray]
    provenance: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in CLASSES:
            if k not in self.pools or len(self.pools[k]) == 0:
                raise ValueError(f"digit source has an empty pool for class {k}")

    def __getitem__(self, k: int) -> np.ndarray:
        return self.pools[k]

    def __contains__(self, k: int) -> bool:
        return k in self.pools

    def keys(self):
        return self.pools.keys()


def synth_glyph_source(seed: int = 0, per_class: int = DEFAULT_POOL, offset: int = 0) -> DigitSource:
    """Jittered bitmap-font digits; exemplar ``i`` of class ``k`` depends only on (seed, k, i).

    Pools built from disjoint ``[offset, offset + per_class)`` ranges therefore
    share no exemplar.
    """
    pools, ids = {}, {}
    for k in CLASSES:
        idx = np.arange(offset, offset + per_class)
        imgs = np.empty((per_class, GLYPH_SIZE, GLYPH_SIZE))
        for j, i in enumerate(idx):
            r = np.random.default_rng([seed, k, int(i)])
            dy, dx = r.integers(-JITTER, JITTER + 1, size=2)
            imgs[j] = _place(k, int(dy), int(dx), float(r.uniform(0.7, 1.0)))
        pools[k], ids[k] = imgs, idx
    return DigitSource(pools, ids, "synthetic", {"seed": seed, "offset": offset})


def mnist_source(images: np.ndarray, labels: np.ndarray, start: int, stop: int) -> DigitSource:
    """Exemplars of classes 1..8 among ``images[start:stop]``."""
    pools, ids = {}, {}
    sel_labels = labels[start:stop]
    for k in CLASSES:
        idx = np.flatnonzero(sel_labels == k) + start
        pools[k], ids[k] = images[idx], idx
    return DigitSource(pools, ids, "idx-file", {"range": [start, stop]})


def split_sources(n_splits: int = 3, per_class: int = DEFAULT_POOL, seed: int = 0,
                  mnist_dir: str | os.PathLike | None = None) -> list[DigitSource]:
    """Disjoint digit sources, one per split.

    With ``mnist_dir`` pointing at the official training files, the training
    set is cut into equal index ranges; otherwise synthetic glyphs from
    disjoint id ranges are used.
    """
    if mnist_dir is not None:
        found = find_mnist(mnist_dir)
        if found is None:
            raise FileNotFoundError(f"no MNIST training IDX files under {mnist_dir}")
        images, labels = read_idx_file(found[0]), read_idx_file(found[1])
        chunk = len(images) // n_splits
        try:
            return [mnist_source(images, labels, i * chunk, (i + 1) * chunk) for i in range(n_splits)]
        except ValueError as exc:
            raise ValueError(f"not enough MNIST exemplars for a disjoint {n_splits}-way partition") from exc
    return [synth_glyph_source(seed, per_class, offset=i * per_class) for i in range(n_splits)]
