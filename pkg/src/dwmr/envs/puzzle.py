"""3x3 sliding-tile puzzle with MNIST-style digit rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .noise import add_noise

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTIONS = ("up", "down", "left", "right")
DELTAS = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

SIDE = 3
CELL = 28
GUTTER = 1
CANVAS = SIDE * CELL + (SIDE + 1) * GUTTER  # 88
N_TILE_CLASSES = 9


@dataclass(frozen=True)
class PuzzleState:
    """Row-major tile ids; 0 is the blank."""

    tiles: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.tiles) != list(range(SIDE * SIDE)):
            raise ValueError(f"not a permutation of 0..8: {self.tiles}")

    @classmethod
    def from_grid(cls, grid) -> "PuzzleState":
        return cls(tuple(int(v) for v in np.asarray(grid).reshape(-1)))

    @property
    def grid(self) -> np.ndarray:
        return np.array(self.tiles, dtype=np.int64).reshape(SIDE, SIDE)

    @property
    def blank(self) -> tuple[int, int]:
        return divmod(self.tiles.index(0), SIDE)


GOAL = PuzzleState((1, 2, 3, 4, 5, 6, 7, 8, 0))


def one_hot(action: int, n: int = 4) -> np.ndarray:
    v = np.zeros(n)
    v[action] = 1.0
    return v


def puzzle_step(state: PuzzleState, action: int) -> PuzzleState | None:
    """Move the blank one cell; returns None when the move would leave the grid."""
    r, c = state.blank
    dr, dc = DELTAS[action]
    nr, nc = r + dr, c + dc
    if not (0 <= nr < SIDE and 0 <= nc < SIDE):
        return None
    tiles = list(state.tiles)
    a, b = r * SIDE + c, nr * SIDE + nc
    tiles[a], tiles[b] = tiles[b], tiles[a]
    return PuzzleState(tuple(tiles))


def inversions(state: PuzzleState) -> int:
    seq = [t for t in state.tiles if t != 0]
    return sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])


def puzzle_is_solvable(state: PuzzleState) -> bool:
    # odd board width: reachable from the goal iff the inversion count is even
    return inversions(state) % 2 == 0


def sample_solvable_state(rng: np.random.Generator) -> PuzzleState:
    tiles = [int(t) for t in rng.permutation(SIDE * SIDE)]
    state = PuzzleState(tuple(tiles))
    if not puzzle_is_solvable(state):
        i, j = [k for k, t in enumerate(tiles) if t != 0][:2]
        tiles[i], tiles[j] = tiles[j], tiles[i]
        state = PuzzleState(tuple(tiles))
    return state


def cell_origin(row: int, col: int) -> tuple[int, int]:
    return GUTTER + row * (CELL + GUTTER), GUTTER + col * (CELL + GUTTER)


def render_puzzle(state: PuzzleState, digits: Mapping[int, np.ndarray], rng: np.random.Generator,
                  noisy: bool = False, noise_std: float = 0.5, noise_mode: str = "std") -> np.ndarray:
    """Render to an (88, 88, 1) image with a fresh digit exemplar for every tile.

    ``digits`` maps each class 1..8 to an (M, 28, 28) pool of exemplars.
    """
    missing = [k for k in range(1, N_TILE_CLASSES) if k not in digits or len(digits[k]) == 0]
    if missing:
        raise KeyError(f"digit source has no exemplars for classes {missing}")
    img = np.zeros((CANVAS, CANVAS), dtype=np.float64)
    for idx, tile in enumerate(state.tiles):
        if tile == 0:
            continue
        pool = digits[tile]
        r0, c0 = cell_origin(*divmod(idx, SIDE))
        img[r0:r0 + CELL, c0:c0 + CELL] = pool[rng.integers(len(pool))]
    img = img[:, :, None]
    if noisy:
        img = add_noise(img, rng, std=noise_std, mode=noise_mode)
    return img
