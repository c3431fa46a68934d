"""IceSlider: an 8x8 board where the agent slides until a rock or the edge stops it."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .noise import add_noise
from .puzzle import DELTAS

SIZE = 8
PATCH = 8
ICE, ROCK, AGENT, GOAL = 0, 1, 2, 3
CELL_CLASSES = ("ice", "rock", "agent", "goal")
ROCK_DENSITY = 0.2
MAX_RETRIES = 1000

COLORS = {
    ICE: (1.0, 1.0, 1.0),
    ROCK: (0.3, 0.3, 0.3),
    GOAL: (0.0, 0.8, 0.0),
    AGENT: (0.9, 0.0, 0.0),
}


@dataclass(frozen=True)
class IceBoard:
    """``cells`` holds ICE / ROCK / GOAL codes; the agent is kept separately."""

    cells: tuple[tuple[int, ...], ...]
    agent: tuple[int, int]

    def __post_init__(self):
        arr = np.asarray(self.cells)
        if arr.shape != (SIZE, SIZE):
            raise ValueError(f"board must be {SIZE}x{SIZE}, got {arr.shape}")
        if int((arr == GOAL).sum()) != 1:
            raise ValueError("board needs exactly one goal cell")
        r, c = self.agent
        if not (0 <= r < SIZE and 0 <= c < SIZE) or arr[r, c] == ROCK:
            raise ValueError(f"agent {self.agent} must stand on a free cell")

    @classmethod
    def from_array(cls, cells: np.ndarray, agent: tuple[int, int]) -> "IceBoard":
        return cls(tuple(tuple(int(v) for v in row) for row in np.asarray(cells)),
                   (int(agent[0]), int(agent[1])))

    @property
    def grid(self) -> np.ndarray:
        return np.array(self.cells, dtype=np.int64)

    def labels(self) -> np.ndarray:
        """64 per-cell classes (ice, rock, agent, goal), agent drawn over its cell."""
        lab = self.grid.copy()
        lab[self.agent] = AGENT
        return lab.reshape(-1)


def ice_step(board: IceBoard, action: int) -> IceBoard:
    dr, dc = DELTAS[action]
    r, c = board.agent
    cells = board.cells
    while True:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < SIZE and 0 <= nc < SIZE) or cells[nr][nc] == ROCK:
            break
        r, c = nr, nc
    return IceBoard(cells, (r, c))


def reachable_positions(board: IceBoard) -> set[tuple[int, int]]:
    """Positions where the agent can come to rest, by BFS over slide moves."""
    seen = {board.agent}
    queue = deque([board])
    while queue:
        cur = queue.popleft()
        for a in DELTAS:
            nxt = ice_step(cur, a)
            if nxt.agent not in seen:
                seen.add(nxt.agent)
                queue.append(nxt)
    return seen


def generate_ice_level(rng: np.random.Generator, density: float = ROCK_DENSITY) -> IceBoard:
    """Random rocks on interior cells, plus an agent and a goal it can stop on."""
    for _ in range(MAX_RETRIES):
        cells = np.full((SIZE, SIZE), ICE, dtype=np.int64)
        interior = rng.random((SIZE - 2, SIZE - 2)) < density
        cells[1:-1, 1:-1][interior] = ROCK
        free = np.argwhere(cells != ROCK)
        if len(free) < 2:
            continue
        a, g = rng.choice(len(free), size=2, replace=False)
        agent, goal = tuple(int(v) for v in free[a]), tuple(int(v) for v in free[g])
        cells[goal] = GOAL
        board = IceBoard.from_array(cells, agent)
        if goal in reachable_positions(board):
            return board
    raise RuntimeError(f"no solvable IceSlider level after {MAX_RETRIES} attempts")


def _patches() -> dict[int, np.ndarray]:
    out = {}
    for code, rgb in COLORS.items():
        out[code] = np.broadcast_to(np.array(rgb), (PATCH, PATCH, 3)).copy()
    # rocks get a lighter core so they are not a flat block
    out[ROCK][2:6, 2:6] = 0.5
    return out


PATCHES = _patches()


def render_ice(board: IceBoard, noisy: bool = False, rng: np.random.Generator | None = None,
               noise_std: float = 0.5, noise_mode: str = "std") -> np.ndarray:
    """Render to a (64, 64, 3) image from fixed 8x8 patches."""
    img = np.empty((SIZE * PATCH, SIZE * PATCH, 3))
    for r in range(SIZE):
        for c in range(SIZE):
            img[r * PATCH:(r + 1) * PATCH, c * PATCH:(c + 1) * PATCH] = PATCHES[board.cells[r][c]]
    r, c = board.agent
    # agent sits inset on its cell so the cell type stays visible at the border
    img[r * PATCH + 1:(r + 1) * PATCH - 1, c * PATCH + 1:(c + 1) * PATCH - 1] = COLORS[AGENT]
    if noisy:
        if rng is None:
            raise ValueError("noisy rendering needs a random generator")
        img = add_noise(img, rng, std=noise_std, mode=noise_mode)
    return img
