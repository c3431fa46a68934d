"""Offline transition datasets for both benchmarks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..envs import iceslider, puzzle
from .digits import DigitSource, split_sources

log = logging.getLogger(__name__)

BENCHMARKS = ("puzzle", "iceslider")
SPLITS = ("train", "val", "test")
SPLIT_SIZES = {
    "puzzle": {"train": 30_000, "val": 6_000, "test": 6_000},
    "iceslider": {"train": 40_000, "val": 10_000, "test": 10_000},
}
OBS_SHAPE = {"puzzle": (88, 88, 1), "iceslider": (64, 64, 3)}
N_CELLS = {"puzzle": 9, "iceslider": 64}
N_CLASSES = {"puzzle": 9, "iceslider": 4}
ICE_EPISODE = 20
PUZZLE_WALK = 100


@dataclass
class TransitionRecord:
    obs: np.ndarray
    action: int
    next_obs: np.ndarray
    truth: np.ndarray
    truth_next: np.ndarray


@dataclass
class TransitionSet:
    """Columnar split storage; observations are u8 intensities (value = round(255 x))."""

    obs: np.ndarray
    actions: np.ndarray
    next_obs: np.ndarray
    truth: np.ndarray
    truth_next: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, idx) -> "TransitionSet":
        return TransitionSet(self.obs[idx], self.actions[idx], self.next_obs[idx],
                             self.truth[idx], self.truth_next[idx], dict(self.meta))

    @staticmethod
    def from_records(records: list[TransitionRecord]) -> "TransitionSet":
        return TransitionSet(
            obs=np.stack([quantize(r.obs) for r in records]),
            actions=np.array([r.action for r in records], dtype=np.uint8),
            next_obs=np.stack([quantize(r.next_obs) for r in records]),
            truth=np.stack([r.truth for r in records]).astype(np.uint8),
            truth_next=np.stack([r.truth_next for r in records]).astype(np.uint8),
        )


def quantize(x: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(x, 0.0, 1.0) * 255.0).astype(np.uint8)


def dequantize(x: np.ndarray, dtype=np.float32) -> np.ndarray:
    return x.astype(dtype) * dtype(1.0 / 255.0)


def generate_trajectory(kind: str, length: int, rng: np.random.Generator, noisy: bool = False,
                        digits: DigitSource | None = None, noise_std: float = 0.5,
                        noise_mode: str = "std") -> list[TransitionRecord]:
    """Uniform random-action walk.

    Puzzle moves that would push the blank off the board are resampled, never
    recorded. Blocked IceSlider moves are recorded as null transitions.
    Every timestep is rendered once, so record ``i``'s next observation is
    record ``i + 1``'s observation.
    """
    records: list[TransitionRecord] = []
    if kind == "puzzle":
        if digits is None:
            raise ValueError("puzzle trajectories need a digit source")

        def render(s):
            return puzzle.render_puzzle(s, digits, rng, noisy, noise_std, noise_mode)

        state = puzzle.sample_solvable_state(rng)
        frame = render(state)
        while len(records) < length:
            action = int(rng.integers(4))
            nxt = puzzle.puzzle_step(state, action)
            if nxt is None:
                continue
            nframe = render(nxt)
            records.append(TransitionRecord(frame, action, nframe,
                                            np.array(state.tiles), np.array(nxt.tiles)))
            state, frame = nxt, nframe
    elif kind == "iceslider":
        def render(b):
            return iceslider.render_ice(b, noisy, rng, noise_std, noise_mode)

        board = iceslider.generate_ice_level(rng)
        frame = render(board)
        for _ in range(length):
            action = int(rng.integers(4))
            nxt = iceslider.ice_step(board, action)
            nframe = render(nxt)
            records.append(TransitionRecord(frame, action, nframe, board.labels(), nxt.labels()))
            board, frame = nxt, nframe
    else:
        raise ValueError(f"unknown benchmark {kind!r}")
    return records


def generate_split(kind: str, size: int, seed: int, noisy: bool = False,
                   digits: DigitSource | None = None, traj_len: int = PUZZLE_WALK,
                   noise_std: float = 0.5, noise_mode: str = "std") -> TransitionSet:
    """``size`` transitions from independent trajectories.

    Trajectory ``i`` uses the generator seeded by ``SeedSequence(seed).spawn``'s
    ``i``-th child, so splits can be regenerated piecewise.
    """
    length = ICE_EPISODE if kind == "iceslider" else traj_len
    n_traj = -(-size // length)
    children = np.random.SeedSequence(seed).spawn(n_traj)
    records: list[TransitionRecord] = []
    for child in children:
        rng = np.random.default_rng(child)
        records.extend(generate_trajectory(kind, length, rng, noisy, digits, noise_std, noise_mode))
    out = TransitionSet.from_records(records[:size])
    out.meta = {"seed": seed, "trajectory_length": length}
    return out


def build_splits(benchmark: str, noisy: bool = False, seeds=(0, 1, 2), sizes: dict | None = None,
                 traj_len: int = PUZZLE_WALK, digits_per_class: int = 200, digit_seed: int = 0,
                 mnist_dir=None, noise_std: float = 0.5, noise_mode: str = "std") -> dict[str, TransitionSet]:
    """Train/val/test splits with distinct seeds and, for the puzzle, disjoint digit pools."""
    if benchmark not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {benchmark!r}")
    seeds = [int(s) for s in seeds]
    if len(seeds) != 3 or len(set(seeds)) != 3:
        raise ValueError(f"need three distinct split seeds, got {seeds}")
    sizes = dict(SPLIT_SIZES[benchmark], **(sizes or {}))
    sources: list[DigitSource | None] = [None] * 3
    if benchmark == "puzzle":
        sources = split_sources(3, digits_per_class, digit_seed, mnist_dir)
    out = {}
    for name, seed, src in zip(SPLITS, seeds, sources):
        log.info("generating %s/%s: %d transitions (seed %d)", benchmark, name, sizes[name], seed)
        ts = generate_split(benchmark, sizes[name], seed, noisy, src, traj_len, noise_std, noise_mode)
        ts.meta.update(benchmark=benchmark, noisy=bool(noisy))
        if src is not None:
            ts.meta["digit_ids"] = {k: [int(v) for v in src.ids[k][[0, -1]]] for k in src.ids}
            ts.meta["digit_provenance"] = src.provenance
        out[name] = ts
    return out
