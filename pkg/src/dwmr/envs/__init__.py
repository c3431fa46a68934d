from .iceslider import (
    AGENT,
    GOAL,
    ICE,
    ROCK,
    IceBoard,
    generate_ice_level,
    ice_step,
    reachable_positions,
    render_ice,
)
from .noise import add_noise, noise_scale
from .puzzle import (
    ACTIONS,
    DOWN,
    GOAL as PUZZLE_GOAL,
    LEFT,
    RIGHT,
    UP,
    PuzzleState,
    one_hot,
    puzzle_is_solvable,
    puzzle_step,
    render_puzzle,
    sample_solvable_state,
)

__all__ = [
    "ACTIONS", "UP", "DOWN", "LEFT", "RIGHT", "ICE", "ROCK", "AGENT", "GOAL", "PUZZLE_GOAL",
    "PuzzleState", "IceBoard", "puzzle_step", "puzzle_is_solvable", "sample_solvable_state",
    "render_puzzle", "ice_step", "generate_ice_level", "reachable_positions", "render_ice",
    "add_noise", "noise_scale", "one_hot",
]
