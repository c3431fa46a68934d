import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dwmr import envs
from dwmr.datasets import synth_glyph_source
from dwmr.envs import iceslider, puzzle
from dwmr.envs import IceBoard, PuzzleState

import oracles

perms = st.permutations(list(range(9))).map(lambda t: PuzzleState(tuple(t)))
actions = st.integers(0, 3)


@pytest.fixture(scope="module")
def digits():
    return synth_glyph_source(seed=0, per_class=5).pools


# ---------------------------------------------------------------- puzzle
def test_blank_up_from_centre():
    s = PuzzleState((1, 2, 3, 4, 0, 5, 6, 7, 8))
    nxt = envs.puzzle_step(s, envs.UP)
    assert nxt.blank == (0, 1)
    assert nxt.grid[1, 1] == 2


def test_move_off_grid_rejected():
    s = PuzzleState((0, 1, 2, 3, 4, 5, 6, 7, 8))
    assert envs.puzzle_step(s, envs.UP) is None
    assert envs.puzzle_step(s, envs.LEFT) is None


@given(perms, actions)
def test_inverse_move_restores_state(state, action):
    inverse = {0: 1, 1: 0, 2: 3, 3: 2}[action]
    nxt = envs.puzzle_step(state, action)
    if nxt is not None:
        assert envs.puzzle_step(nxt, inverse) == state
        assert sorted(nxt.tiles) == list(range(9))


def test_invalid_state_rejected():
    with pytest.raises(ValueError):
        PuzzleState((1, 1, 2, 3, 4, 5, 6, 7, 8))


def test_solvability_examples():
    assert envs.puzzle_is_solvable(envs.PUZZLE_GOAL)
    assert not envs.puzzle_is_solvable(PuzzleState((2, 1, 3, 4, 5, 6, 7, 8, 0)))


@pytest.mark.slow
def test_parity_rule_matches_bfs_over_all_permutations():
    reachable = oracles.bfs_reachable_from_goal()
    assert len(reachable) == 181440
    mismatches = sum(envs.puzzle_is_solvable(PuzzleState(t)) != (t in reachable) for t in oracles.all_permutations())
    assert mismatches == 0


def test_solvability_invariant_under_steps():
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        s = PuzzleState(tuple(int(v) for v in rng.permutation(9)))
        nxt = envs.puzzle_step(s, int(rng.integers(4)))
        if nxt is not None:
            assert envs.puzzle_is_solvable(nxt) == envs.puzzle_is_solvable(s)


def test_sampler_solvable_deterministic_and_uniform_blank():
    rng = np.random.default_rng(5)
    states = [envs.sample_solvable_state(rng) for _ in range(10_000)]
    assert all(envs.puzzle_is_solvable(s) for s in states[:1000])
    a = envs.sample_solvable_state(np.random.default_rng(9))
    assert a == envs.sample_solvable_state(np.random.default_rng(9))
    counts = np.bincount([s.tiles.index(0) for s in states], minlength=9)
    expected = 10_000 / 9
    sigma = np.sqrt(10_000 * (1 / 9) * (8 / 9))
    assert np.all(np.abs(counts - expected) < 3 * sigma)


def test_render_puzzle_layout(digits):
    assert puzzle.CANVAS == 3 * 28 + 4 * 1 == 88
    s = PuzzleState((1, 2, 3, 4, 0, 5, 6, 7, 8))
    img = envs.render_puzzle(s, digits, np.random.default_rng(0))
    assert img.shape == (88, 88, 1)
    r0, c0 = puzzle.cell_origin(1, 1)
    assert np.all(img[r0:r0 + 28, c0:c0 + 28] == 0.0)
    for g in (0, 29, 58, 87):    # gutters
        assert np.all(img[g, :, 0] == 0.0) and np.all(img[:, g, 0] == 0.0)
    assert img.min() >= 0.0 and img.max() <= 1.0
    noisy = envs.render_puzzle(s, digits, np.random.default_rng(0), noisy=True)
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0


def test_render_puzzle_resamples_digits(digits):
    rng = np.random.default_rng(1)
    a = envs.render_puzzle(envs.PUZZLE_GOAL, digits, rng)
    b = envs.render_puzzle(envs.PUZZLE_GOAL, digits, rng)
    assert not np.array_equal(a, b)


def test_render_puzzle_missing_class(digits):
    partial = {k: v for k, v in digits.items() if k != 4}
    with pytest.raises(KeyError, match="4"):
        envs.render_puzzle(envs.PUZZLE_GOAL, partial, np.random.default_rng(0))


# ------------------------------------------------------------- iceslider
def _board(rocks=(), agent=(3, 0), goal=(7, 7)):
    cells = np.zeros((8, 8), dtype=int)
    for r in rocks:
        cells[r] = envs.ROCK
    cells[goal] = envs.GOAL
    return IceBoard.from_array(cells, agent)


def test_slide_examples():
    assert envs.ice_step(_board(rocks=[(3, 5)]), envs.RIGHT).agent == (3, 4)
    assert envs.ice_step(_board(), envs.RIGHT).agent == (3, 7)
    assert envs.ice_step(_board(rocks=[(3, 1)]), envs.RIGHT).agent == (3, 0)
    assert envs.ice_step(_board(), envs.LEFT).agent == (3, 0)


def test_goal_does_not_stop_the_slide():
    assert envs.ice_step(_board(goal=(3, 4)), envs.RIGHT).agent == (3, 7)


def test_slide_matches_reference_walker():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        board = envs.generate_ice_level(rng) if rng.random() < 0.1 else oracles.random_board(rng)
        a = int(rng.integers(4))
        rocks = board.grid == envs.ROCK
        assert envs.ice_step(board, a).agent == oracles.walk_reference(rocks, board.agent, a)


@given(st.integers(0, 2**32 - 1), actions)
@settings(max_examples=200)
def test_slide_fixed_point_within_seven_steps(seed, action):
    board = oracles.random_board(np.random.default_rng(seed))
    first = envs.ice_step(board, action)
    assert envs.ice_step(first, action) == first
    assert abs(first.agent[0] - board.agent[0]) + abs(first.agent[1] - board.agent[1]) <= 7


def test_generated_levels():
    rng = np.random.default_rng(3)
    for _ in range(50):
        b = envs.generate_ice_level(rng)
        goal = tuple(np.argwhere(b.grid == envs.GOAL)[0])
        assert goal in envs.reachable_positions(b)
        assert (b.grid == envs.GOAL).sum() == 1
        assert b.grid[b.agent] != envs.ROCK
        # rocks only ever on interior cells
        edge = np.ones((8, 8), bool)
        edge[1:-1, 1:-1] = False
        assert not np.any((b.grid == envs.ROCK) & edge)


def test_empty_level_slides_to_boundary():
    b = envs.generate_ice_level(np.random.default_rng(0), density=0.0)
    r, c = b.agent
    assert envs.ice_step(b, envs.UP).agent == (0, c)
    assert envs.ice_step(b, envs.DOWN).agent == (7, c)
    assert envs.ice_step(b, envs.LEFT).agent == (r, 0)
    assert envs.ice_step(b, envs.RIGHT).agent == (r, 7)


def test_generation_failure_raises(monkeypatch):
    monkeypatch.setattr(iceslider, "reachable_positions", lambda board: set())
    with pytest.raises(RuntimeError, match="1000"):
        envs.generate_ice_level(np.random.default_rng(0))


def test_board_invariants():
    cells = np.zeros((8, 8), dtype=int)
    with pytest.raises(ValueError, match="goal"):
        IceBoard.from_array(cells, (0, 0))
    cells[7, 7] = envs.GOAL
    cells[0, 0] = envs.ROCK
    with pytest.raises(ValueError, match="free"):
        IceBoard.from_array(cells, (0, 0))


def test_render_ice():
    b = _board(rocks=[(2, 2)])
    img = envs.render_ice(b)
    assert img.shape == (64, 64, 3)
    assert np.array_equal(img, envs.render_ice(b))
    moved = IceBoard(b.cells, (5, 5))
    diff = np.any(img != envs.render_ice(moved), axis=2)
    touched = {(r // 8, c // 8) for r, c in np.argwhere(diff)}
    assert touched == {(3, 0), (5, 5)}
    noisy = envs.render_ice(b, noisy=True, rng=np.random.default_rng(0))
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0
    with pytest.raises(ValueError):
        envs.render_ice(b, noisy=True)


def test_labels_overlay_agent():
    lab = _board(agent=(3, 0)).labels()
    assert lab.shape == (64,) and lab[3 * 8] == envs.AGENT and lab[63] == envs.GOAL


# ------------------------------------------------------------------ noise
def test_noise_statistics_and_clip():
    rng = np.random.default_rng(0)
    img = np.full((1000, 1000), 0.5)
    out = envs.add_noise(img, rng)
    raw = np.random.default_rng(0).normal(0.0, 0.5, img.shape)   # the draw add_noise made
    np.testing.assert_array_equal(out, np.clip(img + raw, 0.0, 1.0))
    assert abs(raw.std() - 0.5) < 0.01
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.array_equal(out, envs.add_noise(img, np.random.default_rng(0)))
    assert envs.noise_scale(0.25, "variance") == 0.5
    with pytest.raises(ValueError):
        envs.noise_scale(0.5, "range")
