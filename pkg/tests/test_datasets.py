import gzip
import struct

import numpy as np
import pytest

from dwmr import envs
from dwmr.datasets import (
    DatasetFormatError,
    IDXError,
    TransitionSet,
    build_splits,
    dequantize,
    generate_trajectory,
    glyph_template,
    parse_idx,
    quantize,
    read_dataset,
    read_header,
    read_idx_file,
    split_sources,
    synth_glyph_source,
    write_dataset,
    write_idx,
)
from dwmr.datasets.digits import font_mask
from dwmr.envs import IceBoard, PuzzleState

SMALL = {"train": 120, "val": 40, "test": 40}


@pytest.fixture(scope="module")
def puzzle_splits():
    return build_splits("puzzle", sizes=SMALL, digits_per_class=20)


@pytest.fixture(scope="module")
def ice_splits():
    return build_splits("iceslider", sizes=SMALL)


# ------------------------------------------------------------------- IDX
def test_idx_magic_and_round_trip():
    imgs = np.array([[[0, 255], [128, 7]], [[1, 2], [3, 4]]], dtype=np.uint8)
    blob = write_idx(imgs)
    assert struct.unpack(">I", blob[:4])[0] == 2051
    assert struct.unpack(">I", write_idx(np.array([3, 1], np.uint8))[:4])[0] == 2049
    np.testing.assert_array_equal(np.rint(parse_idx(blob) * 255).astype(np.uint8), imgs)
    assert parse_idx(blob).max() <= 1.0
    np.testing.assert_array_equal(parse_idx(write_idx(np.array([3, 1, 8]))), [3, 1, 8])


def test_idx_errors():
    blob = write_idx(np.zeros((2, 3, 3), np.uint8))
    with pytest.raises(IDXError, match="truncated"):
        parse_idx(blob[:-1])
    with pytest.raises(IDXError, match="magic"):
        parse_idx(b"\x00\x00\x09\x03" + blob[4:])
    with pytest.raises(IDXError, match="overflow"):
        parse_idx(struct.pack(">IIII", 0x803, 1 << 20, 1 << 10, 1 << 10))
    with pytest.raises(IDXError, match="trailing"):
        parse_idx(blob + b"\x00")


def test_idx_file_reader_handles_gzip(tmp_path):
    labels = np.array([1, 2, 3], np.uint8)
    (tmp_path / "l.gz").write_bytes(gzip.compress(write_idx(labels)))
    np.testing.assert_array_equal(read_idx_file(tmp_path / "l.gz"), labels)


def test_mnist_sources_partition_disjointly(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (90, 28, 28)).astype(np.uint8)
    labels = np.tile(np.arange(10), 9).astype(np.uint8)
    (tmp_path / "train-images-idx3-ubyte").write_bytes(write_idx(imgs))
    (tmp_path / "train-labels-idx1-ubyte").write_bytes(write_idx(labels))
    sources = split_sources(3, mnist_dir=tmp_path)
    assert all(s.provenance == "idx-file" for s in sources)
    for k in range(1, 9):
        sets = [set(s.ids[k].tolist()) for s in sources]
        assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
    with pytest.raises(ValueError, match="disjoint"):
        split_sources(30, mnist_dir=tmp_path)


# ---------------------------------------------------------------- glyphs
def test_synthetic_glyphs():
    src = synth_glyph_source(seed=3)
    for k in range(1, 9):
        pool = src[k]
        assert pool.shape == (200, 28, 28)
        assert pool.min() >= 0.0 and pool.max() <= 1.0
        for img in pool[:10]:
            # template matching with +-2 px search recovers the class
            best = max(range(1, 9), key=lambda c: _best_shift_score(img, c))
            assert best == k
    assert font_mask(1).shape == (7, 5)


def _best_shift_score(img, digit):
    t = glyph_template(digit)
    best = -np.inf
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            shifted = np.roll(np.roll(t, dy, 0), dx, 1)
            best = max(best, float((img * shifted).sum() - 0.5 * (shifted * shifted).sum()))
    return best


def test_disjoint_glyph_pools_share_nothing():
    a, b = split_sources(2, per_class=15, seed=1)
    for k in range(1, 9):
        assert not set(a.ids[k].tolist()) & set(b.ids[k].tolist())
        flat_a = {x.tobytes() for x in a[k]}
        assert not any(x.tobytes() in flat_a for x in b[k])


# ---------------------------------------------------------- trajectories
def test_trajectory_chains_and_is_deterministic():
    digits = synth_glyph_source(per_class=5)
    recs = generate_trajectory("puzzle", 30, np.random.default_rng(2), digits=digits)
    again = generate_trajectory("puzzle", 30, np.random.default_rng(2), digits=digits)
    assert len(recs) == 30
    for r, q in zip(recs, recs[1:]):
        np.testing.assert_array_equal(r.truth_next, q.truth)
        np.testing.assert_array_equal(r.next_obs, q.obs)
    for r, q in zip(recs, again):
        assert r.obs.tobytes() == q.obs.tobytes() and r.action == q.action
    ice = generate_trajectory("iceslider", 20, np.random.default_rng(0))
    assert len(ice) == 20
    with pytest.raises(ValueError):
        generate_trajectory("puzzle", 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        generate_trajectory("sokoban", 3, np.random.default_rng(0))


def _resimulate_puzzle(ts: TransitionSet):
    for t, a, tn in zip(ts.truth, ts.actions, ts.truth_next):
        nxt = envs.puzzle_step(PuzzleState(tuple(int(v) for v in t)), int(a))
        assert nxt is not None and np.array_equal(nxt.tiles, tn)


def _resimulate_ice(ts: TransitionSet):
    for t, a, tn in zip(ts.truth, ts.actions, ts.truth_next):
        grid = t.reshape(8, 8).astype(int)
        agent = tuple(np.argwhere(grid == envs.AGENT)[0])
        cells = grid.copy()
        cells[agent] = envs.ICE
        goal_missing = not (cells == envs.GOAL).any()
        if goal_missing:       # agent standing on the goal hides it in the labels
            cells[agent] = envs.GOAL
        nxt = envs.ice_step(IceBoard.from_array(cells, agent), int(a))
        assert np.array_equal(nxt.labels(), tn)


def test_records_consistent_with_simulators(puzzle_splits, ice_splits):
    for ts in puzzle_splits.values():
        _resimulate_puzzle(ts)
    for ts in ice_splits.values():
        _resimulate_ice(ts)
    # rejected puzzle moves never appear; blocked ice moves may
    assert all(not np.array_equal(t, tn) for t, tn in zip(puzzle_splits["train"].truth,
                                                        puzzle_splits["train"].truth_next))


def test_split_invariants(puzzle_splits):
    assert {k: len(v) for k, v in puzzle_splits.items()} == SMALL
    seeds = [v.meta["seed"] for v in puzzle_splits.values()]
    assert len(set(seeds)) == 3
    ranges = [v.meta["digit_ids"][1] for v in puzzle_splits.values()]
    assert ranges[0][1] < ranges[1][0] and ranges[1][1] < ranges[2][0]
    obs = puzzle_splits["train"].obs
    assert obs.dtype == np.uint8 and obs.shape[1:] == (88, 88, 1)


def test_default_split_sizes():
    from dwmr.datasets import SPLIT_SIZES
    assert SPLIT_SIZES["puzzle"] == {"train": 30_000, "val": 6_000, "test": 6_000}
    assert SPLIT_SIZES["iceslider"] == {"train": 40_000, "val": 10_000, "test": 10_000}


def test_build_splits_rejects_bad_arguments():
    with pytest.raises(ValueError, match="distinct"):
        build_splits("puzzle", seeds=(1, 1, 2), sizes=SMALL)
    with pytest.raises(ValueError):
        build_splits("chess", sizes=SMALL)


def test_splits_reproducible():
    a = build_splits("iceslider", sizes={"train": 20, "val": 20, "test": 20}, seeds=(4, 5, 6))
    b = build_splits("iceslider", sizes={"train": 20, "val": 20, "test": 20}, seeds=(4, 5, 6))
    for k in a:
        assert a[k].obs.tobytes() == b[k].obs.tobytes()


def test_noise_is_baked_in():
    a = build_splits("iceslider", noisy=True, sizes={"train": 20, "val": 20, "test": 20})
    clean = build_splits("iceslider", sizes={"train": 20, "val": 20, "test": 20})
    assert a["train"].meta["noisy"] and not clean["train"].meta["noisy"]
    assert not np.array_equal(a["train"].obs, clean["train"].obs)


# -------------------------------------------------------------- container
def test_container_round_trip(tmp_path, puzzle_splits):
    path = tmp_path / "d.bin"
    write_dataset(path, puzzle_splits, benchmark="puzzle", noisy=False)
    header, back = read_dataset(path)
    assert header["benchmark"] == "puzzle" and header["noisy"] is False
    for name, ts in puzzle_splits.items():
        assert header["splits"][name]["count"] == len(ts)
        for f in ("obs", "actions", "next_obs", "truth", "truth_next"):
            assert getattr(back[name], f).tobytes() == getattr(ts, f).tobytes()
    assert read_header(path)["format"] == "dwmr-dataset"
    raw = path.read_bytes()
    n = struct.unpack("<I", raw[:4])[0]
    assert raw[4 + n - 1:4 + n] == b"\n"


def test_container_errors(tmp_path, ice_splits):
    path = tmp_path / "d.bin"
    write_dataset(path, {"val": ice_splits["val"]}, benchmark="iceslider")
    raw = path.read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:-10])
    with pytest.raises(DatasetFormatError, match="truncated"):
        read_dataset(tmp_path / "short.bin")
    (tmp_path / "long.bin").write_bytes(raw + b"xx")
    with pytest.raises(DatasetFormatError, match="beyond"):
        read_dataset(tmp_path / "long.bin")
    (tmp_path / "tiny.bin").write_bytes(b"ab")
    with pytest.raises(DatasetFormatError):
        read_dataset(tmp_path / "tiny.bin")
    n = struct.unpack("<I", raw[:4])[0]
    bad = raw[4:4 + n].replace(b'"count": 40', b'"count": 41')
    (tmp_path / "count.bin").write_bytes(struct.pack("<I", len(bad)) + bad + raw[4 + n:])
    with pytest.raises(DatasetFormatError, match="count"):
        read_dataset(tmp_path / "count.bin")


def test_quantization_bound():
    x = np.random.default_rng(0).random(100_000)
    q = quantize(x)
    assert np.max(np.abs(x - q / 255.0)) <= 1 / 510 + 1e-12
    assert dequantize(q).dtype == np.float32
