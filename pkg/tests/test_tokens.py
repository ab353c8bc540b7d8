import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_roll
from hiacg.errors import ShapeError
from hiacg.pianoroll import PianoRoll
from hiacg.tokens import (DEFAULT_PATCH, PatchConfig, TokenMatrix, decode, encode, join_blocks, load_tokens,
                          save_tokens, split_blocks)


def loop_encode(grid, d, t):
    """Reference packer: walk each patch cell by cell, shifting bits in."""
    rows = -(-grid.shape[0] // d)
    padded = np.zeros((rows * d, grid.shape[1]), np.uint8)
    padded[:grid.shape[0]] = grid
    out = np.zeros((grid.shape[1] // t, rows), np.int64)
    for c in range(grid.shape[1] // t):
        for r in range(rows):
            value = 0
            for i in range(d):
                for j in range(t):
                    value = (value << 1) | int(padded[r * d + i, c * t + j])
            out[c, r] = value
    return out


def test_all_zero_roll():
    tm = encode(PianoRoll.zeros(16))
    assert tm.shape == (4, 44) and not tm.tokens.any()


def test_all_one_roll():
    tm = encode(PianoRoll(np.ones((88, 16), np.uint8)))
    assert (tm.tokens == 255).all()


def test_token_129():
    grid = np.zeros((88, 4), np.uint8)
    grid[0:2, 0:4] = [[1, 0, 0, 0], [0, 0, 0, 1]]
    tm = encode(PianoRoll(grid))
    assert tm.tokens[0, 0] == 129 == 0b10000001
    assert not tm.tokens[0, 1:].any()


def test_decode_129():
    tokens = np.zeros((1, 44), np.int64)
    tokens[0, 0] = 129
    grid = decode(TokenMatrix(tokens)).grid
    assert grid.shape == (88, 4)
    assert {tuple(x) for x in np.argwhere(grid)} == {(0, 0), (1, 3)}


def test_all_zero_tokens_decode():
    assert not decode(TokenMatrix(np.zeros((3, 44), np.int64))).grid.any()


@pytest.mark.parametrize("d,t", [(1, 4), (2, 4), (3, 4), (2, 2), (4, 3)])
def test_matches_loop_reference(rng, d, t):
    cfg = PatchConfig(d, t)
    roll = random_roll(rng, 12 * t, 0.3)
    tm = encode(roll, cfg)
    np.testing.assert_array_equal(tm.tokens, loop_encode(roll.grid, d, t))
    assert decode(tm) == roll


@pytest.mark.parametrize("d,t", [(1, 4), (2, 4), (3, 4), (2, 6), (3, 3)])
def test_single_patch_exhaustive(d, t):
    cfg = PatchConfig(d, t)
    tokens = np.zeros((cfg.vocab_size, cfg.n_rows), np.int64)
    tokens[:, 0] = np.arange(cfg.vocab_size)
    tm = TokenMatrix(tokens, cfg)
    roll = decode(tm)
    assert encode(roll, cfg) == tm
    # every patch pattern is distinct
    patches = roll.grid[:d].reshape(d, cfg.vocab_size, t).transpose(1, 0, 2).reshape(cfg.vocab_size, -1)
    assert len({p.tobytes() for p in patches}) == cfg.vocab_size


def test_d3_pads_to_90_rows(rng):
    cfg = PatchConfig(3, 4)
    assert cfg.n_rows == 30 and cfg.padded_pitches == 90
    roll = random_roll(rng, 16, 0.5)
    tm = encode(roll, cfg)
    assert tm.shape == (4, 30)
    # the last patch holds rows 87, 88, 89; the two padding rows are zero
    assert (tm.tokens[:, -1] & 0b11111111).max() == 0


@pytest.mark.parametrize("n_steps", [16, 64, 960])
def test_shape_law(rng, n_steps):
    tm = encode(random_roll(rng, n_steps, 0.5))
    assert tm.shape == (n_steps // 4, 44)
    assert tm.tokens.min() >= 0 and tm.tokens.max() <= 255


def test_time_not_divisible():
    with pytest.raises(ShapeError, match="time"):
        encode(PianoRoll.zeros(6))


def test_patch_config_limits():
    with pytest.raises(ValueError):
        PatchConfig(0, 4)
    with pytest.raises(ValueError):
        PatchConfig(4, 5)
    assert PatchConfig(4, 5, max_bits=20).vocab_size == 2**20
    assert [PatchConfig(d, 4).vocab_size for d in (1, 2, 3)] == [16, 256, 4096]


def test_decode_rejects_out_of_range():
    tokens = np.zeros((2, 44), np.int64)
    tokens[1, 7] = 256
    with pytest.raises(ValueError, match=r"row=1, col=7.*256"):
        decode(TokenMatrix(tokens))


def test_token_matrix_shape_check():
    with pytest.raises(ShapeError):
        TokenMatrix(np.zeros((2, 43), np.int64))


@given(st.integers(0, 2**32 - 1), st.sampled_from([(1, 4), (2, 4), (3, 4)]), st.integers(1, 12))
def test_round_trip_property(seed, dt, blocks):
    cfg = PatchConfig(*dt)
    roll = random_roll(np.random.default_rng(seed), blocks * cfg.t, 0.4)
    assert decode(encode(roll, cfg)) == roll


@given(st.integers(0, 2**32 - 1), st.integers(0, 87), st.integers(0, 31))
def test_locality(seed, row, col):
    roll = random_roll(np.random.default_rng(seed), 32, 0.3)
    grid = roll.grid.copy()
    grid[row, col] ^= 1
    diff = encode(roll).tokens != encode(PianoRoll(grid)).tokens
    assert diff.sum() == 1
    assert np.argwhere(diff)[0].tolist() == [col // 4, row // 2]


def test_split_blocks():
    tm = TokenMatrix(np.arange(4 * 44).reshape(4, 44) % 256)
    blocks = split_blocks(tm)
    assert len(blocks) == 4 and all(b.shape == (44,) for b in blocks)
    assert split_blocks(TokenMatrix(np.zeros((0, 44), np.int64))) == []


@given(st.integers(0, 2**32 - 1), st.integers(0, 10))
def test_join_split_property(seed, n):
    tokens = np.random.default_rng(seed).integers(0, 256, (n, 44))
    tm = TokenMatrix(tokens)
    assert join_blocks(split_blocks(tm)) == tm


def test_join_ragged():
    with pytest.raises(ShapeError):
        join_blocks([np.zeros(44, np.int64), np.zeros(43, np.int64)])


@pytest.mark.parametrize("d,t", [(1, 4), (2, 4), (3, 4)])
def test_token_file_round_trip(rng, d, t):
    cfg = PatchConfig(d, t)
    tm = TokenMatrix(rng.integers(0, cfg.vocab_size, (5, cfg.n_rows)), cfg)
    data = save_tokens(tm)
    back = load_tokens(data)
    assert back == tm and back.config == cfg
    # header: magic, version, d, t, N_c, N_r, then u16 tokens
    assert data[:4] == b"PTOK" and len(data) == 4 + 1 + 1 + 1 + 4 + 2 + 2 * tm.tokens.size


def test_blocks_are_indexable():
    tm = TokenMatrix(np.arange(8 * 44).reshape(8, 44) % 256)
    assert tm[2:5].shape == (3, 44) and tm[2:5].config == DEFAULT_PATCH


def test_all_pairs_differ():
    # distinct patches never collide on a token
    cfg = PatchConfig(1, 4)
    patterns = np.array(list(itertools.product([0, 1], repeat=4)), np.uint8)
    grid = np.zeros((88, 4 * len(patterns)), np.uint8)
    grid[0] = patterns.reshape(-1)
    assert sorted(encode(PianoRoll(grid), cfg).tokens[:, 0].tolist()) == list(range(16))
