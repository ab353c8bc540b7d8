"""Piano-token codec: d x t patches of the roll packed into integers.

Bit order is MSB first over the row-major flatten of each patch, so with the
default 2 x 4 patch the cell at (pitch row 0, step 0) is bit 7 and the cell
at (row 1, step 3) is bit 0. Token matrices are indexed ``[block, patch_row]``;
each row of the matrix (a *block*) covers ``t`` consecutive time steps.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .pianoroll import N_PITCHES, PianoRoll

MAX_TOKEN_BITS = 16


@dataclass(frozen=True)
class PatchConfig:
    d: int = 2
    t: int = 4
    max_bits: int = MAX_TOKEN_BITS

    def __post_init__(self):
        if self.d < 1 or self.t < 1:
            raise ValueError(f"patch dimensions must be positive, got d={self.d}, t={self.t}")
        if self.d * self.t > self.max_bits:
            raise ValueError(f"patch {self.d}x{self.t} needs {self.d * self.t} bits per token, "
                             f"ceiling is {self.max_bits}")

    @property
    def bits(self) -> int:
        return self.d * self.t

    @property
    def vocab_size(self) -> int:
        return 1 << self.bits

    @property
    def n_rows(self) -> int:
        """Patches per block; the pitch axis is zero-padded when d does not divide 88."""
        return -(-N_PITCHES // self.d)

    @property
    def padded_pitches(self) -> int:
        return self.n_rows * self.d


DEFAULT_PATCH = PatchConfig()


@dataclass(frozen=True, eq=False)
class TokenMatrix:
    tokens: np.ndarray
    config: PatchConfig = DEFAULT_PATCH

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        if tokens.ndim != 2 or tokens.shape[1] != self.config.n_rows:
            raise ShapeError(f"token matrix must be (blocks, {self.config.n_rows}), got {tokens.shape}")
        tokens = tokens.copy()
        tokens.flags.writeable = False
        object.__setattr__(self, "tokens", tokens)

    @property
    def n_blocks(self) -> int:
        return self.tokens.shape[0]

    @property
    def shape(self):
        return self.tokens.shape

    def __eq__(self, other):
        if not isinstance(other, TokenMatrix):
            return NotImplemented
        return (self.config == other.config and self.tokens.shape == other.tokens.shape
                and bool((self.tokens == other.tokens).all()))

    def __getitem__(self, item):
        """Slice along the block axis."""
        if not isinstance(item, slice):
            raise TypeError("index a TokenMatrix with a block slice; use split_blocks for single blocks")
        return TokenMatrix(self.tokens[item], self.config)


def _bit_weights(config):
    return (1 << np.arange(config.bits - 1, -1, -1)).astype(np.int64)


def encode(roll: PianoRoll, config: PatchConfig = DEFAULT_PATCH) -> TokenMatrix:
    grid = roll.grid if isinstance(roll, PianoRoll) else np.asarray(roll)
    n_steps = grid.shape[1]
    if n_steps % config.t:
        raise ShapeError(f"time dimension T={n_steps} is not divisible by patch width t={config.t}")
    if grid.shape[0] != N_PITCHES:
        raise ShapeError(f"pitch dimension must be {N_PITCHES}, got {grid.shape[0]}")
    rows, d, t = config.n_rows, config.d, config.t
    if config.padded_pitches != N_PITCHES:
        grid = np.pad(grid, ((0, config.padded_pitches - N_PITCHES), (0, 0)))
    n_cols = n_steps // t
    patches = grid.reshape(rows, d, n_cols, t).transpose(2, 0, 1, 3).reshape(n_cols, rows, d * t)
    return TokenMatrix(patches.astype(np.int64) @ _bit_weights(config), config)


def decode(tokens: TokenMatrix) -> PianoRoll:
    config = tokens.config
    values = tokens.tokens
    bad = np.argwhere((values < 0) | (values >= config.vocab_size))
    if bad.size:
        r, c = (int(i) for i in bad[0])
        raise ValueError(f"token out of range at (row={r}, col={c}): value {int(values[r, c])}, "
                         f"vocabulary is [0, {config.vocab_size})")
    n_cols, rows = values.shape
    shifts = np.arange(config.bits - 1, -1, -1)
    bits = (values[..., None] >> shifts) & 1
    grid = bits.reshape(n_cols, rows, config.d, config.t).transpose(1, 2, 0, 3)
    grid = grid.reshape(config.padded_pitches, n_cols * config.t)[:N_PITCHES]
    return PianoRoll(grid.astype(np.uint8))


def split_blocks(tokens: TokenMatrix) -> list[np.ndarray]:
    return [row.copy() for row in tokens.tokens]


def join_blocks(blocks, config: PatchConfig = DEFAULT_PATCH) -> TokenMatrix:
    blocks = [np.asarray(b, dtype=np.int64) for b in blocks]
    lengths = {b.shape for b in blocks}
    if len(lengths) > 1 or any(len(s) != 1 for s in lengths):
        raise ShapeError(f"ragged blocks: shapes {sorted(lengths)}")
    if not blocks:
        return TokenMatrix(np.zeros((0, config.n_rows), np.int64), config)
    return TokenMatrix(np.stack(blocks), config)


# Token container layout (little-endian):
#   4s magic "PTOK" | u8 version | u8 d | u8 t | u32 N_c | u16 N_r | N_c*N_r u16 tokens
_TOKEN_HEADER = struct.Struct("<4sBBBIH")
_TOKEN_MAGIC = b"PTOK"
_TOKEN_VERSION = 1


def save_tokens(tokens: TokenMatrix) -> bytes:
    n_c, n_r = tokens.shape
    header = _TOKEN_HEADER.pack(_TOKEN_MAGIC, _TOKEN_VERSION, tokens.config.d, tokens.config.t, n_c, n_r)
    return header + tokens.tokens.astype("<u2").tobytes()


def load_tokens(data: bytes) -> TokenMatrix:
    if len(data) < _TOKEN_HEADER.size:
        raise ValueError("truncated token container")
    magic, version, d, t, n_c, n_r = _TOKEN_HEADER.unpack_from(data)
    if magic != _TOKEN_MAGIC:
        raise ValueError("not a piano-token container")
    if version != _TOKEN_VERSION:
        raise ValueError(f"unsupported token container version {version}")
    config = PatchConfig(d, t)
    if n_r != config.n_rows:
        raise ShapeError(f"header N_r={n_r} disagrees with patch height d={d}")
    payload = np.frombuffer(data, "<u2", count=n_c * n_r, offset=_TOKEN_HEADER.size)
    return TokenMatrix(payload.reshape(n_c, n_r).astype(np.int64), config)
