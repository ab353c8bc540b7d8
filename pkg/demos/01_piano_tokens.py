"""Piano tokens in a few lines.

A piano roll is an 88 x T grid of 0/1 cells. Cutting it into 2 x 4 patches and
reading each patch as an 8-bit number gives one token per patch: 44 tokens
per 4-step block, vocabulary 256.
"""
import numpy as np

from hiacg import PatchConfig, PianoRoll, decode, encode
from hiacg.pianoroll import pianoroll_to_events

# A C major chord held for a quarter note, then a single E.
grid = np.zeros((88, 16), np.uint8)
for pitch in (60, 64, 67):
    grid[pitch - 21, 0:4] = 1
grid[64 - 21, 4:8] = 1
roll = PianoRoll(grid)
print("events:", pianoroll_to_events(roll))

tokens = encode(roll)
print("token matrix:", tokens.shape)  # (T/4 blocks, 44 patch rows)
nonzero = np.argwhere(tokens.tokens)
for block, row in nonzero:
    print(f"  block {block} row {row}: {tokens.tokens[block, row]:3d} = {tokens.tokens[block, row]:08b}")

# bits are read row by row, most significant first
patch = np.zeros((88, 4), np.uint8)
patch[0] = [1, 0, 0, 0]
patch[1] = [0, 0, 0, 1]
print("patch [[1,0,0,0],[0,0,0,1]] ->", encode(PianoRoll(patch)).tokens[0, 0])

assert decode(tokens) == roll

# other patch shapes trade sequence length against vocabulary size
for d, t in ((1, 4), (2, 4), (3, 4)):
    cfg = PatchConfig(d, t)
    print(f"patch {d}x{t}: {cfg.n_rows} tokens per block, vocabulary {cfg.vocab_size}")
