"""Two-level generation: a sketch loop over half-measure pitch sets, then a
refinement loop that expands each sketch block into full-resolution blocks.

A sketch column is the union of pitches sounding in one half measure
(8 steps), so the sketch is 8x shorter than the roll. One sketch block spans
``t`` sketch columns, i.e. ``8 t`` roll steps, which is exactly 8 detail
blocks whatever the patch width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .acg import AcgConfig, AcgModel, Condition, Example, TrainConfig
from .errors import ConfigError, ShapeError, StateError
from .pianoroll import N_PITCHES, STEPS_PER_MEASURE, PianoRoll
from .sampling import SamplerConfig
from .tokens import PatchConfig, TokenMatrix, decode, encode, join_blocks, split_blocks

SKETCH_COLUMNS_PER_MEASURE = 2
STEPS_PER_SKETCH_COLUMN = STEPS_PER_MEASURE // SKETCH_COLUMNS_PER_MEASURE
DETAIL_BLOCKS_PER_SKETCH_BLOCK = STEPS_PER_SKETCH_COLUMN


def resample_sketch(roll: PianoRoll) -> PianoRoll:
    """Half-measure pitch-set unions: 88 x (T/8)."""
    if roll.n_steps % STEPS_PER_MEASURE:
        raise ShapeError(f"roll length T={roll.n_steps} is not a whole number of "
                         f"{STEPS_PER_MEASURE}-step measures")
    cols = roll.n_steps // STEPS_PER_SKETCH_COLUMN
    grid = roll.grid.reshape(N_PITCHES, cols, STEPS_PER_SKETCH_COLUMN).max(axis=2)
    return PianoRoll(grid, resolution=roll.resolution, tempo_bpm=roll.tempo_bpm)


def encode_sketch(sketch: PianoRoll, config: PatchConfig = PatchConfig()) -> TokenMatrix:
    """Encode a sketch roll, zero-padding its columns to a multiple of ``t``."""
    return encode(sketch.padded(config.t), config)


def _span_steps(config):
    return DETAIL_BLOCKS_PER_SKETCH_BLOCK * config.t


@dataclass
class RefinePair:
    sketch_block: np.ndarray
    detail_blocks: np.ndarray


def build_refine_pairs(roll: PianoRoll, config: PatchConfig = PatchConfig()) -> list[RefinePair]:
    span = _span_steps(config)
    if roll.n_steps % span:
        raise ShapeError(f"roll length T={roll.n_steps} must be a multiple of {span} steps "
                         f"so sketch blocks align with detail blocks")
    sketch = split_blocks(encode_sketch(resample_sketch(roll), config))
    detail = encode(roll, config).tokens
    k = DETAIL_BLOCKS_PER_SKETCH_BLOCK
    return [RefinePair(s, detail[i * k:(i + 1) * k].copy()) for i, s in enumerate(sketch)]


def sketch_training_data(rolls, config: PatchConfig = PatchConfig()) -> list[TokenMatrix]:
    return [encode_sketch(resample_sketch(r.padded(STEPS_PER_MEASURE)), config) for r in rolls]


def refine_training_data(rolls, config: PatchConfig = PatchConfig(), context_blocks=8) -> list[Example]:
    """One example per sketch block: left context as prompt, 8 target blocks, sketch block as condition."""
    examples = []
    for roll in rolls:
        pairs = build_refine_pairs(roll.padded(_span_steps(config)), config)
        prev = np.zeros((0, config.n_rows), np.int64)
        for pair in pairs:
            ctx = prev[len(prev) - context_blocks:] if context_blocks else prev[:0]
            examples.append(Example(np.concatenate([ctx, pair.detail_blocks]), len(ctx), pair.sketch_block))
            prev = np.concatenate([prev, pair.detail_blocks])
    return examples


def measures_for(seconds: float, bpm: float = 120.0) -> int:
    """4/4 measures needed to cover ``seconds`` at ``bpm`` (rounded up)."""
    if seconds <= 0 or bpm <= 0:
        raise ValueError("duration and tempo must be positive")
    return math.ceil(seconds * bpm / 240.0 - 1e-9)


def hierarchy_consistency(roll: PianoRoll, sketch_tokens: TokenMatrix) -> float:
    """Mean per-column Jaccard similarity between a roll's sketch and a generating sketch."""
    got = resample_sketch(roll).grid.astype(bool)
    want = decode(sketch_tokens).grid.astype(bool)[:, :got.shape[1]]
    got = got[:, :want.shape[1]]
    inter = (got & want).sum(axis=0)
    union = (got | want).sum(axis=0)
    scores = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return float(scores.mean())


class HiAcg:
    """Sketch loop plus refinement loop, each an independently trained :class:`AcgModel`."""

    def __init__(self, sketch: AcgModel, refine: AcgModel, context_blocks: int = 8):
        if sketch.config.patch != refine.config.patch:
            raise ConfigError("sketch and refinement models must share a patch configuration")
        if not refine.config.cond_block:
            raise ConfigError("the refinement model must be built with cond_block=True")
        if refine.config.max_blocks < context_blocks + DETAIL_BLOCKS_PER_SKETCH_BLOCK:
            raise ConfigError("refinement max_blocks cannot hold context plus one expansion")
        self.sketch = sketch
        self.refine = refine
        self.context_blocks = context_blocks

    @classmethod
    def build(cls, config: AcgConfig = AcgConfig(), train_config: TrainConfig | None = None,
              context_blocks: int = 8):
        sketch = AcgModel(config, train_config)
        refine_cfg = AcgConfig(**{**config.to_dict(), "cond_block": True, "seed": config.seed + 1,
                                  "max_blocks": max(config.max_blocks,
                                                    context_blocks + DETAIL_BLOCKS_PER_SKETCH_BLOCK)})
        return cls(sketch, AcgModel(refine_cfg, train_config), context_blocks)

    @property
    def patch(self):
        return self.sketch.config.patch

    def train_sketch_step(self, rolls) -> float:
        return self.sketch.train_step(sketch_training_data(rolls, self.patch))

    def train_refine_step(self, examples) -> float:
        return self.refine.train_step(examples)

    def refine_block(self, sketch_block, left_context=(), sampler: SamplerConfig = SamplerConfig(),
                     rng=None) -> np.ndarray:
        """Expand one sketch block into 8 detail blocks, continuing from ``left_context``."""
        self.refine._require_trained()
        ctx = np.asarray(left_context, dtype=np.int64).reshape(-1, self.patch.n_rows)
        ctx = ctx[len(ctx) - self.context_blocks:] if self.context_blocks else ctx[:0]
        cond = Condition(DETAIL_BLOCKS_PER_SKETCH_BLOCK, prompt=ctx, block=sketch_block)
        return self.refine.generate(cond, sampler, rng).tokens[len(ctx):]

    def generate_piece(self, measures: int | None = None, *, seconds: float | None = None,
                       bpm: float | None = None, prompt: PianoRoll | None = None,
                       sampler: SamplerConfig = SamplerConfig(), rng=None, return_sketch=False):
        """Generate exactly ``measures`` new measures (after the prompt, if any)."""
        self.sketch._require_trained()
        self.refine._require_trained()
        if bpm is None:
            bpm = prompt.tempo_bpm if prompt is not None else 120.0
        if measures is None:
            if seconds is None:
                raise ValueError("give either measures or seconds")
            measures = measures_for(seconds, bpm)
        if measures < 1:
            raise ValueError("duration must be at least one measure")
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        span = _span_steps(self.patch)
        if prompt is not None:
            if prompt.n_steps % span:
                raise ShapeError(f"prompt length must be a multiple of {span} steps "
                                 f"({span // STEPS_PER_MEASURE} measures)")
            prompt_sketch = encode_sketch(resample_sketch(prompt), self.patch)
            left = encode(prompt, self.patch).tokens
        else:
            prompt_sketch = None
            left = np.zeros((0, self.patch.n_rows), np.int64)
        n_sketch = math.ceil(measures * STEPS_PER_MEASURE / span)
        sketch = self.sketch.generate(Condition(n_sketch, prompt=prompt_sketch), sampler, rng)
        new_sketch = sketch.tokens[sketch.n_blocks - n_sketch:]
        detail = []
        for block in new_sketch:
            expanded = self.refine_block(block, left, sampler, rng)
            detail.append(expanded)
            left = np.concatenate([left, expanded])
        body = decode(join_blocks(np.concatenate(detail), self.patch)).grid[:, :measures * STEPS_PER_MEASURE]
        grid = body if prompt is None else np.concatenate([prompt.grid, body], axis=1)
        roll = PianoRoll(grid, tempo_bpm=bpm)
        if return_sketch:
            return roll, TokenMatrix(new_sketch, self.patch)
        return roll
