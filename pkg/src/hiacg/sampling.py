"""Token sampling from logits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 1.0
    top_k: int | None = 16
    greedy: bool = False

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be at least 1")


GREEDY = SamplerConfig(greedy=True)


def sample(logits, sampler: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw one id per row of a ``(B, V)`` logit array."""
    logits = np.asarray(logits, dtype=np.float64)
    if sampler.greedy:
        return logits.argmax(axis=-1)
    z = logits / sampler.temperature
    if sampler.top_k is not None and sampler.top_k < z.shape[-1]:
        kth = np.partition(z, -sampler.top_k, axis=-1)[:, -sampler.top_k][:, None]
        z = np.where(z >= kth, z, -np.inf)
    z -= z.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    u = rng.random((z.shape[0], 1))
    ids = np.minimum((np.cumsum(p, axis=-1) < u).sum(axis=-1), z.shape[-1] - 1)
    # float round-off can push u past the last kept id
    dead = p[np.arange(len(ids)), ids] == 0
    ids[dead] = p[dead].argmax(axis=-1)
    return ids
