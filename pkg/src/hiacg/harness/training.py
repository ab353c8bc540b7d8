"""Fixed-budget training loops."""
from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


def train(model, data, steps: int, batch_size: int = 1, seed: int = 0, log_every: int = 0) -> list[float]:
    """Run ``steps`` optimiser steps on batches drawn with replacement from ``data``."""
    if not data:
        raise ValueError("no training data")
    rng = np.random.default_rng(seed)
    losses = []
    for step in range(steps):
        idx = rng.integers(0, len(data), size=batch_size)
        losses.append(model.train_step([data[i] for i in idx]))
        if log_every and (step + 1) % log_every == 0:
            log.info("%s step %d loss %.4f", model.kind, step + 1, float(np.mean(losses[-log_every:])))
    return losses


def smoothed(values, window: int = 20) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return values.copy()
    return np.convolve(values, np.ones(window) / window, mode="valid")
