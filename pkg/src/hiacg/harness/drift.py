"""Feature drift under free-running generation: anchored model vs flat baseline.

For each evaluation piece both models continue the same opening. At every
generated block the model's predicted feature is compared (cosine distance)
with the feature it would have produced had all history been ground truth.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..acg import AcgModel, Condition, cosine_distance
from ..baseline import FlatArModel
from ..pianoroll import PianoRoll
from ..sampling import SamplerConfig
from ..tokens import TokenMatrix, encode


@dataclass
class DriftCurve:
    steps: np.ndarray
    acg: np.ndarray
    baseline: np.ndarray
    n_pieces: int
    prompt_blocks: int

    @staticmethod
    def _reduction(a, b):
        a, b = float(np.mean(a)), float(np.mean(b))
        if b == 0:
            return 0.0 if a == 0 else -np.inf
        return 1.0 - a / b

    @property
    def reduction(self) -> float:
        """Mean relative reduction of the anchored model's distance, ``1 - mean(acg)/mean(baseline)``."""
        return self._reduction(self.acg, self.baseline)

    def window(self, first: int, last: int):
        """Mean distances over steps ``first..last`` inclusive (1-based)."""
        sel = (self.steps >= first) & (self.steps <= last)
        return float(self.acg[sel].mean()), float(self.baseline[sel].mean())

    def as_dict(self):
        return {"steps": self.steps.tolist(), "acg": self.acg.tolist(), "baseline": self.baseline.tolist(),
                "n_pieces": self.n_pieces, "prompt_blocks": self.prompt_blocks,
                "acg_mean": float(self.acg.mean()), "baseline_mean": float(self.baseline.mean()),
                "reduction": self.reduction}


def _tokens(piece, patch):
    return piece if isinstance(piece, TokenMatrix) else encode(piece.padded(patch.t), patch)


def feature_distances(model, truth: TokenMatrix, prompt_blocks: int, steps: int, sampler, seed) -> np.ndarray:
    """Per-step cosine distances between free-running and teacher-forced features."""
    truth = truth[:prompt_blocks + steps]
    cond = Condition(steps, prompt=truth[:prompt_blocks] if prompt_blocks else None)
    _, predicted = model.generate(cond, sampler, np.random.default_rng(seed), return_features=True)
    target = model.semantic_targets(truth, cond)[prompt_blocks:]
    return np.array([cosine_distance(p, h) for p, h in zip(predicted, target)])


def _model(ref, cls):
    return cls.load(ref) if isinstance(ref, (str, Path)) else ref


def drift_experiment(acg_model, baseline_model, pieces, steps: int = 50, prompt_blocks: int = 4,
                     sampler: SamplerConfig = SamplerConfig(), seed: int = 0) -> DriftCurve:
    """Models may be given as instances or checkpoint paths."""
    acg_model = _model(acg_model, AcgModel)
    baseline_model = _model(baseline_model, FlatArModel)
    patch = acg_model.config.patch
    matrices = [_tokens(p, patch) for p in pieces]
    usable = [m for m in matrices if m.n_blocks >= prompt_blocks + steps]
    if len(usable) < len(matrices):
        warnings.warn(f"skipped {len(matrices) - len(usable)} piece(s) shorter than "
                      f"{prompt_blocks + steps} blocks", stacklevel=2)
    if not usable:
        raise ValueError("no evaluation piece is long enough for the requested steps")
    acg_d, base_d = [], []
    for i, truth in enumerate(usable):
        acg_d.append(feature_distances(acg_model, truth, prompt_blocks, steps, sampler, seed + i))
        base_d.append(feature_distances(baseline_model, truth, prompt_blocks, steps, sampler, seed + i))
    return DriftCurve(np.arange(1, steps + 1), np.mean(acg_d, axis=0), np.mean(base_d, axis=0),
                      len(usable), prompt_blocks)
