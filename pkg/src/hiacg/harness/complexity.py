"""Attention-cost benchmark: flat decoder vs anchored decomposition.

Counts come from the instrumented attention kernel (scalar multiplies forming
Q K^T), taken over one full causal forward pass at each total token length L.
The anchored model covers L tokens with ``L_sem = ceil(L / L_rec)`` blocks:
one semantic pass of length L_sem plus L_sem reconstruction passes of length
L_rec, so its exact count is ``sem_layers*H*L_sem**2 + rec_layers*H*L_sem*L_rec**2``.
The flat model's count is ``layers*H*L**2``.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import nn
from .. import tensor as T
from ..acg import AcgConfig, AcgModel
from ..baseline import BaselineConfig, FlatArModel


@dataclass
class ComplexityReport:
    lengths: list
    baseline_counts: list
    acg_counts: list
    acg_semantic_counts: list
    acg_reconstruction_counts: list
    acg_predicted: list
    baseline_seconds: list
    acg_seconds: list
    baseline_slope: float
    acg_slope: float
    acg_semantic_slope: float
    measured_speedup: list
    predicted_speedup: list
    asymptotic_speedup: float
    block_len: int = 0
    notes: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


def acg_formula(config: AcgConfig, n_semantic: int, block_len: int | None = None) -> int:
    """Closed-form anchored attention count for ``n_semantic`` blocks."""
    n = config.block_len if block_len is None else block_len
    h = config.hidden_dim
    return config.sem_layers * h * n_semantic ** 2 + config.rec_layers * h * n_semantic * n ** 2


def baseline_formula(config: BaselineConfig, length: int) -> int:
    return config.layers * config.hidden_dim * length ** 2


def measure_baseline(model: FlatArModel, length: int, rng) -> tuple[int, float]:
    n = model.config.block_len
    stream = rng.integers(0, model.config.vocab, size=length - 1)
    pos = np.arange(length - 1)
    with T.no_grad(), nn.count_attention() as counter:
        start = time.perf_counter()
        cond = model._condition(math.ceil(length / n))
        x = T.concat([cond, model._token_inputs(stream, pos)], axis=0)
        model._decode(x)
        elapsed = time.perf_counter() - start
    return counter.score_multiplies, elapsed


def measure_acg(model: AcgModel, n_semantic: int, rng) -> tuple[int, int, float]:
    c = model.config
    blocks = rng.integers(0, c.vocab, size=(n_semantic, c.block_len))
    with T.no_grad():
        start = time.perf_counter()
        with nn.count_attention() as sem_counter:
            inputs = [model._condition(n_semantic)]
            if n_semantic > 1:
                inputs.append(model._reembed(blocks[:-1]))
            z = model._semantic(T.concat(inputs, axis=0), np.arange(n_semantic))
        with nn.count_attention() as rec_counter:
            model._reconstruct_logits(z, blocks[:, :-1])
        elapsed = time.perf_counter() - start
    return sem_counter.score_multiplies, rec_counter.score_multiplies, elapsed


def complexity_bench(acg_config: AcgConfig | None = None, baseline_config: BaselineConfig | None = None,
                     lengths=(256, 512, 1024, 2048), seed: int = 0) -> ComplexityReport:
    """Weight-independent cost comparison; untrained models are fine."""
    lengths = sorted(int(x) for x in lengths)
    if len(lengths) < 3:
        raise ValueError("need at least three lengths to fit a slope")
    n = (acg_config or AcgConfig()).block_len
    max_blocks = math.ceil(lengths[-1] / n) + 1
    acg_config = acg_config or AcgConfig(hidden_dim=32, heads=2, sem_layers=2, rec_layers=2)
    acg_config = AcgConfig(**{**acg_config.to_dict(), "max_blocks": max(acg_config.max_blocks, max_blocks)})
    baseline_config = baseline_config or BaselineConfig(hidden_dim=acg_config.hidden_dim, layers=4,
                                                        heads=acg_config.heads, d=acg_config.d, t=acg_config.t)
    baseline_config = BaselineConfig(**{**baseline_config.to_dict(),
                                        "max_blocks": max(baseline_config.max_blocks, max_blocks)})
    acg = AcgModel(acg_config)
    base = FlatArModel(baseline_config)
    rng = np.random.default_rng(seed)
    out = {k: [] for k in ("b", "a", "as", "ar", "ap", "bt", "at")}
    for length in lengths:
        count, secs = measure_baseline(base, length, rng)
        out["b"].append(count)
        out["bt"].append(secs)
        n_sem = math.ceil(length / n)
        sem, rec, secs = measure_acg(acg, n_sem, rng)
        out["as"].append(sem)
        out["ar"].append(rec)
        out["a"].append(sem + rec)
        out["ap"].append(acg_formula(acg_config, n_sem))
        out["at"].append(secs)
    measured = [b / a for b, a in zip(out["b"], out["a"])]
    predicted = [baseline_formula(baseline_config, L) / p for L, p in zip(lengths, out["ap"])]
    # as L grows with L_rec fixed the semantic term dominates: ratio -> (c_flat / c_sem) * L_rec**2
    asymptotic = (baseline_config.layers * baseline_config.hidden_dim * n ** 2
                  / (acg_config.sem_layers * acg_config.hidden_dim))
    return ComplexityReport(
        lengths=lengths, baseline_counts=out["b"], acg_counts=out["a"], acg_semantic_counts=out["as"],
        acg_reconstruction_counts=out["ar"], acg_predicted=out["ap"], baseline_seconds=out["bt"],
        acg_seconds=out["at"], baseline_slope=loglog_slope(lengths, out["b"]),
        acg_slope=loglog_slope(lengths, out["a"]),
        acg_semantic_slope=loglog_slope([math.ceil(L / n) for L in lengths], out["as"]),
        measured_speedup=measured, predicted_speedup=predicted, asymptotic_speedup=asymptotic,
        block_len=n,
        notes={"acg": acg_config.to_dict(), "baseline": baseline_config.to_dict()},
    )
