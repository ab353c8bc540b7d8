"""Model-size and patch-size sweeps over the hierarchical pipeline."""
from __future__ import annotations

import numpy as np

from ..acg import AcgConfig, TrainConfig
from ..errors import HiAcgError
from ..hierarchy import HiAcg, refine_training_data, sketch_training_data
from ..metrics import corpus_mean, evaluate
from ..sampling import SamplerConfig
from ..tokens import PatchConfig
from .training import train

# (semantic layers, reconstruction layers)
MODEL_SIZES = {"Small": (8, 4), "Middle": (10, 5), "Large": (12, 6)}
PATCH_SIZES = {"Patch_{1,4}": (1, 4), "Patch_{2,4}": (2, 4), "Patch_{3,4}": (3, 4)}
COLUMNS = ("Pitch", "Rhythm", "Harmony", "Melody", "Loss")


def _row(label, size, patch, status, metrics=None, loss=None, vocab=None):
    row = {"label": label, "size": size, "patch": patch, "vocab": vocab, "status": status}
    for col in COLUMNS[:4]:
        row[col] = None if metrics is None else metrics.get(col)
    row["Loss"] = loss
    return row


def run_cell(corpus, sem_layers, rec_layers, d, t, hidden=32, heads=2, steps=50, measures=4,
             n_samples=2, seed=0, sampler=SamplerConfig()):
    patch = PatchConfig(d, t)
    config = AcgConfig(hidden_dim=hidden, heads=heads, sem_layers=sem_layers, rec_layers=rec_layers,
                       d=d, t=t, max_blocks=64, seed=seed)
    model = HiAcg.build(config, TrainConfig(lr=1e-3, seed=seed, warmup=10))
    sketch_losses = train(model.sketch, sketch_training_data(corpus, patch), steps, seed=seed)
    refine_losses = train(model.refine, refine_training_data(corpus, patch, model.context_blocks), steps,
                          seed=seed + 1)
    reports = []
    for i in range(n_samples):
        roll = model.generate_piece(measures, sampler=sampler, rng=seed + i)
        if roll.grid.any():
            reports.append(evaluate(roll))
    loss = float(np.mean(sketch_losses[-10:] + refine_losses[-10:]))
    return (corpus_mean(reports) if reports else None), loss, patch.vocab_size


def ablation_sweep(corpus, sizes=None, patches=None, steps: int = 50, hidden: int = 32, heads: int = 2,
                   measures: int = 4, n_samples: int = 2, seed: int = 0) -> list[dict]:
    """Train every (size, patch) cell for a fixed step budget; first row is ground truth."""
    sizes = MODEL_SIZES if sizes is None else sizes
    patches = PATCH_SIZES if patches is None else patches
    rows = [_row("GT", None, None, "ok", corpus_mean([evaluate(r) for r in corpus]))]
    for size_name, (sem, rec) in sizes.items():
        for patch_name, (d, t) in patches.items():
            label = f"{size_name} / {patch_name}"
            try:
                metrics, loss, vocab = run_cell(corpus, sem, rec, d, t, hidden, heads, steps, measures,
                                                n_samples, seed)
            except (HiAcgError, ValueError) as exc:
                rows.append(_row(label, size_name, patch_name, f"skipped: {exc}"))
                continue
            status = "ok" if metrics is not None else "silent output"
            rows.append(_row(label, size_name, patch_name, status, metrics, loss, vocab))
    return rows


def format_table(rows) -> str:
    lines = ["| | " + " | ".join(COLUMNS) + " |", "|---" * (len(COLUMNS) + 1) + "|"]
    for row in rows:
        cells = []
        for col in COLUMNS:
            v = row[col]
            cells.append("-" if v is None else f"{v:.2f}")
        label = row["label"] if row["status"] == "ok" else f"{row['label']} ({row['status']})"
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    return "\n".join(lines)
