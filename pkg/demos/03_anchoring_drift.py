"""How far does a model's next-block feature wander once it reads its own output?

For each evaluation piece both models continue the same four-block opening.
At every step we compare the feature the model actually used with the one it
would have computed had every earlier block been the true one. ACG builds
that feature from re-embedded finished blocks (anchors); the baseline is a
flat token-level decoder with a matched parameter count.

Short training here (a few hundred steps) makes this a walkthrough, not a
measurement; the acceptance suite runs the longer version.
"""
import sys

import numpy as np

from hiacg import AcgConfig, AcgModel, FlatArModel, TrainConfig, encode, matched_config
from hiacg.harness import drift_experiment, make_toy_corpus, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 200

data = [encode(r) for r in make_toy_corpus(200, seed=0)]
cfg = AcgConfig(hidden_dim=32, heads=2, sem_layers=2, rec_layers=2, max_blocks=64)
tc = TrainConfig(crop_blocks=16, warmup=50)
acg = AcgModel(cfg, tc)
base = FlatArModel(matched_config(cfg), tc)
print(f"parameters: ACG {acg.n_parameters():,}  baseline {base.n_parameters():,} "
      f"({base.config.layers} layers)")

for model in (acg, base):
    losses = train(model, data, steps, seed=1)
    print(f"{model.kind:8s} loss {np.mean(losses[:20]):.2f} -> {np.mean(losses[-20:]):.2f}")

curve = drift_experiment(acg, base, make_toy_corpus(4, 99, 16, 16), steps=20, prompt_blocks=4)
print("step   ACG      baseline")
for s, a, b in zip(curve.steps, curve.acg, curve.baseline):
    if s in (1, 2, 5, 10, 15, 20):
        print(f"{s:4d}   {a:.5f}  {b:.5f}")
print(f"mean   {curve.acg.mean():.5f}  {curve.baseline.mean():.5f}   reduction {curve.reduction:+.1%}")
