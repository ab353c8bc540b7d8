"""Anchored cyclic generation.

Three jointly trained parts:

* a semantic decoder over ``[condition, a_1, ..., a_{t-1}]`` whose last
  hidden state is the semantic feature ``z_t`` of the next block;
* a reconstruction decoder over ``[z_t, s_1, ..., s_{k-1}]`` with a linear
  head that emits the block's ``n`` tokens one at a time, lowest pitch first;
* a re-embedding MLP mapping a finished block (its ``n`` token embeddings,
  concatenated) back to an anchor feature ``a_t`` for the semantic decoder.

Training is teacher forced at both levels: anchors come from ground-truth
blocks and the reconstruction decoder sees the ground-truth token prefix.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint
from . import nn
from . import tensor as T
from .errors import ConfigError, ShapeError, StateError
from .sampling import SamplerConfig, sample
from .tokens import PatchConfig, TokenMatrix


@dataclass(frozen=True)
class AcgConfig:
    hidden_dim: int = 128
    sem_layers: int = 2
    rec_layers: int = 2
    reemb_layers: int = 3
    heads: int = 4
    d: int = 2
    t: int = 4
    max_blocks: int = 256
    count_buckets: int = 16
    cond_block: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim % self.heads:
            raise ConfigError(f"heads={self.heads} must divide hidden_dim={self.hidden_dim}")
        if min(self.sem_layers, self.rec_layers, self.reemb_layers, self.max_blocks) < 1:
            raise ConfigError("layer counts and max_blocks must be positive")
        PatchConfig(self.d, self.t)

    @classmethod
    def paper_scale(cls, **overrides):
        """Full-size layout: 12 semantic and 6 reconstruction layers at width 1024."""
        base = dict(hidden_dim=1024, sem_layers=12, rec_layers=6, reemb_layers=3, heads=16)
        base.update(overrides)
        return cls(**base)

    @property
    def patch(self) -> PatchConfig:
        return PatchConfig(self.d, self.t)

    @property
    def vocab(self) -> int:
        return self.patch.vocab_size

    @property
    def block_len(self) -> int:
        return self.patch.n_rows

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    warmup: int = 20
    clip: float | None = 1.0
    crop_blocks: int | None = None
    seed: int = 0
    decay_steps: int | None = None  # cosine decay to lr/10 over this many steps after warmup

    def lr_at(self, step):
        if self.warmup and step < self.warmup:
            return self.lr * (step + 1) / self.warmup
        if self.decay_steps:
            frac = min(1.0, (step - self.warmup) / self.decay_steps)
            return self.lr * (0.1 + 0.45 * (1.0 + math.cos(math.pi * frac)))
        return self.lr


@dataclass
class Condition:
    """Generation request: how many new blocks, plus optional prompt and conditioning block."""

    target_block_count: int
    prompt: object = None
    block: object = None

    def prompt_blocks(self, n_rows) -> np.ndarray:
        if self.prompt is None:
            return np.zeros((0, n_rows), np.int64)
        blocks = self.prompt.tokens if isinstance(self.prompt, TokenMatrix) else np.asarray(self.prompt)
        blocks = np.asarray(blocks, dtype=np.int64).reshape(-1, blocks.shape[-1] if blocks.ndim else 0)
        if blocks.shape[1] != n_rows:
            raise ShapeError(f"prompt blocks have length {blocks.shape[1]}, expected {n_rows}")
        return blocks

    @property
    def total_blocks(self):
        n_prompt = 0
        if self.prompt is not None:
            n_prompt = (self.prompt.n_blocks if isinstance(self.prompt, TokenMatrix)
                        else len(np.asarray(self.prompt)))
        return self.target_block_count + n_prompt


@dataclass
class Example:
    """One training sequence; the first ``prompt_len`` blocks are context only."""

    tokens: np.ndarray
    prompt_len: int = 0
    cond_block: np.ndarray | None = None


def as_example(item) -> Example:
    if isinstance(item, Example):
        return item
    if isinstance(item, TokenMatrix):
        return Example(item.tokens)
    return Example(np.asarray(item, dtype=np.int64))


def count_bucket(total_blocks, n_buckets):
    return min(n_buckets - 1, int(total_blocks).bit_length())


def crop_window(n_blocks, crop, rng):
    if crop is None or n_blocks <= crop:
        return 0, n_blocks
    start = int(rng.integers(0, n_blocks - crop + 1))
    return start, crop


def cosine_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return 0.0 if not a.any() and not b.any() else 1.0
    return float(min(2.0, max(0.0, 1.0 - a @ b / denom)))


class TrainableModel:
    """Shared optimiser and checkpoint plumbing for the ACG and flat baselines."""

    kind = "model"

    def __init__(self, train_config=None):
        self.train_config = train_config or TrainConfig()
        self.trained = False
        self.loss_history: list[float] = []
        self._optimizer = None
        self._rng = np.random.default_rng(self.train_config.seed)

    @property
    def optimizer(self):
        if self._optimizer is None:
            self._optimizer = nn.Adam(self.params, self.train_config.lr, clip=self.train_config.clip)
        return self._optimizer

    def n_parameters(self):
        return nn.count_parameters(self.params)

    def _require_trained(self):
        if not self.trained:
            raise StateError(f"{self.kind} model has not been trained or loaded from a checkpoint")

    def _apply(self, loss_sum, count):
        loss = T.scale(loss_sum, 1.0 / count)
        T.backward(loss)
        self.optimizer.step(lr=self.train_config.lr_at(len(self.loss_history)))
        value = float(loss.data)
        self.loss_history.append(value)
        self.trained = True
        return value

    def manifest(self):
        return {"kind": self.kind, "trained": self.trained, "steps": len(self.loss_history)}

    def to_bytes(self):
        return checkpoint.dumps(self.params, self.config.to_dict(), self.manifest())

    def save(self, path):
        checkpoint.save(path, self.params, self.config.to_dict(), self.manifest())

    def load_arrays(self, arrays, manifest):
        if set(arrays) != set(self.params):
            missing = sorted(set(self.params) ^ set(arrays))
            raise ValueError(f"checkpoint parameter table mismatch: {missing[:5]}")
        for name, arr in arrays.items():
            if arr.shape != self.params[name].shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} vs model {self.params[name].shape}")
            self.params[name].data = arr.astype(self.params[name].data.dtype)
        self.trained = bool(manifest.get("trained", True))


class _SemanticCursor:
    """Incremental semantic decoder state (KV cache) for one generation run."""

    def __init__(self, model, cond_vec):
        self.model = model
        self.cache = nn.new_cache(model.config.sem_layers)
        self.position = 0
        self.z = self._feed(cond_vec)

    def _feed(self, rows):
        m = self.model
        n = rows.shape[0]
        if self.position + n > m.config.max_blocks:
            raise ConfigError(f"sequence exceeds max_blocks={m.config.max_blocks}")
        positions = np.arange(self.position, self.position + n)
        with T.no_grad():
            out = m._semantic(T.Tensor(rows), positions, self.cache)
        self.position += n
        return out.data[-1].copy()

    def push(self, anchors):
        self.z = self._feed(np.atleast_2d(anchors))
        return self.z


class AcgModel(TrainableModel):
    kind = "acg"

    def __init__(self, config: AcgConfig = AcgConfig(), train_config: TrainConfig | None = None):
        super().__init__(train_config)
        self.config = config
        c = config
        h, v, n = c.hidden_dim, c.vocab, c.block_len
        rng = np.random.default_rng(c.seed)
        p = {}
        p["tok_emb"] = nn.normal_param(rng, (v, h), "tok_emb")
        p["sem.cond.start"] = nn.normal_param(rng, (1, h), "sem.cond.start")
        p["sem.cond.count"] = nn.normal_param(rng, (c.count_buckets, h), "sem.cond.count")
        if c.cond_block:
            nn.init_linear(p, rng, "sem.cond.block", n * h, h)
        p["sem.pos"] = nn.normal_param(rng, (c.max_blocks, h), "sem.pos")
        nn.init_decoder(p, rng, "sem", c.sem_layers, h)
        p["rec.pos"] = nn.normal_param(rng, (n, h), "rec.pos")
        nn.init_decoder(p, rng, "rec", c.rec_layers, h)
        nn.init_linear(p, rng, "head", h, v)
        nn.init_linear(p, rng, "reemb.0", n * h, h)
        for i in range(1, c.reemb_layers):
            nn.init_linear(p, rng, f"reemb.{i}", h, h)
        self.params = p

    # -- graph pieces --------------------------------------------------------

    def _condition(self, total_blocks, cond_block=None):
        p = self.params
        x = p["sem.cond.start"] + T.embedding(p["sem.cond.count"],
                                              [count_bucket(total_blocks, self.config.count_buckets)])
        if self.config.cond_block:
            if cond_block is None:
                raise ValueError("this model is conditioned on a block; none was given")
            block = self._check_block(cond_block)
            e = T.reshape(T.embedding(p["tok_emb"], block[None]), (1, -1))
            x = x + nn.apply_linear(p, "sem.cond.block", e)
        return x

    def _check_block(self, block):
        block = np.asarray(block, dtype=np.int64)
        if block.shape != (self.config.block_len,):
            raise ShapeError(f"block must have length {self.config.block_len}, got shape {block.shape}")
        return block

    def _reembed(self, blocks):
        p = self.params
        e = T.embedding(p["tok_emb"], blocks)
        x = nn.apply_linear(p, "reemb.0", T.reshape(e, (blocks.shape[0], -1)))
        for i in range(1, self.config.reemb_layers):
            x = nn.apply_linear(p, f"reemb.{i}", T.gelu(x))
        return x

    def _semantic(self, x, positions, cache=None):
        c = self.config
        x = x + T.embedding(self.params["sem.pos"], positions)
        out = nn.decoder_stack(self.params, "sem", T.reshape(x, (1,) + x.shape), c.sem_layers, c.heads, cache)
        return T.reshape(out, x.shape)

    def _reconstruct_logits(self, z, prefix):
        """Teacher-forced logits ``(K, n, V)`` for blocks whose features are ``z``."""
        c = self.config
        p = self.params
        k = z.shape[0]
        x = T.concat([T.reshape(z, (k, 1, -1)), T.embedding(p["tok_emb"], prefix)], axis=1)
        x = x + p["rec.pos"]
        hidden = nn.decoder_stack(p, "rec", x, c.rec_layers, c.heads)
        return nn.apply_linear(p, "head", hidden)

    def _example_loss(self, ex: Example, rng):
        c = self.config
        blocks = np.asarray(ex.tokens, dtype=np.int64)
        n_blocks = blocks.shape[0]
        if blocks.ndim != 2 or blocks.shape[1] != c.block_len:
            raise ShapeError(f"training matrix must be (blocks, {c.block_len}), got {blocks.shape}")
        if n_blocks > c.max_blocks:
            raise ConfigError(f"piece has {n_blocks} blocks, max_blocks is {c.max_blocks}")
        start, width = crop_window(n_blocks, self.train_config.crop_blocks, rng)
        inputs = [self._condition(n_blocks, ex.cond_block)]
        positions = [0]
        if width > 1:
            inputs.append(self._reembed(blocks[start:start + width - 1]))
            positions += list(range(start + 1, start + width))
        z = self._semantic(T.concat(inputs, axis=0), np.array(positions))
        predicted = np.array([0] + list(range(start + 1, start + width)))
        keep = np.nonzero(predicted >= max(ex.prompt_len, start))[0]
        if keep.size == 0:
            return None, 0
        if keep.size != len(predicted):
            z = z[keep]
        targets = blocks[predicted[keep]]
        logits = self._reconstruct_logits(z, targets[:, :-1])
        loss = T.cross_entropy(T.reshape(logits, (-1, c.vocab)), targets.reshape(-1), reduction="sum")
        return loss, targets.size

    # -- training --------------------------------------------------------------

    def batch_loss(self, batch, rng=None):
        if not batch:
            raise ValueError("empty training batch")
        rng = self._rng if rng is None else rng
        total, count = None, 0
        for item in batch:
            ex = as_example(item)
            if isinstance(item, TokenMatrix) and item.config != self.config.patch:
                raise ConfigError(f"token matrix uses {item.config}, model expects {self.config.patch}")
            loss, n = self._example_loss(ex, rng)
            if n:
                total = loss if total is None else total + loss
                count += n
        if not count:
            raise ValueError("batch contains no target blocks")
        return total, count

    def train_step(self, batch) -> float:
        """One teacher-forced optimiser step; returns the mean token cross-entropy."""
        return self._apply(*self.batch_loss(batch))

    def evaluate_loss(self, batch) -> float:
        with T.no_grad():
            total, count = self.batch_loss(batch, np.random.default_rng(0))
        return float(total.data) / count

    # -- inference ---------------------------------------------------------------

    def reembed(self, block) -> np.ndarray:
        block = self._check_block(block)
        with T.no_grad():
            return self._reembed(block[None]).data[0].copy()

    def reembed_blocks(self, blocks) -> np.ndarray:
        blocks = np.asarray(blocks, dtype=np.int64)
        if blocks.ndim != 2 or blocks.shape[1] != self.config.block_len:
            raise ShapeError(f"blocks must be (k, {self.config.block_len}), got {blocks.shape}")
        with T.no_grad():
            return self._reembed(blocks).data.copy()

    def condition_vector(self, cond: Condition) -> np.ndarray:
        with T.no_grad():
            return self._condition(cond.total_blocks, cond.block).data.copy()

    def predict_semantic(self, anchors, cond: Condition, step: int) -> np.ndarray:
        """Semantic feature for block ``step`` (1-based) from the anchors of blocks before it."""
        anchors = np.asarray(anchors, dtype=np.float32).reshape(-1, self.config.hidden_dim)
        if step != anchors.shape[0] + 1:
            raise StateError(f"step {step} needs exactly {step - 1} anchors, got {anchors.shape[0]}")
        if step > self.config.max_blocks:
            raise ConfigError(f"step {step} exceeds max_blocks={self.config.max_blocks}")
        with T.no_grad():
            x = np.concatenate([self.condition_vector(cond), anchors])
            z = self._semantic(T.Tensor(x), np.arange(step))
        z = z.data[-1].copy()
        if not np.isfinite(z).all():
            raise FloatingPointError("semantic feature is not finite")
        return z

    def reconstruct_block(self, z, sampler: SamplerConfig = SamplerConfig(), rng=None) -> np.ndarray:
        """Decode one block of ``n`` tokens from a semantic feature."""
        c = self.config
        p = self.params
        z = np.asarray(z, dtype=np.float32)
        if not np.isfinite(z).all():
            raise ValueError("semantic feature is not finite")
        rng = np.random.default_rng() if rng is None else rng
        cache = nn.new_cache(c.rec_layers)
        pos = p["rec.pos"].data
        emb = p["tok_emb"].data
        x = (z + pos[0])[None, None, :]
        out = np.empty(c.block_len, np.int64)
        with T.no_grad():
            for k in range(c.block_len):
                hidden = nn.decoder_stack(p, "rec", T.Tensor(x), c.rec_layers, c.heads, cache)
                logits = nn.apply_linear(p, "head", hidden).data[:, -1]
                tok = int(sample(logits, sampler, rng)[0])
                if not 0 <= tok < c.vocab:
                    raise RuntimeError(f"sampler produced out-of-vocabulary id {tok}")
                out[k] = tok
                if k + 1 < c.block_len:
                    x = (emb[tok] + pos[k + 1])[None, None, :]
        return out

    def generate(self, cond: Condition, sampler: SamplerConfig = SamplerConfig(), rng=None,
                 return_features=False):
        """Cyclic generation: predict, reconstruct, re-embed, repeat.

        The result holds the prompt blocks verbatim followed by exactly
        ``cond.target_block_count`` new blocks.
        """
        c = self.config
        if cond.target_block_count < 1:
            raise ValueError("target_block_count must be at least 1")
        prompt = cond.prompt_blocks(c.block_len)
        if prompt.shape[0] + cond.target_block_count > c.max_blocks:
            raise ConfigError(f"{prompt.shape[0] + cond.target_block_count} blocks requested, "
                              f"max_blocks is {c.max_blocks}")
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        cursor = _SemanticCursor(self, self.condition_vector(cond))
        if prompt.shape[0]:
            cursor.push(self.reembed_blocks(prompt))
        blocks, features = [], []
        for step in range(cond.target_block_count):
            if not np.isfinite(cursor.z).all():
                raise FloatingPointError("semantic feature is not finite")
            features.append(cursor.z)
            block = self.reconstruct_block(cursor.z, sampler, rng)
            blocks.append(block)
            if step + 1 < cond.target_block_count:
                cursor.push(self.reembed(block)[None])
        tokens = TokenMatrix(np.concatenate([prompt, np.stack(blocks)]), c.patch)
        if return_features:
            return tokens, np.stack(features)
        return tokens

    def semantic_targets(self, truth, cond: Condition | None = None) -> np.ndarray:
        """Teacher-forced features ``h_1..h_K``: every anchor comes from ground truth.

        Prompt blocks named in ``cond`` are fed in one chunk exactly as
        :meth:`generate` does, so with identical history the features agree
        bit for bit.
        """
        self._require_trained()
        blocks = truth.tokens if isinstance(truth, TokenMatrix) else np.asarray(truth, np.int64)
        n_blocks = blocks.shape[0]
        cond = cond or Condition(n_blocks)
        prompt = cond.prompt_blocks(self.config.block_len)
        n_prompt = prompt.shape[0]
        if not np.array_equal(blocks[:n_prompt], prompt):
            raise ValueError("condition prompt does not match the first blocks of the truth matrix")
        cursor = _SemanticCursor(self, self.condition_vector(cond))
        if n_prompt:
            feats = list(self._prefix_features(cond, prompt))
            feats.append(cursor.push(self.reembed_blocks(prompt)))
        else:
            feats = [cursor.z]
        for t in range(n_prompt + 1, n_blocks):
            feats.append(cursor.push(self.reembed(blocks[t - 1])[None]))
        return np.stack(feats[:n_blocks])

    def _prefix_features(self, cond, prompt):
        anchors = self.reembed_blocks(prompt[:-1]) if len(prompt) > 1 else np.zeros((0, self.config.hidden_dim))
        with T.no_grad():
            x = np.concatenate([self.condition_vector(cond), anchors]).astype(np.float32)
            return self._semantic(T.Tensor(x), np.arange(x.shape[0])).data.copy()

    def semantic_target(self, truth, step: int, cond: Condition | None = None) -> np.ndarray:
        blocks = truth.tokens if isinstance(truth, TokenMatrix) else np.asarray(truth)
        if not 1 <= step <= blocks.shape[0]:
            raise ValueError(f"step {step} outside 1..{blocks.shape[0]}")
        return self.semantic_targets(truth, cond)[step - 1]

    # -- persistence -------------------------------------------------------------

    def manifest(self):
        out = super().manifest()
        out["submodels"] = {
            "semantic_prediction": sorted(k for k in self.params if k.startswith("sem.")),
            "semantic_reconstruction": sorted(k for k in self.params
                                              if k.startswith(("rec.", "head.")) or k == "tok_emb"),
            "re_embedding": sorted(k for k in self.params if k.startswith("reemb.")),
        }
        return out

    @classmethod
    def from_bytes(cls, data, train_config=None):
        arrays, config, manifest = checkpoint.loads(data)
        if manifest.get("kind", cls.kind) != cls.kind:
            raise ValueError(f"checkpoint holds a {manifest.get('kind')!r} model, not {cls.kind!r}")
        model = cls(AcgConfig.from_dict(config), train_config)
        model.load_arrays(arrays, manifest)
        return model

    @classmethod
    def load(cls, path, train_config=None):
        from pathlib import Path
        return cls.from_bytes(Path(path).read_bytes(), train_config)
