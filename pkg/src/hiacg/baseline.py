"""Conventional flat autoregressive decoder over the block-major token stream.

The stream is the token matrix read row by row (block-major, lowest pitch
patch first within a block). Position embeddings are factorised into a block
index and an in-block index so the same positional information is available
as in the anchored model.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from . import nn
from . import tensor as T
from .acg import AcgConfig, Condition, TrainableModel, as_example, count_bucket, crop_window
from .errors import ConfigError, ShapeError
from .sampling import SamplerConfig, sample
from .tokens import PatchConfig, TokenMatrix


@dataclass(frozen=True)
class BaselineConfig:
    hidden_dim: int = 128
    layers: int = 4
    heads: int = 4
    d: int = 2
    t: int = 4
    max_blocks: int = 256
    count_buckets: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim % self.heads:
            raise ConfigError(f"heads={self.heads} must divide hidden_dim={self.hidden_dim}")
        if self.layers < 1 or self.max_blocks < 1:
            raise ConfigError("layers and max_blocks must be positive")
        PatchConfig(self.d, self.t)

    @property
    def patch(self):
        return PatchConfig(self.d, self.t)

    @property
    def vocab(self):
        return self.patch.vocab_size

    @property
    def block_len(self):
        return self.patch.n_rows

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


def flatten(tokens) -> np.ndarray:
    blocks = tokens.tokens if isinstance(tokens, TokenMatrix) else np.asarray(tokens)
    return blocks.reshape(-1)


def unflatten(stream, config: PatchConfig = PatchConfig()) -> TokenMatrix:
    stream = np.asarray(stream, dtype=np.int64)
    if stream.size % config.n_rows:
        raise ShapeError(f"stream length {stream.size} is not a multiple of {config.n_rows}")
    return TokenMatrix(stream.reshape(-1, config.n_rows), config)


def _param_count(cfg: BaselineConfig):
    h, v = cfg.hidden_dim, cfg.vocab
    per_layer = 4 * (h * h + h) + (h * 4 * h + 4 * h) + (4 * h * h + h) + 4 * h
    fixed = v * h + h + cfg.count_buckets * h + cfg.max_blocks * h + cfg.block_len * h + 2 * h + h * v + v
    return fixed + cfg.layers * per_layer


def matched_config(acg: AcgConfig, max_layers=48) -> BaselineConfig:
    """Baseline at the same width whose depth brings its size closest to ``acg``."""
    from .acg import AcgModel
    target = AcgModel(acg).n_parameters()
    best = None
    for layers in range(1, max_layers + 1):
        cfg = BaselineConfig(acg.hidden_dim, layers, acg.heads, acg.d, acg.t, acg.max_blocks,
                             acg.count_buckets, acg.seed)
        gap = abs(_param_count(cfg) - target)
        if best is None or gap < best[0]:
            best = (gap, cfg)
    return best[1]


class FlatArModel(TrainableModel):
    kind = "baseline"

    def __init__(self, config: BaselineConfig = BaselineConfig(), train_config=None):
        super().__init__(train_config)
        self.config = c = config
        h, v, n = c.hidden_dim, c.vocab, c.block_len
        rng = np.random.default_rng(c.seed)
        p = {}
        p["tok_emb"] = nn.normal_param(rng, (v, h), "tok_emb")
        p["cond.start"] = nn.normal_param(rng, (1, h), "cond.start")
        p["cond.count"] = nn.normal_param(rng, (c.count_buckets, h), "cond.count")
        p["pos.block"] = nn.normal_param(rng, (c.max_blocks, h), "pos.block")
        p["pos.inner"] = nn.normal_param(rng, (n, h), "pos.inner")
        nn.init_decoder(p, rng, "dec", c.layers, h)
        nn.init_linear(p, rng, "head", h, v)
        self.params = p

    def _condition(self, total_blocks):
        p = self.params
        return p["cond.start"] + T.embedding(p["cond.count"], [count_bucket(total_blocks, self.config.count_buckets)])

    def _token_inputs(self, ids, flat_positions):
        p = self.params
        n = self.config.block_len
        return (T.embedding(p["tok_emb"], ids) + T.embedding(p["pos.block"], flat_positions // n)
                + T.embedding(p["pos.inner"], flat_positions % n))

    def _decode(self, x, cache=None):
        c = self.config
        out = nn.decoder_stack(self.params, "dec", T.reshape(x, (1,) + x.shape), c.layers, c.heads, cache)
        return T.reshape(out, x.shape)

    def _example_loss(self, ex, rng):
        c = self.config
        blocks = np.asarray(ex.tokens, dtype=np.int64)
        if blocks.ndim != 2 or blocks.shape[1] != c.block_len:
            raise ShapeError(f"training matrix must be (blocks, {c.block_len}), got {blocks.shape}")
        n_blocks, n = blocks.shape
        if n_blocks > c.max_blocks:
            raise ConfigError(f"piece has {n_blocks} blocks, max_blocks is {c.max_blocks}")
        start, width = crop_window(n_blocks, self.train_config.crop_blocks, rng)
        stream = blocks.reshape(-1)
        lo, hi = start * n, (start + width) * n
        inputs = np.arange(lo, hi - 1)
        x = T.concat([self._condition(n_blocks), self._token_inputs(stream[inputs], inputs)], axis=0)
        hidden = self._decode(x)
        predicted = np.concatenate([[0], inputs + 1])
        first = ex.prompt_len if start == 0 else max(ex.prompt_len, start + 1)
        keep = np.nonzero(predicted // n >= first)[0]
        if keep.size == 0:
            return None, 0
        if keep.size != len(predicted):
            hidden = hidden[keep]
        logits = nn.apply_linear(self.params, "head", hidden)
        targets = stream[predicted[keep]]
        return T.cross_entropy(logits, targets, reduction="sum"), targets.size

    def batch_loss(self, batch, rng=None):
        if not batch:
            raise ValueError("empty training batch")
        rng = self._rng if rng is None else rng
        total, count = None, 0
        for item in batch:
            loss, k = self._example_loss(as_example(item), rng)
            if k:
                total = loss if total is None else total + loss
                count += k
        if not count:
            raise ValueError("batch contains no target blocks")
        return total, count

    def train_step(self, batch) -> float:
        return self._apply(*self.batch_loss(batch))

    def evaluate_loss(self, batch) -> float:
        with T.no_grad():
            total, count = self.batch_loss(batch, np.random.default_rng(0))
        return float(total.data) / count

    # -- inference ---------------------------------------------------------------

    def _step(self, x, cache):
        with T.no_grad():
            hidden = self._decode(T.Tensor(x), cache)
            logits = nn.apply_linear(self.params, "head", hidden)
        return hidden.data[-1].copy(), logits.data[-1:]

    def _prime(self, cond, prompt_stream):
        cache = nn.new_cache(self.config.layers)
        x = self.condition_vector(cond)
        if prompt_stream.size:
            pos = np.arange(prompt_stream.size)
            with T.no_grad():
                x = np.concatenate([x, self._token_inputs(prompt_stream, pos).data])
        hidden, logits = self._step(x, cache)
        return cache, hidden, logits

    def condition_vector(self, cond: Condition):
        with T.no_grad():
            return self._condition(cond.total_blocks).data.copy()

    def _token_vector(self, tok, flat_pos):
        with T.no_grad():
            return self._token_inputs(np.array([tok]), np.array([flat_pos])).data

    def generate(self, cond: Condition, sampler: SamplerConfig = SamplerConfig(), rng=None,
                 return_features=False):
        """Emit ``n * target_block_count`` tokens after the (optional) prompt."""
        c = self.config
        n = c.block_len
        if cond.target_block_count < 1:
            raise ValueError("target_block_count must be at least 1")
        prompt = cond.prompt_blocks(n)
        total = prompt.shape[0] + cond.target_block_count
        if total > c.max_blocks:
            raise ConfigError(f"{total} blocks requested, max_blocks is {c.max_blocks}")
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        stream = list(prompt.reshape(-1))
        cache, hidden, logits = self._prime(cond, prompt.reshape(-1))
        features = []
        for f in range(len(stream), total * n):
            if f % n == 0:
                features.append(hidden)
            tok = int(sample(logits, sampler, rng)[0])
            stream.append(tok)
            if f + 1 < total * n:
                hidden, logits = self._step(self._token_vector(tok, f), cache)
        tokens = unflatten(stream, c.patch)
        if return_features:
            return tokens, np.stack(features)
        return tokens

    def semantic_targets(self, truth, cond: Condition | None = None) -> np.ndarray:
        """Teacher-forced hidden state at the position that predicts each block's first token."""
        self._require_trained()
        n = self.config.block_len
        blocks = truth.tokens if isinstance(truth, TokenMatrix) else np.asarray(truth, np.int64)
        n_blocks = blocks.shape[0]
        cond = cond or Condition(n_blocks)
        prompt = cond.prompt_blocks(n)
        if not np.array_equal(blocks[:len(prompt)], prompt):
            raise ValueError("condition prompt does not match the first blocks of the truth matrix")
        stream = blocks.reshape(-1)
        p = prompt.size
        feats = []
        if p:
            with T.no_grad():
                pos = np.arange(p - 1)
                x = np.concatenate([self.condition_vector(cond), self._token_inputs(stream[:p - 1], pos).data])
                hidden = self._decode(T.Tensor(x)).data
            feats.extend(hidden[::n][:len(prompt)])
        cache, hidden, _ = self._prime(cond, stream[:p])
        for f in range(p, n_blocks * n):
            if f % n == 0:
                feats.append(hidden)
            if f + 1 < n_blocks * n and (f + 1) // n < n_blocks:
                hidden, _ = self._step(self._token_vector(stream[f], f), cache)
        return np.stack(feats[:n_blocks])

    @classmethod
    def from_bytes(cls, data, train_config=None):
        arrays, config, manifest = checkpoint.loads(data)
        if manifest.get("kind", cls.kind) != cls.kind:
            raise ValueError(f"checkpoint holds a {manifest.get('kind')!r} model, not {cls.kind!r}")
        model = cls(BaselineConfig.from_dict(config), train_config)
        model.load_arrays(arrays, manifest)
        return model

    @classmethod
    def load(cls, path, train_config=None):
        return cls.from_bytes(Path(path).read_bytes(), train_config)
