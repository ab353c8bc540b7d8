"""Transformer building blocks on top of :mod:`hiacg.tensor`.

Parameters live in flat ``{name: Tensor}`` dictionaries so checkpoints are a
plain named table. Decoder blocks are pre-norm with a GELU feed-forward of 4x
width; the same functions serve teacher-forced training (graph recorded) and
cached incremental decoding (under :func:`~hiacg.tensor.no_grad`).
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError, StateError
from .tensor import Tensor

INIT_STD = 0.02

# -- attention instrumentation ----------------------------------------------

_counters: list = []


@dataclass
class AttentionCounter:
    """Tallies scalar multiplies spent forming attention score matrices (Q K^T)."""

    score_multiplies: int = 0
    calls: int = 0


@contextlib.contextmanager
def count_attention():
    counter = AttentionCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


def _record_scores(n):
    for c in _counters:
        c.score_multiplies += n
        c.calls += 1


# -- parameters -------------------------------------------------------------

def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def normal_param(rng, shape, name, std=INIT_STD):
    return parameter(rng.normal(0.0, std, size=shape), name)


def init_linear(params, rng, name, n_in, n_out, std=INIT_STD):
    params[f"{name}.w"] = normal_param(rng, (n_in, n_out), f"{name}.w", std)
    params[f"{name}.b"] = parameter(np.zeros(n_out), f"{name}.b")


def init_layer_norm(params, name, dim):
    params[f"{name}.g"] = parameter(np.ones(dim), f"{name}.g")
    params[f"{name}.b"] = parameter(np.zeros(dim), f"{name}.b")


def init_decoder(params, rng, prefix, n_layers, hidden):
    # residual projections get the GPT-2 style depth-scaled init
    out_std = INIT_STD / math.sqrt(2 * max(n_layers, 1))
    for i in range(n_layers):
        p = f"{prefix}.{i}"
        init_layer_norm(params, f"{p}.ln1", hidden)
        for proj in ("q", "k", "v"):
            init_linear(params, rng, f"{p}.attn.{proj}", hidden, hidden)
        init_linear(params, rng, f"{p}.attn.out", hidden, hidden, out_std)
        init_layer_norm(params, f"{p}.ln2", hidden)
        init_linear(params, rng, f"{p}.ff.in", hidden, 4 * hidden)
        init_linear(params, rng, f"{p}.ff.out", 4 * hidden, hidden, out_std)
    init_layer_norm(params, f"{prefix}.ln_f", hidden)


def count_parameters(params) -> int:
    return int(sum(p.data.size for p in params.values()))


def apply_linear(params, name, x):
    return T.linear(x, params[f"{name}.w"], params[f"{name}.b"])


def apply_layer_norm(params, name, x):
    return T.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


# -- attention and decoder blocks --------------------------------------------

def causal_mask(n_query, n_key, offset=0):
    """Boolean (n_query, n_key) mask; query i sits at absolute position offset + i."""
    return np.arange(n_key)[None, :] <= (np.arange(n_query)[:, None] + offset)


def attention(q, k, v, mask=None):
    """Scaled dot-product attention over ``(..., L, head_dim)`` tensors."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} are incompatible")
    lead = int(np.prod(q.shape[:-2]))
    _record_scores(lead * q.shape[-2] * k.shape[-2] * q.shape[-1])
    scores = T.scale(T.matmul(q, T.transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2))),
                     1.0 / math.sqrt(q.shape[-1]))
    return T.matmul(T.softmax(scores, axis=-1, mask=mask), v)


def _split_heads(x, heads):
    b, n, h = x.shape
    return T.transpose(T.reshape(x, (b, n, heads, h // heads)), (0, 2, 1, 3))


def _merge_heads(x):
    b, heads, n, dh = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, n, heads * dh))


def multi_head_attention(params, name, x, heads, cache=None):
    """Causal self-attention. ``cache`` is a dict holding past keys/values (inference only)."""
    hidden = x.shape[-1]
    if hidden % heads:
        raise ConfigError(f"{heads} heads do not divide model dim {hidden}")
    q = _split_heads(apply_linear(params, f"{name}.q", x), heads)
    k = _split_heads(apply_linear(params, f"{name}.k", x), heads)
    v = _split_heads(apply_linear(params, f"{name}.v", x), heads)
    offset = 0
    if cache is not None:
        if T._state["grad"] and x.requires_grad:
            raise StateError("key/value caching is only available under no_grad()")
        if "k" in cache:
            offset = cache["k"].shape[2]
            k = Tensor(np.concatenate([cache["k"], k.data], axis=2))
            v = Tensor(np.concatenate([cache["v"], v.data], axis=2))
        cache["k"], cache["v"] = k.data, v.data
    mask = causal_mask(x.shape[1], k.shape[2], offset)
    out = attention(q, k, v, mask)
    return apply_linear(params, f"{name}.out", _merge_heads(out))


def decoder_layer(params, name, x, heads, cache=None):
    x = x + multi_head_attention(params, f"{name}.attn", apply_layer_norm(params, f"{name}.ln1", x),
                                 heads, cache)
    h = T.gelu(apply_linear(params, f"{name}.ff.in", apply_layer_norm(params, f"{name}.ln2", x)))
    return x + apply_linear(params, f"{name}.ff.out", h)


def decoder_stack(params, prefix, x, n_layers, heads, cache=None):
    """Run ``n_layers`` causal blocks and the final norm over ``(B, L, H)`` input.

    ``cache`` (inference only) is a list with one dict per layer; it is
    extended in place so later calls can feed just the new positions.
    """
    for i in range(n_layers):
        x = decoder_layer(params, f"{prefix}.{i}", x, heads, None if cache is None else cache[i])
    return apply_layer_norm(params, f"{prefix}.ln_f", x)


def new_cache(n_layers):
    return [{} for _ in range(n_layers)]


# -- optimisation -------------------------------------------------------------

@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params, state: OptimizerState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update over a ``{name: Tensor}`` dict; clears the grads."""
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise StateError(f"no gradient for parameter(s): {', '.join(missing[:5])}")
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype)
        p.grad = None


def clip_grad_norm(params, max_norm):
    total = math.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum())
                          for p in params.values() if p.grad is not None))
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return total


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, clip=None):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps, self.clip = lr, beta1, beta2, eps, clip
        self.state = OptimizerState()

    def step(self, lr=None):
        # parameters that took no part in this batch (e.g. the re-embedding of a
        # one-block piece) are left untouched rather than fed a zero gradient
        active = {n: p for n, p in self.params.items() if p.grad is not None}
        if not active:
            raise StateError("no parameter has a gradient; call backward() first")
        if self.clip is not None:
            clip_grad_norm(active, self.clip)
        adam_step(active, self.state, self.lr if lr is None else lr,
                  self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
