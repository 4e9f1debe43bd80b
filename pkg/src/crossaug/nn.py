"""Shared neural plumbing: initializers, LSTM cell, optimizers, batching helpers."""

from __future__ import annotations

import zlib

import numpy as np

from . import autodiff as ad


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """A generator whose stream depends only on (seed, tags).

    Tags are hashed with crc32 so string labels give stable sub-streams
    across runs and processes.
    """
    entropy = [int(seed) % (2**63)]
    entropy.extend(zlib.crc32(str(tag).encode("utf-8")) for tag in tags)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    scale = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-scale, scale, size=(fan_in, fan_out))


def embedding_init(rng: np.random.Generator, vocab_size: int, dim: int) -> np.ndarray:
    return rng.uniform(-0.1, 0.1, size=(vocab_size, dim))


def lstm_init(rng: np.random.Generator, input_dim: int, hidden_dim: int) -> dict:
    """Input/recurrent/bias arrays for one cell; forget-gate bias starts at 1."""
    bias = np.zeros(4 * hidden_dim)
    bias[hidden_dim : 2 * hidden_dim] = 1.0
    return {
        "W": xavier(rng, input_dim, 4 * hidden_dim),
        "U": xavier(rng, hidden_dim, 4 * hidden_dim),
        "b": bias,
    }


def lstm_step(W: ad.Node, U: ad.Node, b: ad.Node, x: ad.Node, h: ad.Node, c: ad.Node):
    """One LSTM transition; gate layout along the fused axis is [i, f, g, o]."""
    hidden = h.value.shape[1]
    z = ad.add(ad.add(ad.matmul(x, W), ad.matmul(h, U)), b)
    i = ad.sigmoid(ad.slice_cols(z, 0, hidden))
    f = ad.sigmoid(ad.slice_cols(z, hidden, 2 * hidden))
    g = ad.tanh(ad.slice_cols(z, 2 * hidden, 3 * hidden))
    o = ad.sigmoid(ad.slice_cols(z, 3 * hidden, 4 * hidden))
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_next = ad.mul(o, ad.tanh(c_next))
    return h_next, c_next


def masked_blend(new: ad.Node, old: ad.Node, keep: ad.Node, skip: ad.Node) -> ad.Node:
    """new where keep==1, old where skip==1; keep/skip are (B, 1) constants."""
    return ad.add(ad.mul(new, keep), ad.mul(old, skip))


def linear(x: ad.Node, W: ad.Node, b: ad.Node) -> ad.Node:
    return ad.add(ad.matmul(x, W), b)


def dropout(x: ad.Node, rate: float, rng: np.random.Generator | None) -> ad.Node:
    """Inverted dropout; identity when rate is 0 or no generator is given (eval)."""
    if rate <= 0.0 or rng is None:
        return x
    mask = (rng.random(x.value.shape) >= rate) / (1.0 - rate)
    return ad.mul(x, ad.constant(mask))


def pad_batch(sequences, pad_id: int):
    """Right-pad id sequences to the batch maximum.

    Returns (ids, lengths): ids is (B, T) int64, lengths is (B,) int64.
    """
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    width = int(lengths.max())
    ids = np.full((len(sequences), width), pad_id, dtype=np.int64)
    for row, seq in enumerate(sequences):
        ids[row, : len(seq)] = seq
    return ids, lengths


def clip_gradients(params, max_norm: float) -> float:
    """Scale the joint gradient of `params` to at most `max_norm`; returns the post-clip norm."""
    grads = [p.grad for p in params if p.grad is not None]
    if not grads:
        return 0.0
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm > 0.0:
        factor = max_norm / total
        for g in grads:
            g *= factor
        total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    return total


class Adam:
    """Adam over a named parameter group; state is keyed by parameter name."""

    def __init__(self, params: dict, lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.t += 1
        correct1 = 1.0 - self.beta1**self.t
        correct2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.value -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


class RMSprop:
    """RMSprop with a running second-moment average."""

    def __init__(self, params: dict, lr: float = 5e-4, alpha: float = 0.99, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.alpha = alpha
        self.eps = eps
        self.sq = {name: np.zeros_like(p.value) for name, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            sq = self.sq[name]
            sq *= self.alpha
            sq += (1.0 - self.alpha) * (g * g)
            p.value -= self.lr * g / (np.sqrt(sq) + self.eps)
