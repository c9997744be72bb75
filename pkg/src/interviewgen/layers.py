"""Transformer building blocks shared by the three model components.

Everything operates on (batch, time, hidden) tensors. Blocks are pre-norm:
x + Attn(LN(x)) then x + FFN(LN(x)), with a final LayerNorm after the
stack and learned positional embeddings added at the input.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


def uniform_init(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def table_init(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    limit = 1.0 / math.sqrt(dim)
    return rng.uniform(-limit, limit, size=(rows, dim))


class ParamRegistry:
    """Ordered store of named parameters; creation order fixes RNG draws."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.params: dict[str, Parameter] = {}

    def matrix(self, name: str, rows: int, cols: int, tag: str, scale: float = 1.0) -> Parameter:
        return self._add(
            name, scale * uniform_init(self.rng, (rows, cols), rows, cols), tag
        )

    def table(self, name: str, rows: int, dim: int, tag: str) -> Parameter:
        return self._add(name, table_init(self.rng, rows, dim), tag)

    def zeros(self, name: str, shape, tag: str) -> Parameter:
        return self._add(name, np.zeros(shape), tag)

    def ones(self, name: str, shape, tag: str) -> Parameter:
        return self._add(name, np.ones(shape), tag)

    def _add(self, name: str, data: np.ndarray, tag: str) -> Parameter:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data, tag)
        self.params[name] = p
        return p

    def set_trainable(self, tags: set[str]) -> None:
        """Freeze every parameter whose component tag is outside ``tags``."""
        for p in self.params.values():
            p.tensor.requires_grad = p.component_tag in tags


class Linear:
    def __init__(self, reg: ParamRegistry, name: str, d_in: int, d_out: int, tag: str):
        self.w = reg.matrix(f"{name}.w", d_in, d_out, tag)
        self.b = reg.zeros(f"{name}.b", (d_out,), tag)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.w.tensor), self.b.tensor)


class LayerNorm:
    def __init__(self, reg: ParamRegistry, name: str, dim: int, tag: str):
        self.g = reg.ones(f"{name}.g", (dim,), tag)
        self.b = reg.zeros(f"{name}.b", (dim,), tag)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.g.tensor, self.b.tensor)


class MultiHeadSelfAttention:
    def __init__(self, reg: ParamRegistry, name: str, hidden: int, heads: int, tag: str):
        if hidden % heads:
            raise ValueError(f"hidden {hidden} not divisible by heads {heads}")
        self.heads = heads
        self.dk = hidden // heads
        self.hidden = hidden
        self.wq = reg.matrix(f"{name}.wq", hidden, hidden, tag)
        self.wk = reg.matrix(f"{name}.wk", hidden, hidden, tag)
        self.wv = reg.matrix(f"{name}.wv", hidden, hidden, tag)
        self.wo = reg.matrix(f"{name}.wo", hidden, hidden, tag)

    def __call__(
        self,
        x: Tensor,
        key_mask: np.ndarray | None = None,
        causal: bool = False,
    ) -> Tensor:
        b, t, h = x.shape
        q = self._split(ad.matmul(x, self.wq.tensor), b, t)
        k = self._split(ad.matmul(x, self.wk.tensor), b, t)
        v = self._split(ad.matmul(x, self.wv.tensor), b, t)
        scores = ad.mul(ad.matmul(q, ad.swapaxes(k, -1, -2)), 1.0 / math.sqrt(self.dk))
        mask = None
        if key_mask is not None:
            mask = np.asarray(key_mask, dtype=bool)[:, None, None, :]
            mask = np.broadcast_to(mask, (b, self.heads, t, t))
        if causal:
            tri = np.tril(np.ones((t, t), dtype=bool))[None, None, :, :]
            mask = tri if mask is None else (mask & tri)
        attn = ad.softmax(scores, mask=mask)
        ctx = ad.matmul(attn, v)
        merged = ad.reshape(ad.swapaxes(ctx, 1, 2), (b, t, h))
        return ad.matmul(merged, self.wo.tensor)

    def _split(self, x: Tensor, b: int, t: int) -> Tensor:
        return ad.swapaxes(ad.reshape(x, (b, t, self.heads, self.dk)), 1, 2)


class TransformerBlock:
    def __init__(
        self, reg: ParamRegistry, name: str, hidden: int, heads: int, ffn: int, tag: str
    ):
        self.ln1 = LayerNorm(reg, f"{name}.ln1", hidden, tag)
        self.attn = MultiHeadSelfAttention(reg, f"{name}.attn", hidden, heads, tag)
        self.ln2 = LayerNorm(reg, f"{name}.ln2", hidden, tag)
        self.ffn1 = Linear(reg, f"{name}.ffn1", hidden, ffn, tag)
        self.ffn2 = Linear(reg, f"{name}.ffn2", ffn, hidden, tag)

    def __call__(self, x, key_mask=None, causal=False) -> Tensor:
        x = ad.add(x, self.attn(self.ln1(x), key_mask=key_mask, causal=causal))
        return ad.add(x, self.ffn2(ad.relu(self.ffn1(self.ln2(x)))))


class TransformerStack:
    """Positional embedding, N blocks, and a final LayerNorm."""

    def __init__(
        self,
        reg: ParamRegistry,
        name: str,
        hidden: int,
        heads: int,
        ffn: int,
        layers: int,
        max_positions: int,
        tag: str,
    ):
        self.name = name
        self.max_positions = max_positions
        self.pos = reg.table(f"{name}.pos", max_positions, hidden, tag)
        self.blocks = [
            TransformerBlock(reg, f"{name}.l{i}", hidden, heads, ffn, tag)
            for i in range(layers)
        ]
        self.ln_f = LayerNorm(reg, f"{name}.ln_f", hidden, tag)

    def __call__(self, x: Tensor, key_mask=None, causal=False) -> Tensor:
        t = x.shape[-2]
        if t > self.max_positions:
            raise ad.ShapeError(
                f"{self.name}: sequence length {t} exceeds positional table "
                f"{self.max_positions}"
            )
        x = ad.add(x, ad.embedding(self.pos.tensor, np.arange(t)))
        for block in self.blocks:
            x = block(x, key_mask=key_mask, causal=causal)
        return self.ln_f(x)


def ensure_nonempty_rows(mask: np.ndarray) -> np.ndarray:
    """Force position 0 visible on all-padding rows so softmax stays defined.

    Such rows only ever exist for padded-out items and are masked again
    one level up, so the dummy visibility never leaks into real outputs.
    """
    mask = np.array(mask, dtype=bool, copy=True)
    dead = ~mask.any(axis=-1)
    if dead.any():
        mask[dead, 0] = True
    return mask
