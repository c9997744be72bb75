"""Knowledge-insensitive dialog generation.

Hierarchical context encoding (per-utterance self-attention summarised at
the cls position, then a second self-attention pass across turn summaries),
a causal transformer decoder, relu-scored cross-attention over turn states,
and the teacher-forced negative log likelihood used for pre-training on
ungrounded dialogs.

The cross-attention scores are rectified but NOT normalised; that is the
reference behaviour. ``normalize_cross_attention`` switches to a masked
softmax over the raw scores for stability experiments.
"""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import ContextBatch, TargetBatch
from .layers import Linear, ParamRegistry, TransformerStack, ensure_nonempty_rows


def relu_attention(
    queries: Tensor,
    keys: Tensor,
    key_mask: np.ndarray | None,
    wd,
    wh,
    normalize: bool = False,
):
    """Rectified unnormalised attention of queries over keys.

    queries: (B, T, H); keys: (B, S, H) or (S, H). Returns the weighted sum
    (B, T, H) and the weights (B, T, S). Masked key slots get weight exactly
    zero. With ``normalize`` the raw scores go through a masked softmax
    instead of the relu.
    """
    q = ad.matmul(queries, wd)
    k = ad.matmul(keys, wh)
    raw = ad.matmul(q, ad.swapaxes(k, -1, -2))
    if normalize:
        mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[..., None, :]
        weights = ad.softmax(raw, mask=mask)
    else:
        weights = ad.relu(raw)
        if key_mask is not None:
            mask = np.asarray(key_mask, dtype=bool)[..., None, :]
            weights = ad.where(np.broadcast_to(mask, weights.shape), weights, Tensor(0.0))
    return ad.matmul(weights, keys), weights


class DialogGenerator:
    """Owns the shared word embedding table, both context encoders, the
    response decoder and the word-projection head."""

    TAG = "generator"

    def __init__(
        self,
        reg: ParamRegistry,
        vocab_size: int,
        embed_dim: int,
        hidden_dim: int,
        layers: int,
        heads: int,
        ffn_dim: int,
        max_utterance_positions: int = 24,
        max_turn_positions: int = 32,
        max_decode_positions: int = 24,
        normalize_cross_attention: bool = False,
    ):
        t = self.TAG
        self.hidden_dim = hidden_dim
        self.vocab_size = vocab_size
        self.normalize_cross_attention = normalize_cross_attention
        self.word = reg.table("gen.embed.word", vocab_size, embed_dim, t)
        self.proj_in = Linear(reg, "gen.proj_in", embed_dim, hidden_dim, t)
        self.utt = TransformerStack(
            reg, "gen.utt", hidden_dim, heads, ffn_dim, layers, max_utterance_positions, t
        )
        self.ctx = TransformerStack(
            reg, "gen.ctx", hidden_dim, heads, ffn_dim, layers, max_turn_positions, t
        )
        self.dec = TransformerStack(
            reg, "gen.dec", hidden_dim, heads, ffn_dim, layers, max_decode_positions, t
        )
        # The rectified cross-attention scores are unnormalised, so the score
        # maps start small to keep early context vectors near the state scale.
        self.cross_wd = reg.matrix("gen.cross.wd", hidden_dim, hidden_dim, t, scale=0.1)
        self.cross_wh = reg.matrix("gen.cross.wh", hidden_dim, hidden_dim, t, scale=0.1)
        self.out_w = reg.matrix("gen.out.w", 2 * hidden_dim, vocab_size, t)
        self.out_b = reg.zeros("gen.out.b", (vocab_size,), t)

    # -- encoding ------------------------------------------------------------

    def embed_tokens(self, ids: np.ndarray) -> Tensor:
        return self.proj_in(ad.embedding(self.word.tensor, ids))

    def encode_utterances(self, batch: ContextBatch) -> Tensor:
        """Per-utterance summaries (B, m, H) taken at the cls position."""
        b, m, t = batch.ids.shape
        if t < 1:
            raise ValueError("encode_utterances: empty utterances")
        flat_ids = batch.ids.reshape(b * m, t)
        flat_mask = ensure_nonempty_rows(batch.token_mask.reshape(b * m, t))
        x = self.embed_tokens(flat_ids)
        x = self.utt(x, key_mask=flat_mask)
        summaries = x[:, 0, :]
        return ad.reshape(summaries, (b, m, self.hidden_dim))

    def encode_context(self, summaries: Tensor, turn_mask: np.ndarray) -> Tensor:
        """Second-level states (B, m, H) with information flow across turns."""
        return self.ctx(summaries, key_mask=ensure_nonempty_rows(turn_mask))

    # -- decoding ------------------------------------------------------------

    def decode_states(self, prefix_ids: np.ndarray) -> Tensor:
        """Causal decoder states (B, T, H) for a bos-led prefix."""
        if prefix_ids.shape[1] > self.dec.max_positions:
            raise ValueError(
                f"decode_states: prefix length {prefix_ids.shape[1]} exceeds "
                f"maximum {self.dec.max_positions}"
            )
        return self.dec(self.embed_tokens(prefix_ids), causal=True)

    def cross_attend(self, d: Tensor, context_states: Tensor, turn_mask: np.ndarray):
        return relu_attention(
            d,
            context_states,
            turn_mask,
            self.cross_wd.tensor,
            self.cross_wh.tensor,
            normalize=self.normalize_cross_attention,
        )

    def word_logits(self, d: Tensor, c: Tensor) -> Tensor:
        fused = ad.concat([d, c], axis=-1)
        return ad.add(ad.matmul(fused, self.out_w.tensor), self.out_b.tensor)

    def forward_teacher_forced(self, ctx: ContextBatch, tgt: TargetBatch):
        """(d states, context vector, word logits) under teacher forcing."""
        summaries = self.encode_utterances(ctx)
        hc = self.encode_context(summaries, ctx.turn_mask)
        d = self.decode_states(tgt.prefix_ids)
        c, alpha = self.cross_attend(d, hc, ctx.turn_mask)
        return d, c, self.word_logits(d, c), summaries, hc, alpha


def sequence_nll(logits: Tensor, target_ids: np.ndarray, step_mask: np.ndarray) -> Tensor:
    """Per-dialog mean token NLL, then mean over the batch."""
    logp = ad.log_softmax(logits)
    tok = ad.take_last_axis(logp, target_ids)
    m = step_mask.astype(np.float64)
    lengths = np.maximum(m.sum(axis=-1), 1.0)
    per_row = ad.mul(ad.tsum(ad.mul(tok, Tensor(m)), axis=-1), Tensor(1.0 / lengths))
    return ad.mul(ad.tmean(per_row), -1.0)


def generator_pretrain_loss(gen: DialogGenerator, ctx: ContextBatch, tgt: TargetBatch) -> Tensor:
    _, _, logits, _, _, _ = gen.forward_teacher_forced(ctx, tgt)
    return sequence_nll(logits, tgt.target_ids, tgt.step_mask)
