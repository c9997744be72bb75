"""Decoding manager: fuses the knowledge-insensitive decoder with the
knowledge memory at every step and trains against a smoothed target.

A sigmoid fusion gate computed from the decoder state mixes the word-side
state (a learned map of [d_t ; c_t]) with the knowledge-side state (a
learned map of [d_t ; g_t], where g_t is a rectified attention read over
the memory slots). The training target blends the one-hot label with the
pretrained generator's word distribution through the adaption factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .generator import relu_attention
from .layers import Linear, ParamRegistry


@dataclass
class DecodeConfig:
    strategy: str = "greedy"        # greedy | beam
    beam_width: int = 4
    min_steps: int = 10
    max_steps: int = 20
    adaption_factor: float = 0.8    # one-hot weight in the smoothed target

    def __post_init__(self):
        if self.strategy not in ("greedy", "beam"):
            raise ValueError(f"unknown decode strategy {self.strategy!r}")
        if self.beam_width < 1:
            raise ValueError("beam width must be >= 1")
        if not (1 <= self.min_steps <= self.max_steps):
            raise ValueError("need 1 <= min_steps <= max_steps")
        if not 0.0 <= self.adaption_factor <= 1.0:
            raise ValueError("adaption factor must lie in [0, 1]")

    @classmethod
    def paper_preset(cls, **overrides) -> "DecodeConfig":
        cfg = cls(**overrides)
        if not (10 <= cfg.min_steps <= cfg.max_steps <= 20):
            raise ValueError("paper preset requires 10 <= min <= max <= 20")
        return cfg


class DecodingManager:
    TAG = "manager"

    def __init__(
        self,
        reg: ParamRegistry,
        vocab_size: int,
        hidden_dim: int,
        normalize_slot_attention: bool = False,
    ):
        t = self.TAG
        self.hidden_dim = hidden_dim
        self.vocab_size = vocab_size
        self.normalize_slot_attention = normalize_slot_attention
        self.wo_proj = Linear(reg, "mgr.wo_proj", 2 * hidden_dim, hidden_dim, t)
        self.ko_proj = Linear(reg, "mgr.ko_proj", 2 * hidden_dim, hidden_dim, t)
        # Same small-start treatment as the generator's rectified attention.
        self.kattn_wd = reg.matrix("mgr.kattn.wd", hidden_dim, hidden_dim, t, scale=0.1)
        self.kattn_wh = reg.matrix("mgr.kattn.wh", hidden_dim, hidden_dim, t, scale=0.1)
        self.gate = Linear(reg, "mgr.gate", hidden_dim, 1, t)
        # Start knowledge-leaning (gate ~ 0.27): if the word side dominates
        # from step one, the knowledge branch never receives gradient and
        # the selector path cannot engage at all.
        self.gate.b.data[...] = -1.0
        self.out_w = reg.matrix("mgr.out.w", hidden_dim, vocab_size, t)
        self.out_b = reg.zeros("mgr.out.b", (vocab_size,), t)

    def attend_knowledge_memory(self, d: Tensor, slots: Tensor, slot_mask: np.ndarray):
        """Rectified attention of decoder states over memory slots.

        Returns the knowledge context (B, T, H) and slot weights (B, T, S).
        Rejects an empty memory: grounded decoding needs at least one slot.
        """
        if slots.shape[-2] < 1:
            raise ValueError("attend_knowledge_memory: empty knowledge memory")
        return relu_attention(
            d,
            slots,
            slot_mask,
            self.kattn_wd.tensor,
            self.kattn_wh.tensor,
            normalize=self.normalize_slot_attention,
        )

    def fuse_and_project(self, d: Tensor, d_wo: Tensor, d_ko: Tensor):
        """Convex mix of the two branch states under the fusion gate, then
        the vocabulary projection. Returns (gate, mixed state, logits)."""
        gamma = ad.sigmoid(self.gate(d))
        mixed = ad.add(ad.mul(gamma, d_wo), ad.mul(ad.sub(1.0, gamma), d_ko))
        logits = ad.add(ad.matmul(mixed, self.out_w.tensor), self.out_b.tensor)
        return gamma, mixed, logits

    def step_states(self, d: Tensor, c: Tensor, memory_slots: Tensor, slot_mask: np.ndarray):
        """All per-step manager quantities from decoder/context/memory."""
        g, slot_weights = self.attend_knowledge_memory(d, memory_slots, slot_mask)
        d_wo = self.wo_proj(ad.concat([d, c], axis=-1))
        d_ko = self.ko_proj(ad.concat([d, g], axis=-1))
        gamma, mixed, logits = self.fuse_and_project(d, d_wo, d_ko)
        return {
            "knowledge_context": g,
            "slot_weights": slot_weights,
            "d_wo": d_wo,
            "d_ko": d_ko,
            "gate": gamma,
            "mixed": mixed,
            "logits": logits,
        }


def smooth_target(one_hot: np.ndarray, generator_probs: np.ndarray, adaption_factor: float) -> np.ndarray:
    """Blend the hard target with the pretrained generator's distribution."""
    if not 0.0 <= adaption_factor <= 1.0:
        raise ValueError(f"adaption factor {adaption_factor} outside [0, 1]")
    lam = float(adaption_factor)
    return lam * one_hot + (1.0 - lam) * generator_probs


def one_hot_targets(target_ids: np.ndarray, vocab_size: int) -> np.ndarray:
    out = np.zeros(target_ids.shape + (vocab_size,), dtype=np.float64)
    np.put_along_axis(out, target_ids[..., None], 1.0, axis=-1)
    return out


def smoothed_cross_entropy(
    logits: Tensor,
    target_ids: np.ndarray,
    step_mask: np.ndarray,
    generator_probs: np.ndarray,
    adaption_factor: float,
) -> Tensor:
    """Cross-entropy of the manager distribution against the smoothed target,
    averaged per dialog over real steps, then over the batch.

    ``generator_probs`` is a constant: the soft side of the target never
    backpropagates into the generator.
    """
    smoothed = smooth_target(
        one_hot_targets(target_ids, logits.shape[-1]), generator_probs, adaption_factor
    )
    logp = ad.log_softmax(logits)
    per_step = ad.tsum(ad.mul(logp, Tensor(smoothed)), axis=-1)
    m = step_mask.astype(np.float64)
    lengths = np.maximum(m.sum(axis=-1), 1.0)
    per_row = ad.mul(ad.tsum(ad.mul(per_step, Tensor(m)), axis=-1), Tensor(1.0 / lengths))
    return ad.mul(ad.tmean(per_row), -1.0)
