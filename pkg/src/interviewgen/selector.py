"""Knowledge selection over resume fields.

The resume encoder embeds single-token fields through dedicated per-key
value tables and runs multi-token fields through their own self-attention
stack (taking the last real state). A visible matrix restricts field
interactions to same-part neighbours, with within-part strength given by
cosine similarity of the value states; the masked self-attention then
updates value states only from visible fields. A key-value memory read
(bilinear key matching followed by a weighted value sum) serves both the
job-resume matching pre-training task and, later, per-utterance knowledge
memory construction, through one shared code path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .corpus import ResumeBatch, ResumeSchema
from .layers import Linear, ParamRegistry, TransformerStack, ensure_nonempty_rows


@dataclass
class EncodedResume:
    """Key and value states for a batch of same-schema resumes."""

    key_states: Tensor    # (T_r, H), shared across the batch
    value_states: Tensor  # (B, T_r, H)
    part_ids: np.ndarray  # (T_r,)


@dataclass
class VisibleMatrix:
    """Cosine visibility with a same-part boolean mask."""

    cosine: Tensor        # (B, T_r, T_r)
    visible: np.ndarray   # (T_r, T_r) bool


@dataclass
class KnowledgeMemory:
    slots: Tensor          # (B, S, H)
    betas: Tensor          # (B, S, T_r) key-matching rows per slot
    slot_mask: np.ndarray  # (B, S)


@dataclass
class MatchOutcome:
    score: Tensor      # (B,) in (0,1)
    logit: Tensor      # (B,)
    jd_summary: Tensor  # (B, H)
    read: Tensor       # (B, H) weighted value read
    beta: Tensor       # (B, T_r)


class KnowledgeSelector:
    TAG = "selector"

    def __init__(
        self,
        reg: ParamRegistry,
        schema: ResumeSchema,
        embed_dim: int,
        hidden_dim: int,
        layers: int,
        heads: int,
        ffn_dim: int,
        max_value_positions: int = 84,
        max_jd_positions: int = 84,
    ):
        t = self.TAG
        self.schema = schema
        self.hidden_dim = hidden_dim
        self.key_table = reg.table("sel.embed.key", schema.num_fields, embed_dim, t)
        self.value_tables: list[Parameter] = []
        for pos in schema.single_positions:
            key = schema.keys[pos]
            rows = len(schema.value_vocabs[key])
            self.value_tables.append(
                reg.table(f"sel.embed.val.{key}", rows, embed_dim, t)
            )
        self.proj_in = Linear(reg, "sel.proj_in", embed_dim, hidden_dim, t)
        self.key_proj = Linear(reg, "sel.key_proj", embed_dim, hidden_dim, t)
        self.val_stack = TransformerStack(
            reg, "sel.val", hidden_dim, heads, ffn_dim, layers, max_value_positions, t
        )
        self.jd_stack = TransformerStack(
            reg, "sel.jd", hidden_dim, heads, ffn_dim, layers, max_jd_positions, t
        )
        self.vis_wq = reg.matrix("sel.vis.wq", hidden_dim, hidden_dim, t)
        self.vis_wk = reg.matrix("sel.vis.wk", hidden_dim, hidden_dim, t)
        self.wa = reg.matrix("sel.kvmn.wa", hidden_dim, hidden_dim, t)
        self.match_f1 = Linear(reg, "sel.match.f1", 2 * hidden_dim, hidden_dim, t)
        self.match_f2 = Linear(reg, "sel.match.f2", hidden_dim, 1, t)
        # The weighted value read is divided by sqrt(hidden) on the output
        # side, leaving it ~1/sqrt(hidden) of the jd summary's norm; start
        # the read half of the matching head proportionally larger so both
        # inputs contribute comparably from step one.
        self.match_f1.w.data[hidden_dim:, :] *= math.sqrt(hidden_dim)
        # Static interleave order: schema position -> slot in [singles|multis].
        order = np.empty(schema.num_fields, dtype=np.int64)
        for slot, pos in enumerate(schema.single_positions):
            order[pos] = slot
        n_single = len(schema.single_positions)
        for slot, pos in enumerate(schema.multi_positions):
            order[pos] = n_single + slot
        self._interleave = order
        self._same_part = schema.part_ids()[:, None] == schema.part_ids()[None, :]

    # -- resume encoding -------------------------------------------------------

    def encode_resume(self, batch: ResumeBatch, word_table: Parameter) -> EncodedResume:
        """Key states from the key table; value states from per-key tables
        (single-token fields) or the value self-attention stack (multi-token
        fields, last real state)."""
        schema = self.schema
        keys = self.key_proj(
            ad.embedding(self.key_table.tensor, np.arange(schema.num_fields))
        )
        pieces = []
        for si, table in enumerate(self.value_tables):
            emb = ad.embedding(table.tensor, batch.single_ids[:, si])
            pieces.append(ad.reshape(self.proj_in(emb), (emb.shape[0], 1, self.hidden_dim)))
        b, nm, width = batch.multi_ids.shape
        if nm:
            flat_ids = batch.multi_ids.reshape(b * nm, width)
            flat_mask = ensure_nonempty_rows(batch.multi_mask.reshape(b * nm, width))
            x = self.proj_in(ad.embedding(word_table.tensor, flat_ids))
            x = self.val_stack(x, key_mask=flat_mask)
            last = ad.gather_rows(x, batch.multi_lengths.reshape(-1) - 1)
            pieces.append(ad.reshape(last, (b, nm, self.hidden_dim)))
        stacked = ad.concat(pieces, axis=1)
        values = ad.take_axis1(stacked, self._interleave)
        return EncodedResume(keys, values, schema.part_ids())

    def build_visible_matrix(self, enc: EncodedResume) -> VisibleMatrix:
        return VisibleMatrix(ad.cosine_matrix(enc.value_states), self._same_part)

    def masked_resume_attention(self, enc: EncodedResume, vis: VisibleMatrix):
        """Update value states from same-part fields only.

        Logits are the key bilinear scores scaled multiplicatively by the
        cosine visibility; cross-part pairs are excluded from the softmax
        support entirely, and the weighted value sum is divided by sqrt(H).
        """
        qk = ad.matmul(enc.key_states, self.vis_wq.tensor)
        kk = ad.matmul(enc.key_states, self.vis_wk.tensor)
        base = ad.matmul(qk, ad.swapaxes(kk, -1, -2))
        logits = ad.mul(base, vis.cosine)
        alpha = ad.softmax(logits, mask=vis.visible)
        updated = ad.mul(
            ad.matmul(alpha, enc.value_states), 1.0 / math.sqrt(self.hidden_dim)
        )
        return updated, alpha

    # -- key-value memory reads --------------------------------------------------

    def key_value_read(self, queries: Tensor, enc: EncodedResume, updated_values: Tensor):
        """Bilinear key matching then weighted value read.

        queries: (B, S, H). Returns beta (B, S, T_r) and reads (B, S, H).
        The same path serves jd summaries during pre-training and utterance
        summaries afterwards.
        """
        scores = ad.matmul(ad.matmul(queries, self.wa.tensor), ad.swapaxes(enc.key_states, -1, -2))
        beta = ad.softmax(scores)
        return beta, ad.matmul(beta, updated_values)

    def build_knowledge_memory(
        self,
        summaries: Tensor,
        turn_mask: np.ndarray,
        enc: EncodedResume,
        updated_values: Tensor,
    ) -> KnowledgeMemory:
        beta, reads = self.key_value_read(summaries, enc, updated_values)
        return KnowledgeMemory(slots=reads, betas=beta, slot_mask=np.asarray(turn_mask, dtype=bool))

    # -- job-resume matching -------------------------------------------------------

    def encode_jd(self, ids: np.ndarray, mask: np.ndarray, word_table: Parameter) -> Tensor:
        """Job summary: final real state of the jd self-attention stack."""
        x = self.proj_in(ad.embedding(word_table.tensor, ids))
        x = self.jd_stack(x, key_mask=ensure_nonempty_rows(mask))
        lengths = np.maximum(mask.sum(axis=-1), 1)
        return ad.gather_rows(x, lengths - 1)

    def job_resume_match(
        self,
        jd_ids: np.ndarray,
        jd_mask: np.ndarray,
        enc: EncodedResume,
        updated_values: Tensor,
        word_table: Parameter,
    ) -> MatchOutcome:
        h_jd = self.encode_jd(jd_ids, jd_mask, word_table)
        queries = ad.reshape(h_jd, (h_jd.shape[0], 1, self.hidden_dim))
        beta, reads = self.key_value_read(queries, enc, updated_values)
        m_jd = ad.reshape(reads, (h_jd.shape[0], self.hidden_dim))
        hidden = ad.relu(self.match_f1(ad.concat([h_jd, m_jd], axis=-1)))
        logit = ad.reshape(self.match_f2(hidden), (h_jd.shape[0],))
        return MatchOutcome(
            score=ad.sigmoid(logit),
            logit=logit,
            jd_summary=h_jd,
            read=m_jd,
            beta=ad.reshape(beta, (h_jd.shape[0], self.schema.num_fields)),
        )


def matching_pretrain_loss(outcome: MatchOutcome, labels: np.ndarray) -> Tensor:
    """Binary cross-entropy on the match probability (1 = match)."""
    y = np.asarray(labels, dtype=np.float64)
    s = outcome.score
    pos = ad.mul(ad.log(ad.maximum_scalar(s, 1e-12)), Tensor(y))
    neg = ad.mul(ad.log(ad.maximum_scalar(ad.sub(1.0, s), 1e-12)), Tensor(1.0 - y))
    return ad.mul(ad.tmean(ad.add(pos, neg)), -1.0)
