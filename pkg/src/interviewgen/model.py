"""Full interview model: generator + selector + manager, plus decoding and
bit-exact checkpoint serialization.

A checkpoint is a single self-describing file: a json header (config,
vocabulary, resume schema, parameter manifest with shapes/offsets/hashes,
stage provenance, validation score) followed by the concatenated raw
little-endian float64 parameter arrays.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import (
    BOS,
    EOS,
    ContextBatch,
    DialogTurn,
    Resume,
    ResumeBatch,
    ResumeSchema,
    TargetBatch,
    Vocabulary,
    encode_contexts,
    encode_resumes,
    encode_targets,
    truncate_dialog,
)
from .generator import DialogGenerator, generator_pretrain_loss, sequence_nll
from .layers import ParamRegistry
from .manager import DecodeConfig, DecodingManager, smoothed_cross_entropy
from .selector import KnowledgeMemory, KnowledgeSelector, matching_pretrain_loss

CHECKPOINT_MAGIC = b"IVGCKPT1\n"


@dataclass
class ModelConfig:
    preset: str = "desk"
    vocab_cap: int = 2000
    embed_dim: int = 64
    hidden_dim: int = 128
    layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    max_utterance_positions: int = 24
    max_turn_positions: int = 36
    max_decode_positions: int = 24
    max_value_positions: int = 84
    max_jd_positions: int = 84
    normalize_cross_attention: bool = False

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def paper(cls, **overrides) -> "ModelConfig":
        base = dict(
            preset="paper",
            vocab_cap=50000,
            embed_dim=128,
            hidden_dim=256,
            layers=2,
            heads=4,
            ffn_dim=512,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "ModelConfig":
        if name == "desk":
            return cls.desk(**overrides)
        if name == "paper":
            return cls.paper(**overrides)
        raise ValueError(f"unknown preset {name!r}")


@dataclass
class AblationFlags:
    no_pretrain: bool = False
    no_km: bool = False
    no_ks: bool = False
    no_ls: bool = False

    @classmethod
    def parse(cls, names) -> "AblationFlags":
        flags = cls()
        for n in names:
            key = n.strip().lower()
            if not hasattr(flags, key):
                raise ValueError(f"unknown ablation flag {n!r}")
            setattr(flags, key, True)
        return flags


def np_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class GenerationResult:
    tokens: list[str]
    token_ids: list[int]
    score: float
    trace: dict


class InterviewModel:
    def __init__(
        self,
        config: ModelConfig,
        vocab: Vocabulary,
        schema: ResumeSchema,
        seed: int = 0,
    ):
        self.config = config
        self.vocab = vocab
        self.schema = schema
        self.init_seed = seed
        self.registry = ParamRegistry(np.random.default_rng(seed))
        self.generator = DialogGenerator(
            self.registry,
            vocab_size=len(vocab),
            embed_dim=config.embed_dim,
            hidden_dim=config.hidden_dim,
            layers=config.layers,
            heads=config.heads,
            ffn_dim=config.ffn_dim,
            max_utterance_positions=config.max_utterance_positions,
            max_turn_positions=config.max_turn_positions,
            max_decode_positions=config.max_decode_positions,
            normalize_cross_attention=config.normalize_cross_attention,
        )
        self.selector = KnowledgeSelector(
            self.registry,
            schema,
            embed_dim=config.embed_dim,
            hidden_dim=config.hidden_dim,
            layers=config.layers,
            heads=config.heads,
            ffn_dim=config.ffn_dim,
            max_value_positions=config.max_value_positions,
            max_jd_positions=config.max_jd_positions,
        )
        self.manager = DecodingManager(
            self.registry,
            vocab_size=len(vocab),
            hidden_dim=config.hidden_dim,
            normalize_slot_attention=config.normalize_cross_attention,
        )

    @property
    def params(self):
        return self.registry.params

    def set_trainable(self, tags: set[str]) -> None:
        self.registry.set_trainable(tags)

    def param_bytes(self, tag: str | None = None) -> bytes:
        chunks = []
        for name in sorted(self.params):
            p = self.params[name]
            if tag is None or p.component_tag == tag:
                chunks.append(p.data.tobytes())
        return b"".join(chunks)

    # -- shared forward pieces -------------------------------------------------

    def encode_context_states(self, ctx: ContextBatch):
        summaries = self.generator.encode_utterances(ctx)
        hc = self.generator.encode_context(summaries, ctx.turn_mask)
        return summaries, hc

    def encode_resume_states(self, rbatch: ResumeBatch):
        enc = self.selector.encode_resume(rbatch, self.generator.word)
        vis = self.selector.build_visible_matrix(enc)
        updated, alpha = self.selector.masked_resume_attention(enc, vis)
        return enc, updated, alpha

    def knowledge_memory(
        self,
        summaries: Tensor,
        turn_mask: np.ndarray,
        turn_counts: np.ndarray,
        enc,
        updated: Tensor,
        flags: AblationFlags,
    ) -> KnowledgeMemory:
        if flags.no_km:
            # Select knowledge from the last utterance representation only.
            last = ad.gather_rows(summaries, turn_counts - 1)
            queries = ad.reshape(last, (last.shape[0], 1, self.config.hidden_dim))
            beta, reads = self.selector.key_value_read(queries, enc, updated)
            mask = np.ones((summaries.shape[0], 1), dtype=bool)
            return KnowledgeMemory(slots=reads, betas=beta, slot_mask=mask)
        if flags.no_ks:
            # Uniform reads: every slot stores the unweighted value mix.
            b, m, _ = summaries.shape
            t_r = self.schema.num_fields
            uniform = Tensor(np.full((b, m, t_r), 1.0 / t_r))
            reads = ad.matmul(uniform, updated)
            return KnowledgeMemory(slots=reads, betas=uniform, slot_mask=turn_mask)
        return self.selector.build_knowledge_memory(summaries, turn_mask, enc, updated)

    def finetune_forward(
        self,
        ctx: ContextBatch,
        rbatch: ResumeBatch,
        tgt: TargetBatch,
        flags: AblationFlags,
    ):
        summaries, hc = self.encode_context_states(ctx)
        d = self.generator.decode_states(tgt.prefix_ids)
        c, _ = self.generator.cross_attend(d, hc, ctx.turn_mask)
        logits_w = self.generator.word_logits(d, c)
        enc, updated, _ = self.encode_resume_states(rbatch)
        memory = self.knowledge_memory(summaries, ctx.turn_mask, ctx.turn_counts, enc, updated, flags)
        step = self.manager.step_states(d, c, memory.slots, memory.slot_mask)
        return step, logits_w, memory

    def finetune_loss(
        self,
        ctx: ContextBatch,
        rbatch: ResumeBatch,
        tgt: TargetBatch,
        flags: AblationFlags,
        adaption_factor: float,
    ):
        step, logits_w, memory = self.finetune_forward(ctx, rbatch, tgt, flags)
        lam = 1.0 if flags.no_ls else adaption_factor
        probs_w = np_softmax(logits_w.data)
        loss = smoothed_cross_entropy(
            step["logits"], tgt.target_ids, tgt.step_mask, probs_w, lam
        )
        return loss, step, memory

    def manager_nll(self, ctx, rbatch, tgt, flags) -> Tensor:
        """Plain one-hot token NLL of the fused distribution (reporting)."""
        step, _, _ = self.finetune_forward(ctx, rbatch, tgt, flags)
        return sequence_nll(step["logits"], tgt.target_ids, tgt.step_mask)

    def pretrain_generator_loss(self, ctx: ContextBatch, tgt: TargetBatch) -> Tensor:
        return generator_pretrain_loss(self.generator, ctx, tgt)

    def matching_outcome(self, jd_ids, jd_mask, rbatch):
        enc, updated, _ = self.encode_resume_states(rbatch)
        return self.selector.job_resume_match(
            jd_ids, jd_mask, enc, updated, self.generator.word
        )

    def matching_loss(self, jd_ids, jd_mask, rbatch, labels) -> Tensor:
        return matching_pretrain_loss(self.matching_outcome(jd_ids, jd_mask, rbatch), labels)

    # -- generation --------------------------------------------------------------

    def prepare_generation_state(
        self, contexts: list[list[DialogTurn]], resumes: list[Resume], flags: AblationFlags
    ):
        contexts = [truncate_dialog(t) for t in contexts]
        ctx = encode_contexts(contexts, self.vocab)
        rbatch = encode_resumes(resumes, self.schema, self.vocab)
        summaries, hc = self.encode_context_states(ctx)
        enc, updated, _ = self.encode_resume_states(rbatch)
        memory = self.knowledge_memory(summaries, ctx.turn_mask, ctx.turn_counts, enc, updated, flags)
        return ctx, hc, memory

    # Structural ids never appear in training targets; masking them keeps
    # cold-start decodes from emitting padding or markers.
    _DECODE_BANNED = (0, 2, 4, 5)  # pad, bos, cls, sep

    def _step_distribution(self, prefix: np.ndarray, hc, turn_mask, memory):
        d = self.generator.decode_states(prefix)
        d_last = d[:, -1:, :]
        c_last, _ = self.generator.cross_attend(d_last, hc, turn_mask)
        step = self.manager.step_states(d_last, c_last, memory.slots, memory.slot_mask)
        logits = step["logits"].data[:, 0, :]
        logits[:, list(self._DECODE_BANNED)] = -np.inf
        gate = step["gate"].data[:, 0, 0]
        slot_w = step["slot_weights"].data[:, 0, :]
        return logits, gate, slot_w

    def generate_greedy(
        self,
        contexts: list[list[DialogTurn]],
        resumes: list[Resume],
        decode: DecodeConfig,
        flags: AblationFlags = AblationFlags(),
        top_k: int = 5,
    ) -> list[GenerationResult]:
        with ad.no_grad():
            ctx, hc, memory = self.prepare_generation_state(contexts, resumes, flags)
            b = len(contexts)
            prefix = np.full((b, 1), BOS, dtype=np.int64)
            done = np.zeros(b, dtype=bool)
            out_ids: list[list[int]] = [[] for _ in range(b)]
            steps_trace: list[list[dict]] = [[] for _ in range(b)]
            scores = np.zeros(b)
            for t in range(decode.max_steps + 1):
                logits, gate, slot_w = self._step_distribution(
                    prefix, hc, ctx.turn_mask, memory
                )
                if t < decode.min_steps:
                    logits[:, EOS] = -np.inf
                probs = np_softmax(logits)
                if t >= decode.max_steps:
                    nxt = np.full(b, EOS, dtype=np.int64)
                else:
                    nxt = logits.argmax(axis=-1)
                nxt = np.where(done, 0, nxt)
                for i in range(b):
                    if done[i]:
                        continue
                    if nxt[i] == EOS:
                        done[i] = True
                        continue
                    out_ids[i].append(int(nxt[i]))
                    scores[i] += float(np.log(max(probs[i, nxt[i]], 1e-300)))
                    order = np.argsort(-probs[i])[:top_k]
                    steps_trace[i].append(
                        {
                            "gate": float(gate[i]),
                            "slot_weights": [float(x) for x in slot_w[i]],
                            "top_tokens": [
                                {"token": self.vocab.id_to_token[int(j)],
                                 "prob": float(probs[i, j])}
                                for j in order
                            ],
                        }
                    )
                if done.all():
                    break
                prefix = np.concatenate([prefix, nxt[:, None]], axis=1)
            results = []
            betas = memory.betas.data
            for i in range(b):
                trace = self._assemble_trace(steps_trace[i], betas[i], memory.slot_mask[i])
                results.append(
                    GenerationResult(
                        tokens=self.vocab.decode(out_ids[i]),
                        token_ids=out_ids[i],
                        score=float(scores[i]),
                        trace=trace,
                    )
                )
            return results

    def _assemble_trace(self, steps: list[dict], betas: np.ndarray, slot_mask: np.ndarray) -> dict:
        slots = []
        for s in range(betas.shape[0]):
            if not slot_mask[s]:
                continue
            slots.append(
                {
                    "slot": s,
                    "beta": [float(x) for x in betas[s]],
                }
            )
        return {
            "steps": steps,
            "memory": {
                "slots": slots,
                "field_keys": list(self.schema.keys),
                "field_parts": list(self.schema.parts),
            },
        }

    def generate_beam(
        self,
        context: list[DialogTurn],
        resume: Resume,
        decode: DecodeConfig,
        flags: AblationFlags = AblationFlags(),
    ) -> GenerationResult:
        """Beam search with length-normalised log probability, single dialog."""
        w = decode.beam_width
        with ad.no_grad():
            ctx, hc, memory = self.prepare_generation_state([context], [resume], flags)
            hc_w = Tensor(np.repeat(hc.data, w, axis=0))
            mem_w = KnowledgeMemory(
                slots=Tensor(np.repeat(memory.slots.data, w, axis=0)),
                betas=Tensor(np.repeat(memory.betas.data, w, axis=0)),
                slot_mask=np.repeat(memory.slot_mask, w, axis=0),
            )
            turn_mask_w = np.repeat(ctx.turn_mask, w, axis=0)
            beams = [([], 0.0)]
            finished: list[tuple[list[int], float]] = []
            for t in range(decode.max_steps + 1):
                rows = np.full((w, t + 1), BOS, dtype=np.int64)
                for i, (ids, _) in enumerate(beams):
                    rows[i, 1 : len(ids) + 1] = ids
                logits, _, _ = self._step_distribution(rows, hc_w, turn_mask_w, mem_w)
                if t < decode.min_steps:
                    logits[:, EOS] = -np.inf
                logp = np.log(np_softmax(logits) + 1e-300)
                candidates = []
                for i, (ids, score) in enumerate(beams):
                    if t >= decode.max_steps:
                        finished.append((ids, score))
                        continue
                    order = np.argsort(-logp[i])[: max(2, w)]
                    for j in order:
                        candidates.append((ids + [int(j)], score + float(logp[i, j])))
                nxt = []
                for ids, score in sorted(
                    candidates, key=lambda c: c[1] / len(c[0]), reverse=True
                ):
                    if ids[-1] == EOS:
                        finished.append((ids[:-1], score))
                    else:
                        nxt.append((ids, score))
                    if len(nxt) >= w:
                        break
                beams = nxt
                if not beams:
                    break
            if not finished:
                finished = [(ids, score) for ids, score in beams]
            ids, score = max(finished, key=lambda c: c[1] / max(len(c[0]), 1))
        greedy_like = self._trace_for_sequence(ctx, hc, memory, ids)
        return GenerationResult(
            tokens=self.vocab.decode(ids),
            token_ids=ids,
            score=float(score),
            trace=greedy_like,
        )

    def _trace_for_sequence(self, ctx, hc, memory, ids: list[int]) -> dict:
        """Teacher-forced pass over a decoded sequence to recover its trace."""
        with ad.no_grad():
            steps = []
            for t in range(len(ids)):
                prefix = np.array([[BOS] + ids[:t]], dtype=np.int64)
                logits, gate, slot_w = self._step_distribution(
                    prefix, hc, ctx.turn_mask, memory
                )
                probs = np_softmax(logits)
                order = np.argsort(-probs[0])[:5]
                steps.append(
                    {
                        "gate": float(gate[0]),
                        "slot_weights": [float(x) for x in slot_w[0]],
                        "top_tokens": [
                            {"token": self.vocab.id_to_token[int(j)],
                             "prob": float(probs[0, j])}
                            for j in order
                        ],
                    }
                )
            return self._assemble_trace(steps, memory.betas.data[0], memory.slot_mask[0])

    def generate(
        self,
        context: list[DialogTurn],
        resume: Resume,
        decode: DecodeConfig,
        flags: AblationFlags = AblationFlags(),
    ) -> GenerationResult:
        if decode.strategy == "beam":
            return self.generate_beam(context, resume, decode, flags)
        return self.generate_greedy([context], [resume], decode, flags)[0]


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(
    model: InterviewModel,
    path: Path,
    stage: str,
    validation_score: float | None = None,
    extra: dict | None = None,
) -> str:
    """Write the checkpoint file; returns its content hash."""
    names = sorted(model.params)
    blob_parts = []
    manifest = []
    offset = 0
    for name in names:
        p = model.params[name]
        raw = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        manifest.append(
            {
                "name": name,
                "shape": list(p.data.shape),
                "dtype": "<f8",
                "offset": offset,
                "nbytes": len(raw),
                "sha256": hashlib.sha256(raw).hexdigest(),
                "component": p.component_tag,
            }
        )
        blob_parts.append(raw)
        offset += len(raw)
    blob = b"".join(blob_parts)
    content_hash = hashlib.sha256(
        json.dumps(manifest, sort_keys=True).encode() + blob
    ).hexdigest()
    header = {
        "format": "interviewgen-checkpoint",
        "version": 1,
        "stage": stage,
        "validation_score": validation_score,
        "model_config": asdict(model.config),
        "vocab": model.vocab.to_json(),
        "schema": model.schema.to_json(),
        "init_seed": model.init_seed,
        "params": manifest,
        "checkpoint_hash": content_hash,
        "extra": extra or {},
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(payload).to_bytes(8, "little"))
        fh.write(payload)
        fh.write(blob)
    return content_hash


def read_checkpoint_header(path: Path) -> dict:
    with Path(path).open("rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        n = int.from_bytes(fh.read(8), "little")
        return json.loads(fh.read(n).decode("utf-8"))


def load_checkpoint(path: Path) -> tuple[InterviewModel, dict]:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        n = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(n).decode("utf-8"))
        blob = fh.read()
    config = ModelConfig(**header["model_config"])
    vocab = Vocabulary.from_json(header["vocab"])
    schema = ResumeSchema.from_json(header["schema"])
    model = InterviewModel(config, vocab, schema, seed=header.get("init_seed", 0))
    for entry in header["params"]:
        name = entry["name"]
        if name not in model.params:
            raise ValueError(f"checkpoint parameter {name!r} unknown to this config")
        p = model.params[name]
        want = tuple(entry["shape"])
        if tuple(p.data.shape) != want:
            raise ValueError(
                f"checkpoint parameter {name!r} has shape {want}, "
                f"config builds {tuple(p.data.shape)}"
            )
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f8").reshape(want)
        p.data[...] = arr
    return model, header


def load_params_from(model: InterviewModel, source: InterviewModel, tags: set[str]) -> None:
    """Copy parameters for the given component tags between same-config models."""
    for name, p in source.params.items():
        if p.component_tag in tags:
            if name not in model.params:
                raise ValueError(f"parameter {name!r} missing in target model")
            tgt = model.params[name]
            if tgt.data.shape != p.data.shape:
                raise ValueError(
                    f"parameter {name!r} shape mismatch: "
                    f"{p.data.shape} vs {tgt.data.shape}"
                )
            tgt.data[...] = p.data
