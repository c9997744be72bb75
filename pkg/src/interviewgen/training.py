"""Training pipeline: the three stages, checkpoint management, evaluation
with top-5 checkpoint averaging, ablation wiring, and the data-scale
experiment grid.

Stage order matters: the generator is pre-trained first because the word
embedding table is generator-owned and shared; the selector is pre-trained
second on top of those (then frozen) embeddings; the manager is fine-tuned
last. When fine-tuning trains only manager-tagged parameters, the frozen
decoder/context/memory features are precomputed once per dialog and every
step runs on the cached features, which is numerically the same computation
at a fraction of the cost.
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step
from .corpus import (
    ResumeSchema,
    Vocabulary,
    build_vocabulary,
    corpus_token_streams,
    encode_contexts,
    encode_resumes,
    encode_targets,
    encode_token_batch,
    truncate_dialog,
)
from .manager import DecodeConfig, smoothed_cross_entropy
from .metrics import MetricReport, compute_report
from .model import (
    AblationFlags,
    InterviewModel,
    ModelConfig,
    load_checkpoint,
    load_params_from,
    np_softmax,
    read_checkpoint_header,
    save_checkpoint,
)
from .synthetic import CorpusBundle, load_bundle

STAGES = ("pretrain_generator", "pretrain_selector", "finetune_manager")
PRESET_BATCH = {"desk": 32, "paper": 256}
DEFAULT_PRETRAIN_LR = 1e-3
DEFAULT_FINETUNE_LR = 1e-3


@dataclass
class StageConfig:
    stage: str
    data_dir: str
    out_dir: str
    seed: int = 0
    preset: str = "desk"
    batch_size: int | None = None
    learning_rate: float | None = None
    max_steps: int = 2000
    eval_interval: int = 200
    patience: int = 5
    clip_norm: float = 5.0
    adaption_factor: float = 0.8
    unfreeze: str = "none"          # none | selector | generator | all
    shuffle_labels: bool = False    # selector control experiments
    keep_top: int = 5
    val_batch_cap: int = 10

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.preset not in PRESET_BATCH:
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.unfreeze not in ("none", "selector", "generator", "all"):
            raise ValueError(f"unknown unfreeze mode {self.unfreeze!r}")

    @property
    def batch(self) -> int:
        return self.batch_size or PRESET_BATCH[self.preset]

    @property
    def lr(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return DEFAULT_FINETUNE_LR if self.stage == "finetune_manager" else DEFAULT_PRETRAIN_LR


@dataclass
class CheckpointInfo:
    path: str
    step: int
    val_score: float


@dataclass
class TrainResult:
    checkpoints: list[CheckpointInfo]
    history: list[dict]
    best: CheckpointInfo
    model: InterviewModel
    extras: dict = field(default_factory=dict)


class TrainingData:
    """Bundle plus the derived vocabulary, schema and lookup maps."""

    def __init__(self, bundle: CorpusBundle, vocab_cap: int):
        self.bundle = bundle
        self.vocab = build_vocabulary(
            corpus_token_streams(
                bundle.resumes, bundle.jds, bundle.grounded, bundle.ungrounded
            ),
            vocab_cap,
        )
        self.schema = ResumeSchema.from_resumes(bundle.resumes)
        self.resume_map = bundle.resume_by_id()
        self.jd_map = bundle.jd_by_id()
        self.entities = bundle.entity_vocab.all_entities()
        from .synthetic import FUNCTION_WORDS

        self.stopwords = set(FUNCTION_WORDS)

    @classmethod
    def load(cls, data_dir, vocab_cap: int) -> "TrainingData":
        return cls(load_bundle(Path(data_dir)), vocab_cap)

    # -- batch builders -----------------------------------------------------

    def ungrounded_batch(self, dialogs):
        ctx = encode_contexts([truncate_dialog(d.context) for d in dialogs], self.vocab)
        tgt = encode_targets([d.target for d in dialogs], self.vocab)
        return ctx, tgt

    def matching_batch(self, pairs, labels=None):
        rbatch = encode_resumes(
            [self.resume_map[p.resume_id] for p in pairs], self.schema, self.vocab
        )
        jd_ids, jd_mask = encode_token_batch(
            [self.jd_map[p.jd_id].tokens for p in pairs], self.vocab
        )
        if labels is None:
            labels = np.array([1.0 if p.label == "match" else 0.0 for p in pairs])
        return jd_ids, jd_mask, rbatch, labels

    def grounded_batch(self, dialogs):
        ctx = encode_contexts([truncate_dialog(d.context) for d in dialogs], self.vocab)
        rbatch = encode_resumes(
            [self.resume_map[d.resume_id] for d in dialogs], self.schema, self.vocab
        )
        tgt = encode_targets([d.target for d in dialogs], self.vocab)
        return ctx, rbatch, tgt


def _batches(n: int, batch: int, steps: int, rng: np.random.Generator):
    """Yield index arrays for `steps` batches, reshuffling every epoch."""
    produced = 0
    while produced < steps:
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            if len(idx) == 0:
                continue
            yield idx
            produced += 1
            if produced >= steps:
                return


def _model_config(cfg: StageConfig) -> ModelConfig:
    return ModelConfig.from_preset(cfg.preset)


def _emit(progress, payload: dict) -> None:
    if progress is not None:
        progress(payload)


def _check_vocab_matches(model: InterviewModel, data: TrainingData) -> None:
    """A checkpoint trained against a different corpus has different token
    ids; mixing them silently scrambles every embedding lookup."""
    if model.vocab.id_to_token != data.vocab.id_to_token:
        raise ValueError(
            "checkpoint vocabulary does not match the data directory's; "
            "the checkpoint was trained on different corpora"
        )


def _train_tags(cfg: StageConfig) -> set[str]:
    tags = {"manager"}
    if cfg.unfreeze in ("selector", "all"):
        tags.add("selector")
    if cfg.unfreeze in ("generator", "all"):
        tags.add("generator")
    return tags


# -- stage: generator pre-training ------------------------------------------------


def pretrain_generator(
    cfg: StageConfig, data: TrainingData, progress=None
) -> TrainResult:
    if cfg.stage != "pretrain_generator":
        raise ValueError("config stage mismatch")
    train = data.bundle.ungrounded_split("train")
    valid = data.bundle.ungrounded_split("valid")
    if not train:
        raise ValueError("pretrain_generator: missing ungrounded training corpus")
    model = InterviewModel(_model_config(cfg), data.vocab, data.schema, seed=cfg.seed)
    model.set_trainable({"generator"})
    state = AdamState(learning_rate=cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    def val_loss() -> float:
        with ad.no_grad():
            losses = []
            for start in range(0, min(len(valid), cfg.val_batch_cap * cfg.batch), cfg.batch):
                ctx, tgt = data.ungrounded_batch(valid[start : start + cfg.batch])
                losses.append(model.pretrain_generator_loss(ctx, tgt).item())
            return float(np.mean(losses))

    return _loop(
        cfg,
        model,
        state,
        rng,
        n_train=len(train),
        make_loss=lambda idx: model.pretrain_generator_loss(
            *data.ungrounded_batch([train[i] for i in idx])
        ),
        validate=val_loss,
        train_tags={"generator"},
        progress=progress,
        name="pretrain_generator",
    )


# -- stage: selector pre-training ----------------------------------------------------


def pretrain_selector(
    cfg: StageConfig,
    data: TrainingData,
    generator_checkpoint: str | None = None,
    progress=None,
) -> TrainResult:
    if cfg.stage != "pretrain_selector":
        raise ValueError("config stage mismatch")
    train = data.bundle.matching_split("train")
    valid = data.bundle.matching_split("valid")
    if not train:
        raise ValueError("pretrain_selector: missing matching corpus")
    pos = sum(1 for p in train if p.label == "match")
    if abs(pos - len(train) / 2) > 0.1 * len(train):
        import warnings

        warnings.warn(
            f"matching corpus unbalanced: {pos}/{len(train)} positives", stacklevel=2
        )
    if generator_checkpoint:
        model, _ = load_checkpoint(generator_checkpoint)
        _check_vocab_matches(model, data)
    else:
        model = InterviewModel(_model_config(cfg), data.vocab, data.schema, seed=cfg.seed)
    model.set_trainable({"selector"})
    state = AdamState(learning_rate=cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    train_labels = np.array([1.0 if p.label == "match" else 0.0 for p in train])
    valid_labels = np.array([1.0 if p.label == "match" else 0.0 for p in valid])
    if cfg.shuffle_labels:
        shuffler = np.random.default_rng(cfg.seed + 991)
        train_labels = shuffler.permutation(train_labels)
        valid_labels = shuffler.permutation(valid_labels)

    def val_accuracy() -> float:
        with ad.no_grad():
            correct = 0
            total = 0
            cap = min(len(valid), cfg.val_batch_cap * cfg.batch)
            for start in range(0, cap, cfg.batch):
                pairs = valid[start : start + cfg.batch]
                labels = valid_labels[start : start + cfg.batch]
                jd_ids, jd_mask, rbatch, _ = data.matching_batch(pairs)
                out = model.matching_outcome(jd_ids, jd_mask, rbatch)
                pred = (out.score.data >= 0.5).astype(np.float64)
                correct += int((pred == labels).sum())
                total += len(pairs)
            return correct / max(total, 1)

    def make_loss(idx):
        pairs = [train[i] for i in idx]
        labels = train_labels[idx]
        jd_ids, jd_mask, rbatch, _ = data.matching_batch(pairs)
        return model.matching_loss(jd_ids, jd_mask, rbatch, labels)

    result = _loop(
        cfg,
        model,
        state,
        rng,
        n_train=len(train),
        make_loss=make_loss,
        validate=val_accuracy,
        train_tags={"selector"},
        progress=progress,
        name="pretrain_selector",
        higher_is_better=True,
    )
    result.extras["val_accuracy"] = result.best.val_score
    return result


# -- stage: manager fine-tuning --------------------------------------------------------


@dataclass
class FrozenFeatures:
    """Per-dialog frozen generator tensors for fine-tuning.

    ``memory`` is filled when the selector is frozen too (manager-only
    training); otherwise ``summaries`` keeps the per-turn states so the
    knowledge memory can be rebuilt through the live selector each step.
    """

    dc: list[np.ndarray]        # (T_i, 2H) decoder state ++ context vector
    target_ids: list[np.ndarray]
    memory: list[np.ndarray] | None = None      # (S_i, H)
    summaries: list[np.ndarray] | None = None   # (m_i, H)
    dialogs: list | None = None


def build_frozen_features(
    model: InterviewModel,
    data: TrainingData,
    dialogs,
    flags: AblationFlags,
    chunk: int = 48,
    freeze_selector: bool = True,
) -> FrozenFeatures:
    dc, targets, memories, summaries_out = [], [], [], []
    with ad.no_grad():
        for start in range(0, len(dialogs), chunk):
            part = dialogs[start : start + chunk]
            ctx, rbatch, tgt = data.grounded_batch(part)
            summaries, hc = model.encode_context_states(ctx)
            d = model.generator.decode_states(tgt.prefix_ids)
            c, _ = model.generator.cross_attend(d, hc, ctx.turn_mask)
            joint = np.concatenate([d.data, c.data], axis=-1)
            memory = None
            if freeze_selector:
                enc, updated, _ = model.encode_resume_states(rbatch)
                memory = model.knowledge_memory(
                    summaries, ctx.turn_mask, ctx.turn_counts, enc, updated, flags
                )
            for i in range(len(part)):
                t_i = int(tgt.step_mask[i].sum())
                dc.append(joint[i, :t_i].copy())
                targets.append(tgt.target_ids[i, :t_i].copy())
                if memory is not None:
                    s_i = int(memory.slot_mask[i].sum())
                    memories.append(memory.slots.data[i, :s_i].copy())
                else:
                    m_i = int(ctx.turn_mask[i].sum())
                    summaries_out.append(summaries.data[i, :m_i].copy())
    return FrozenFeatures(
        dc=dc,
        target_ids=targets,
        memory=memories if freeze_selector else None,
        summaries=None if freeze_selector else summaries_out,
        dialogs=None if freeze_selector else list(dialogs),
    )


def _pad_stack(arrays, width, extra_shape=()):
    out = np.zeros((len(arrays), width) + extra_shape)
    mask = np.zeros((len(arrays), width), dtype=bool)
    for row, a in enumerate(arrays):
        out[row, : a.shape[0]] = a
        mask[row, : a.shape[0]] = True
    return out, mask


def _cached_finetune_loss(
    model: InterviewModel, feats: FrozenFeatures, idx, lam: float
) -> Tensor:
    """Manager-only step on fully precomputed features."""
    h = model.config.hidden_dim
    t = max(feats.dc[i].shape[0] for i in idx)
    dc, steps = _pad_stack([feats.dc[i] for i in idx], t, (2 * h,))
    target = np.zeros((len(idx), t), dtype=np.int64)
    for row, i in enumerate(idx):
        target[row, : feats.target_ids[i].shape[0]] = feats.target_ids[i]
    s = max(feats.memory[i].shape[0] for i in idx)
    slots, slot_mask = _pad_stack([feats.memory[i] for i in idx], s, (h,))
    d = Tensor(dc[:, :, :h])
    c = Tensor(dc[:, :, h:])
    step = model.manager.step_states(d, c, Tensor(slots), slot_mask)
    logits_w = dc @ model.generator.out_w.data + model.generator.out_b.data
    probs_w = np_softmax(logits_w)
    return smoothed_cross_entropy(step["logits"], target, steps, probs_w, lam)


def _cached_selector_finetune_loss(
    model: InterviewModel,
    data: TrainingData,
    feats: FrozenFeatures,
    idx,
    flags: AblationFlags,
    lam: float,
) -> Tensor:
    """Selector+manager step on frozen generator features: the knowledge
    memory is rebuilt through the live selector every step."""
    h = model.config.hidden_dim
    t = max(feats.dc[i].shape[0] for i in idx)
    dc, steps = _pad_stack([feats.dc[i] for i in idx], t, (2 * h,))
    target = np.zeros((len(idx), t), dtype=np.int64)
    for row, i in enumerate(idx):
        target[row, : feats.target_ids[i].shape[0]] = feats.target_ids[i]
    m = max(feats.summaries[i].shape[0] for i in idx)
    summaries, turn_mask = _pad_stack([feats.summaries[i] for i in idx], m, (h,))
    turn_counts = turn_mask.sum(axis=1).astype(np.int64)
    dialogs = [feats.dialogs[i] for i in idx]
    rbatch = encode_resumes(
        [data.resume_map[dlg.resume_id] for dlg in dialogs], data.schema, data.vocab
    )
    enc, updated, _ = model.encode_resume_states(rbatch)
    memory = model.knowledge_memory(
        Tensor(summaries), turn_mask, turn_counts, enc, updated, flags
    )
    d = Tensor(dc[:, :, :h])
    c = Tensor(dc[:, :, h:])
    step = model.manager.step_states(d, c, memory.slots, memory.slot_mask)
    logits_w = dc @ model.generator.out_w.data + model.generator.out_b.data
    probs_w = np_softmax(logits_w)
    return smoothed_cross_entropy(step["logits"], target, steps, probs_w, lam)


def finetune_manager(
    cfg: StageConfig,
    flags: AblationFlags,
    data: TrainingData,
    generator_checkpoint: str | None = None,
    selector_checkpoint: str | None = None,
    train_indices=None,
    progress=None,
) -> TrainResult:
    if cfg.stage != "finetune_manager":
        raise ValueError("config stage mismatch")
    train = data.bundle.grounded_split("train")
    valid = data.bundle.grounded_split("valid")
    if train_indices is not None:
        train = [train[i] for i in train_indices]
    if not train:
        raise ValueError("finetune_manager: missing grounded corpus")

    model = InterviewModel(_model_config(cfg), data.vocab, data.schema, seed=cfg.seed)
    if not flags.no_pretrain:
        if generator_checkpoint is None or selector_checkpoint is None:
            raise ValueError(
                "finetune_manager without no_pretrain needs both pretrained checkpoints"
            )
        gen_model, _ = load_checkpoint(generator_checkpoint)
        sel_model, _ = load_checkpoint(selector_checkpoint)
        _check_vocab_matches(gen_model, data)
        _check_vocab_matches(sel_model, data)
        load_params_from(model, gen_model, {"generator"})
        load_params_from(model, sel_model, {"selector"})
        tags = _train_tags(cfg)
    else:
        tags = {"generator", "selector", "manager"}
    model.set_trainable(tags)
    lam = 1.0 if flags.no_ls else cfg.adaption_factor
    state = AdamState(learning_rate=cfg.lr)
    rng = np.random.default_rng(cfg.seed)

    if tags == {"manager"}:
        train_feats = build_frozen_features(model, data, train, flags)
        valid_cap = valid[: cfg.val_batch_cap * cfg.batch]
        valid_feats = build_frozen_features(model, data, valid_cap, flags) if valid_cap else None

        def make_loss(idx):
            return _cached_finetune_loss(model, train_feats, idx, lam)

        def validate() -> float:
            if valid_feats is None:
                return float("nan")
            with ad.no_grad():
                losses = []
                for start in range(0, len(valid_cap), cfg.batch):
                    idx = list(range(start, min(start + cfg.batch, len(valid_cap))))
                    losses.append(_cached_finetune_loss(model, valid_feats, idx, lam).item())
                return float(np.mean(losses))

    elif tags == {"manager", "selector"}:
        train_feats = build_frozen_features(model, data, train, flags, freeze_selector=False)
        valid_cap = valid[: cfg.val_batch_cap * cfg.batch]
        valid_feats = (
            build_frozen_features(model, data, valid_cap, flags, freeze_selector=False)
            if valid_cap
            else None
        )

        def make_loss(idx):
            return _cached_selector_finetune_loss(model, data, train_feats, idx, flags, lam)

        def validate() -> float:
            if valid_feats is None:
                return float("nan")
            with ad.no_grad():
                losses = []
                for start in range(0, len(valid_cap), cfg.batch):
                    idx = list(range(start, min(start + cfg.batch, len(valid_cap))))
                    losses.append(
                        _cached_selector_finetune_loss(
                            model, data, valid_feats, idx, flags, lam
                        ).item()
                    )
                return float(np.mean(losses))

    else:

        def make_loss(idx):
            ctx, rbatch, tgt = data.grounded_batch([train[i] for i in idx])
            loss, _, _ = model.finetune_loss(ctx, rbatch, tgt, flags, lam)
            return loss

        def validate() -> float:
            if not valid:
                return float("nan")
            with ad.no_grad():
                losses = []
                cap = min(len(valid), cfg.val_batch_cap * cfg.batch)
                for start in range(0, cap, cfg.batch):
                    ctx, rbatch, tgt = data.grounded_batch(valid[start : start + cfg.batch])
                    loss, _, _ = model.finetune_loss(ctx, rbatch, tgt, flags, lam)
                    losses.append(loss.item())
                return float(np.mean(losses))

    result = _loop(
        cfg,
        model,
        state,
        rng,
        n_train=len(train),
        make_loss=make_loss,
        validate=validate,
        train_tags=tags,
        progress=progress,
        name="finetune_manager",
        extra_meta={"ablation": asdict(flags), "adaption_factor": lam},
    )
    result.extras["ablation"] = asdict(flags)
    return result


# -- shared loop -------------------------------------------------------------------


def _loop(
    cfg: StageConfig,
    model: InterviewModel,
    state: AdamState,
    rng: np.random.Generator,
    n_train: int,
    make_loss,
    validate,
    train_tags: set[str],
    progress,
    name: str,
    higher_is_better: bool = False,
    extra_meta: dict | None = None,
) -> TrainResult:
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    history: list[dict] = []
    checkpoints: list[CheckpointInfo] = []
    best_score = -np.inf if higher_is_better else np.inf
    evals_since_best = 0
    step = 0
    t0 = time.time()

    def run_eval():
        nonlocal best_score, evals_since_best
        score = validate()
        path = out_dir / f"{name}_step{step:06d}.ckpt"
        save_checkpoint(model, path, stage=name, validation_score=score, extra=extra_meta)
        info = CheckpointInfo(str(path), step, score)
        checkpoints.append(info)
        improved = score > best_score if higher_is_better else score < best_score
        if improved:
            best_score = score
            evals_since_best = 0
        else:
            evals_since_best += 1
        rec = {
            "event": "eval",
            "stage": name,
            "step": step,
            "val_score": score,
            "elapsed_sec": round(time.time() - t0, 2),
        }
        history.append(rec)
        _emit(progress, rec)
        return improved

    for idx in _batches(n_train, cfg.batch, cfg.max_steps, rng):
        loss = make_loss(idx)
        loss.backward()
        # trainable parameters outside this loss (e.g. the generator's word
        # head under no_pretrain, whose distribution is a stop-gradient
        # target) hold a zero gradient
        for p in model.params.values():
            if p.component_tag in train_tags and p.tensor.grad is None:
                p.tensor.grad = np.zeros_like(p.data)
        adam_step(state, model.params, train_tags=train_tags, clip_norm=cfg.clip_norm)
        step += 1
        if step % 25 == 0 or step == 1:
            rec = {"event": "step", "stage": name, "step": step, "loss": float(loss.item())}
            history.append(rec)
            _emit(progress, rec)
        if step % cfg.eval_interval == 0:
            run_eval()
            if evals_since_best >= cfg.patience:
                history.append({"event": "early_stop", "stage": name, "step": step})
                _emit(progress, history[-1])
                break
    if not checkpoints or checkpoints[-1].step != step:
        run_eval()
    ordered = sorted(
        checkpoints,
        key=lambda c: (-c.val_score if higher_is_better else c.val_score, c.step),
    )
    best = ordered[0]
    (out_dir / f"{name}_history.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in history), encoding="utf-8"
    )
    return TrainResult(checkpoints=checkpoints, history=history, best=best, model=model)


# -- evaluation -----------------------------------------------------------------------


def decode_split(
    model: InterviewModel,
    data: TrainingData,
    dialogs,
    decode: DecodeConfig,
    flags: AblationFlags = AblationFlags(),
    chunk: int = 32,
):
    """Greedy-decode a dialog list; returns (candidates, references, jds)."""
    cands, refs, jds = [], [], []
    for start in range(0, len(dialogs), chunk):
        part = dialogs[start : start + chunk]
        results = model.generate_greedy(
            [d.context for d in part],
            [data.resume_map[d.resume_id] for d in part],
            decode,
            flags,
        )
        for d, res in zip(part, results):
            cands.append(res.tokens)
            refs.append(list(d.target))
            jds.append(list(data.jd_map[d.jd_id].tokens))
    return cands, refs, jds


def metric_report(
    model: InterviewModel, data: TrainingData, dialogs, decode: DecodeConfig,
    flags: AblationFlags = AblationFlags(),
) -> MetricReport:
    cands, refs, jds = decode_split(model, data, dialogs, decode, flags)
    return compute_report(
        cands,
        refs,
        jds,
        data.entities,
        model.generator.word.data,
        data.vocab.encode_token,
        data.stopwords,
        extra_echo={"decode": asdict(decode)},
    )


def evaluate_model(
    checkpoint_paths: list[str],
    data: TrainingData,
    split: str = "test",
    decode: DecodeConfig | None = None,
    flags: AblationFlags = AblationFlags(),
    limit: int | None = None,
    top_k: int = 5,
) -> dict:
    """Decode the test split per checkpoint and report per-checkpoint scores
    plus the mean over the best `top_k` checkpoints by validation score."""
    if not checkpoint_paths:
        raise ValueError("evaluate_model: need at least one checkpoint")
    dialogs = data.bundle.grounded_split(split)
    if limit is not None:
        dialogs = dialogs[:limit]
    if not dialogs:
        raise ValueError(f"evaluate_model: empty {split} split")
    decode = decode or DecodeConfig()
    scored = []
    for path in checkpoint_paths:
        header = read_checkpoint_header(path)
        scored.append((path, header.get("validation_score")))
    ranked = sorted(scored, key=lambda x: (x[1] if x[1] is not None else np.inf))
    chosen = ranked[:top_k]
    per_ckpt = []
    for path, val_score in chosen:
        model, _ = load_checkpoint(path)
        report = metric_report(model, data, dialogs, decode, flags)
        per_ckpt.append(
            {"checkpoint": path, "validation_score": val_score, "report": report.to_json()}
        )
    mean_values = {}
    for key in per_ckpt[0]["report"]["values"]:
        mean_values[key] = float(
            np.mean([c["report"]["values"][key] for c in per_ckpt])
        )
    return {
        "split": split,
        "corpus_size": len(dialogs),
        "per_checkpoint": per_ckpt,
        "top_k": [c["checkpoint"] for c in per_ckpt],
        "mean_of_top_k": mean_values,
    }


# -- experiment suite --------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    data_dir: str
    out_dir: str
    preset: str = "desk"
    scales: tuple = (1.0, 0.5, 0.25, 0.125, 0.1)
    seeds: tuple = (1, 2, 3)
    conditions: tuple = ("pretrained", "scratch")
    pretrain_generator_steps: int = 1200
    pretrain_selector_steps: int = 600
    finetune_steps: int = 400
    eval_interval: int = 100
    batch_size: int | None = None
    adaption_factor: float = 0.8
    eval_limit: int = 100
    subset_seed: int = 1234
    jobs: int = 1
    base_seed: int = 0


def prepare_pretrained_base(cfg: ExperimentConfig, data: TrainingData, progress=None):
    """Pre-train generator then selector once; reused across the grid."""
    base_dir = Path(cfg.out_dir) / "base"
    gen_ck = base_dir / "generator_best.ckpt"
    sel_ck = base_dir / "selector_best.ckpt"
    if gen_ck.exists() and sel_ck.exists():
        return str(gen_ck), str(sel_ck)
    gen_cfg = StageConfig(
        stage="pretrain_generator",
        data_dir=cfg.data_dir,
        out_dir=str(base_dir / "gen"),
        seed=cfg.base_seed,
        preset=cfg.preset,
        batch_size=cfg.batch_size,
        max_steps=cfg.pretrain_generator_steps,
        eval_interval=max(cfg.pretrain_generator_steps // 4, 1),
    )
    gen_res = pretrain_generator(gen_cfg, data, progress=progress)
    sel_cfg = StageConfig(
        stage="pretrain_selector",
        data_dir=cfg.data_dir,
        out_dir=str(base_dir / "sel"),
        seed=cfg.base_seed,
        preset=cfg.preset,
        batch_size=cfg.batch_size,
        max_steps=cfg.pretrain_selector_steps,
        eval_interval=max(cfg.pretrain_selector_steps // 3, 1),
    )
    sel_res = pretrain_selector(sel_cfg, data, generator_checkpoint=gen_res.best.path,
                                progress=progress)
    base_dir.mkdir(parents=True, exist_ok=True)
    import shutil

    shutil.copyfile(gen_res.best.path, gen_ck)
    shutil.copyfile(sel_res.best.path, sel_ck)
    return str(gen_ck), str(sel_ck)


def _experiment_run(args) -> list[dict]:
    """One (scale, condition, seed) cell; module-level for process pools."""
    cfg_dict, scale, condition, seed, gen_ck, sel_ck = args
    cfg = ExperimentConfig(**cfg_dict)
    vocab_cap = ModelConfig.from_preset(cfg.preset).vocab_cap
    data = TrainingData.load(cfg.data_dir, vocab_cap)
    n_train = len(data.bundle.grounded_split("train"))
    order = np.random.default_rng(cfg.subset_seed).permutation(n_train)
    subset = sorted(int(i) for i in order[: max(1, int(round(scale * n_train)))])
    flags = AblationFlags(no_pretrain=(condition == "scratch"))
    run_dir = Path(cfg.out_dir) / f"runs/{condition}_s{scale}_seed{seed}"
    stage = StageConfig(
        stage="finetune_manager",
        data_dir=cfg.data_dir,
        out_dir=str(run_dir),
        seed=seed,
        preset=cfg.preset,
        batch_size=cfg.batch_size,
        max_steps=cfg.finetune_steps,
        eval_interval=cfg.eval_interval,
        adaption_factor=cfg.adaption_factor,
    )
    result = finetune_manager(
        stage,
        flags,
        data,
        generator_checkpoint=None if flags.no_pretrain else gen_ck,
        selector_checkpoint=None if flags.no_pretrain else sel_ck,
        train_indices=subset,
    )
    report = evaluate_model(
        [result.best.path], data, split="test", limit=cfg.eval_limit, top_k=1
    )
    records = []
    for metric, value in report["mean_of_top_k"].items():
        records.append(
            {
                "scale": scale,
                "condition": condition,
                "seed": seed,
                "metric": metric,
                "value": value,
            }
        )
    return records


def run_experiment_suite(cfg: ExperimentConfig, data: TrainingData | None = None,
                         progress=None) -> dict:
    """Scale x condition x seed fine-tuning grid with a shared pretrained
    base; writes line-delimited records, a summary table and figures."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if data is None:
        data = TrainingData.load(cfg.data_dir, ModelConfig.from_preset(cfg.preset).vocab_cap)
    gen_ck, sel_ck = prepare_pretrained_base(cfg, data, progress=progress)
    runs = [
        (asdict(cfg), scale, condition, seed, gen_ck, sel_ck)
        for scale in cfg.scales
        for condition in cfg.conditions
        for seed in cfg.seeds
    ]
    records: list[dict] = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for out in pool.map(_experiment_run, runs):
                records.extend(out)
                _emit(progress, {"event": "run_done", "done": len(records)})
    else:
        for args in runs:
            records.extend(_experiment_run(args))
            _emit(progress, {"event": "run_done",
                             "run": f"{args[2]}_s{args[1]}_seed{args[3]}"})
    records_path = out_dir / "experiment_records.jsonl"
    records_path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8"
    )
    summary = summarize_records(records)
    summary_path = out_dir / "experiment_summary.tsv"
    _write_summary_tsv(summary, summary_path)
    from . import plots

    figures = plots.scale_sweep_figures(records, out_dir)
    return {
        "records_path": str(records_path),
        "summary_path": str(summary_path),
        "figures": figures,
        "records": records,
        "summary": summary,
    }


def summarize_records(records: list[dict]) -> list[dict]:
    """Mean metric value per (scale, condition, metric) over seeds."""
    grouped: dict[tuple, list[float]] = {}
    for r in records:
        grouped.setdefault((r["scale"], r["condition"], r["metric"]), []).append(r["value"])
    out = []
    for (scale, condition, metric), values in sorted(grouped.items()):
        out.append(
            {
                "scale": scale,
                "condition": condition,
                "metric": metric,
                "mean": float(np.mean(values)),
                "seeds": len(values),
            }
        )
    return out


def _write_summary_tsv(summary: list[dict], path: Path) -> None:
    lines = ["scale\tcondition\tmetric\tmean\tseeds"]
    for row in summary:
        lines.append(
            f"{row['scale']}\t{row['condition']}\t{row['metric']}\t"
            f"{row['mean']:.6f}\t{row['seeds']}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
