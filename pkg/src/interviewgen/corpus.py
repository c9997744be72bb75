"""Domain data types for resumes, job descriptions and dialogs, plus their
line-delimited JSON persistence and the id/mask encodings fed to the model.

File layout per dataset directory: resumes.jsonl, jds.jsonl,
grounded_dialogs.jsonl, ungrounded_dialogs.jsonl, matching_pairs.jsonl and
a manifest.json describing generation config, splits, entity vocabulary
and stopwords.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD, UNK, BOS, EOS, CLS, SEP = range(6)
SPECIAL_TOKENS = ("<pad>", "<unk>", "<bos>", "<eos>", "<cls>", "<sep>")
SPEAKER_TOKENS = {"interviewer": "<spk_int>", "candidate": "<spk_cand>"}
PARTS = ("basic", "work_experience", "extended")

MAX_UTTERANCE_TOKENS = 20
MAX_CONTEXT_TOKENS = 100
MAX_TURNS = 32
# No stated bound for resume fields; 80 comfortably covers the generated
# work-experience lengths and keeps positional tables small.
MAX_FIELD_TOKENS = 80
MAX_JD_TOKENS = 80


class CorpusFormatError(ValueError):
    """Schema violation while reading a corpus file."""


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization; raises on effectively empty input."""
    toks = text.split()
    if not toks:
        raise ValueError("tokenize: empty input")
    return toks


# -- domain types --------------------------------------------------------------


@dataclass
class ResumeField:
    key: str
    value: list[str]
    part: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.key:
            raise ValueError("resume field key must be non-empty")
        if self.part not in PARTS:
            raise ValueError(f"unknown resume part {self.part!r}")
        if len(self.value) < 1:
            raise ValueError(f"resume field {self.key!r} has empty value")


@dataclass
class Resume:
    id: str
    fields: list[ResumeField]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.fields:
            raise ValueError("resume needs at least one field")
        keys = [f.key for f in self.fields]
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate field keys in resume {self.id}")

    @property
    def skill_tokens(self) -> set[str]:
        return {t for f in self.fields for t in f.value}


@dataclass
class JobDescription:
    id: str
    tokens: list[str]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("job description must have at least one token")


@dataclass
class DialogTurn:
    speaker: str
    tokens: list[str]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.speaker not in SPEAKER_TOKENS:
            raise ValueError(f"unknown speaker {self.speaker!r}")
        if not self.tokens:
            raise ValueError("dialog turn must have at least one token")


@dataclass
class GroundedDialog:
    resume_id: str
    jd_id: str
    context: list[DialogTurn]
    target: list[str]
    grounding_field_index: int | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.context:
            raise ValueError("grounded dialog needs at least one context turn")
        if not self.target:
            raise ValueError("grounded dialog target must be non-empty")


@dataclass
class UngroundedDialog:
    context: list[DialogTurn]
    target: list[str]
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.context or not self.target:
            raise ValueError("ungrounded dialog needs context and target")


@dataclass
class MatchingPair:
    jd_id: str
    resume_id: str
    label: str
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in ("match", "no_match"):
            raise ValueError(f"unknown matching label {self.label!r}")


# -- vocabulary ----------------------------------------------------------------


class Vocabulary:
    """Token to dense-id table with fixed special ids 0..5.

    Non-special slots are filled by descending corpus frequency with
    lexicographic tie-breaks; everything else encodes to UNK.
    """

    def __init__(self, tokens_in_order: list[str]):
        self.id_to_token = list(SPECIAL_TOKENS) + tokens_in_order
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode_token(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[int(i)] for i in ids]

    def to_json(self) -> dict:
        return {"tokens": self.id_to_token[len(SPECIAL_TOKENS):]}

    @classmethod
    def from_json(cls, payload: dict) -> "Vocabulary":
        return cls(list(payload["tokens"]))


def build_vocabulary(token_streams, size_cap: int) -> Vocabulary:
    """Count tokens across the given iterables of token lists and keep the
    most frequent ones under the cap (cap counts the 6 specials)."""
    if size_cap < len(SPECIAL_TOKENS) + 1:
        raise ValueError(f"size_cap {size_cap} leaves no room beyond specials")
    counts: dict[str, int] = {}
    empty = True
    for stream in token_streams:
        for toks in stream:
            empty = False
            for t in toks:
                counts[t] = counts.get(t, 0) + 1
    if empty:
        raise ValueError("build_vocabulary: empty corpora")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [t for t, _ in ranked[: size_cap - len(SPECIAL_TOKENS)]]
    return Vocabulary(keep)


def corpus_token_streams(
    resumes=(), jds=(), grounded=(), ungrounded=()
):
    """Token streams for vocabulary building; dialog turns contribute their
    speaker tag as an ordinary token."""

    def dialog_stream(dialogs):
        for d in dialogs:
            for turn in d.context:
                yield [SPEAKER_TOKENS[turn.speaker]] + turn.tokens
            yield list(d.target)

    def resume_stream():
        for r in resumes:
            for f in r.fields:
                yield [f.key] + list(f.value)

    def jd_stream():
        for j in jds:
            yield list(j.tokens)

    return [resume_stream(), jd_stream(), dialog_stream(grounded), dialog_stream(ungrounded)]


# -- truncation ----------------------------------------------------------------


def truncate_dialog(
    turns: list[DialogTurn],
    max_utterance_tokens: int = MAX_UTTERANCE_TOKENS,
    max_context_tokens: int = MAX_CONTEXT_TOKENS,
    max_turns: int = MAX_TURNS,
) -> list[DialogTurn]:
    """Cap each utterance, then drop oldest turns until the total fits.

    Counts are over content tokens (speaker/cls markers are added later at
    encode time), which makes the operation idempotent.
    """
    if not turns:
        raise ValueError("truncate_dialog: empty dialog")
    capped = [
        DialogTurn(t.speaker, list(t.tokens[:max_utterance_tokens]), dict(t.extras))
        for t in turns
    ]
    capped = capped[-max_turns:]
    total = sum(len(t.tokens) for t in capped)
    start = 0
    while total > max_context_tokens and start < len(capped) - 1:
        total -= len(capped[start].tokens)
        start += 1
    out = capped[start:]
    if not out or all(not t.tokens for t in out):
        raise ValueError("truncate_dialog: nothing left after truncation")
    return out


# -- persistence ---------------------------------------------------------------

_KNOWN_FIELDS = {
    "resume": {"id", "fields"},
    "jd": {"id", "tokens"},
    "grounded_dialog": {"resume_id", "jd_id", "context", "target", "grounding_field_index"},
    "ungrounded_dialog": {"context", "target"},
    "matching_pair": {"jd_id", "resume_id", "label"},
}


def _split_extras(rec: dict, kind: str) -> dict:
    return {k: v for k, v in rec.items() if k not in _KNOWN_FIELDS[kind]}


def _need(rec: dict, name: str, lineno: int):
    if name not in rec:
        raise CorpusFormatError(f"line {lineno}: missing required field {name!r}")
    return rec[name]


def _turns_from_records(raw, lineno: int) -> list[DialogTurn]:
    turns = []
    for t in raw:
        turns.append(
            DialogTurn(
                speaker=_need(t, "speaker", lineno),
                tokens=list(_need(t, "tokens", lineno)),
                extras={k: v for k, v in t.items() if k not in ("speaker", "tokens")},
            )
        )
    return turns


def resume_to_record(r: Resume) -> dict:
    rec = {
        "id": r.id,
        "fields": [
            {"key": f.key, "value": list(f.value), "part": f.part, **f.extras}
            for f in r.fields
        ],
    }
    rec.update(r.extras)
    return rec


def resume_from_record(rec: dict, lineno: int = 0) -> Resume:
    fields = []
    for f in _need(rec, "fields", lineno):
        fields.append(
            ResumeField(
                key=_need(f, "key", lineno),
                value=list(_need(f, "value", lineno)),
                part=_need(f, "part", lineno),
                extras={k: v for k, v in f.items() if k not in ("key", "value", "part")},
            )
        )
    return Resume(id=_need(rec, "id", lineno), fields=fields, extras=_split_extras(rec, "resume"))


def jd_to_record(j: JobDescription) -> dict:
    rec = {"id": j.id, "tokens": list(j.tokens)}
    rec.update(j.extras)
    return rec


def jd_from_record(rec: dict, lineno: int = 0) -> JobDescription:
    return JobDescription(
        id=_need(rec, "id", lineno),
        tokens=list(_need(rec, "tokens", lineno)),
        extras=_split_extras(rec, "jd"),
    )


def grounded_to_record(d: GroundedDialog) -> dict:
    rec = {
        "resume_id": d.resume_id,
        "jd_id": d.jd_id,
        "context": [
            {"speaker": t.speaker, "tokens": list(t.tokens), **t.extras} for t in d.context
        ],
        "target": list(d.target),
    }
    if d.grounding_field_index is not None:
        rec["grounding_field_index"] = d.grounding_field_index
    rec.update(d.extras)
    return rec


def grounded_from_record(rec: dict, lineno: int = 0) -> GroundedDialog:
    return GroundedDialog(
        resume_id=_need(rec, "resume_id", lineno),
        jd_id=_need(rec, "jd_id", lineno),
        context=_turns_from_records(_need(rec, "context", lineno), lineno),
        target=list(_need(rec, "target", lineno)),
        grounding_field_index=rec.get("grounding_field_index"),
        extras=_split_extras(rec, "grounded_dialog"),
    )


def ungrounded_to_record(d: UngroundedDialog) -> dict:
    rec = {
        "context": [
            {"speaker": t.speaker, "tokens": list(t.tokens), **t.extras} for t in d.context
        ],
        "target": list(d.target),
    }
    rec.update(d.extras)
    return rec


def ungrounded_from_record(rec: dict, lineno: int = 0) -> UngroundedDialog:
    return UngroundedDialog(
        context=_turns_from_records(_need(rec, "context", lineno), lineno),
        target=list(_need(rec, "target", lineno)),
        extras=_split_extras(rec, "ungrounded_dialog"),
    )


def matching_to_record(p: MatchingPair) -> dict:
    rec = {"jd_id": p.jd_id, "resume_id": p.resume_id, "label": p.label}
    rec.update(p.extras)
    return rec


def matching_from_record(rec: dict, lineno: int = 0) -> MatchingPair:
    return MatchingPair(
        jd_id=_need(rec, "jd_id", lineno),
        resume_id=_need(rec, "resume_id", lineno),
        label=_need(rec, "label", lineno),
        extras=_split_extras(rec, "matching_pair"),
    )


def write_jsonl(path: Path, records) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def read_jsonl(path: Path, parser):
    items = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid json ({exc})") from exc
            try:
                items.append(parser(rec, lineno))
            except (ValueError, TypeError, KeyError) as exc:
                if isinstance(exc, CorpusFormatError):
                    raise
                raise CorpusFormatError(f"line {lineno}: {exc}") from exc
    return items


# -- batch encoding --------------------------------------------------------------


class BatchEncodeError(ValueError):
    pass


def encode_token_batch(
    token_lists: list[list[str]], vocab: Vocabulary, hard_cap: int = 512
):
    """Right-pad encoded token lists to the batch max; mask marks real tokens."""
    if not token_lists:
        raise BatchEncodeError("encode_token_batch: empty batch")
    for i, toks in enumerate(token_lists):
        if len(toks) > hard_cap:
            raise BatchEncodeError(
                f"encode_token_batch: item {i} has {len(toks)} tokens (cap {hard_cap})"
            )
    width = max(len(t) for t in token_lists)
    ids = np.full((len(token_lists), width), PAD, dtype=np.int64)
    mask = np.zeros((len(token_lists), width), dtype=bool)
    for i, toks in enumerate(token_lists):
        enc = vocab.encode(toks)
        ids[i, : len(enc)] = enc
        mask[i, : len(enc)] = True
    return ids, mask


def utterance_token_ids(turn: DialogTurn, vocab: Vocabulary) -> list[int]:
    """[cls, speaker, content...] id sequence for one utterance."""
    return [CLS, vocab.encode_token(SPEAKER_TOKENS[turn.speaker])] + vocab.encode(
        turn.tokens
    )


@dataclass
class ContextBatch:
    """Padded (B, m, T) utterance ids for a batch of dialog contexts."""

    ids: np.ndarray           # (B, m, T) int64
    token_mask: np.ndarray    # (B, m, T) bool, real tokens
    turn_mask: np.ndarray     # (B, m) bool, real turns
    turn_counts: np.ndarray   # (B,) int64


def encode_contexts(contexts: list[list[DialogTurn]], vocab: Vocabulary) -> ContextBatch:
    if not contexts:
        raise BatchEncodeError("encode_contexts: empty batch")
    seqs = [[utterance_token_ids(t, vocab) for t in turns] for turns in contexts]
    m = max(len(s) for s in seqs)
    t = max(len(u) for s in seqs for u in s)
    b = len(seqs)
    ids = np.full((b, m, t), PAD, dtype=np.int64)
    token_mask = np.zeros((b, m, t), dtype=bool)
    turn_mask = np.zeros((b, m), dtype=bool)
    for i, s in enumerate(seqs):
        for j, u in enumerate(s):
            ids[i, j, : len(u)] = u
            token_mask[i, j, : len(u)] = True
        turn_mask[i, : len(s)] = True
    return ContextBatch(ids, token_mask, turn_mask, turn_mask.sum(axis=1).astype(np.int64))


@dataclass
class ResumeSchema:
    """Shared field layout across a resume corpus.

    Batched resume encoding assumes every resume carries the same ordered
    (key, part) layout, which the synthetic generator guarantees. Each
    single-token field gets its own small value vocabulary (id 0 reserved
    for unseen values); multi-token fields go through the shared word
    vocabulary instead.
    """

    keys: list[str]
    parts: list[str]
    kinds: list[str]  # "single" | "multi"
    value_vocabs: dict[str, list[str]]

    @property
    def num_fields(self) -> int:
        return len(self.keys)

    @property
    def single_positions(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == "single"]

    @property
    def multi_positions(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == "multi"]

    def part_ids(self) -> np.ndarray:
        return np.array([PARTS.index(p) for p in self.parts], dtype=np.int64)

    @classmethod
    def from_resumes(cls, resumes: list[Resume]) -> "ResumeSchema":
        if not resumes:
            raise ValueError("ResumeSchema.from_resumes: no resumes")
        layout = [(f.key, f.part) for f in resumes[0].fields]
        for r in resumes[1:]:
            if [(f.key, f.part) for f in r.fields] != layout:
                raise ValueError(
                    f"resume {r.id} does not share the corpus field layout"
                )
        keys = [k for k, _ in layout]
        parts = [p for _, p in layout]
        kinds = []
        for i, key in enumerate(keys):
            multi = any(len(r.fields[i].value) > 1 for r in resumes)
            kinds.append("multi" if multi else "single")
        vocabs: dict[str, list[str]] = {}
        for i, key in enumerate(keys):
            if kinds[i] == "single":
                seen = sorted({r.fields[i].value[0] for r in resumes})
                vocabs[key] = ["<unk_val>"] + seen
        return cls(keys=keys, parts=parts, kinds=kinds, value_vocabs=vocabs)

    def to_json(self) -> dict:
        return {
            "keys": self.keys,
            "parts": self.parts,
            "kinds": self.kinds,
            "value_vocabs": self.value_vocabs,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ResumeSchema":
        return cls(
            keys=list(payload["keys"]),
            parts=list(payload["parts"]),
            kinds=list(payload["kinds"]),
            value_vocabs={k: list(v) for k, v in payload["value_vocabs"].items()},
        )


@dataclass
class ResumeBatch:
    """Encoded resume fields for a batch sharing one schema."""

    single_ids: np.ndarray    # (B, n_single) int64 into per-key value vocabs
    multi_ids: np.ndarray     # (B, n_multi, L) int64 into the word vocabulary
    multi_mask: np.ndarray    # (B, n_multi, L) bool
    multi_lengths: np.ndarray  # (B, n_multi) int64


def encode_resumes(
    resumes: list[Resume], schema: ResumeSchema, vocab: Vocabulary
) -> ResumeBatch:
    if not resumes:
        raise BatchEncodeError("encode_resumes: empty batch")
    singles = schema.single_positions
    multis = schema.multi_positions
    b = len(resumes)
    single_ids = np.zeros((b, len(singles)), dtype=np.int64)
    for bi, r in enumerate(resumes):
        for si, pos in enumerate(singles):
            fld = r.fields[pos]
            vv = schema.value_vocabs[schema.keys[pos]]
            try:
                single_ids[bi, si] = vv.index(fld.value[0])
            except ValueError:
                single_ids[bi, si] = 0
    width = 1
    for r in resumes:
        for pos in multis:
            n = len(r.fields[pos].value)
            if n > MAX_FIELD_TOKENS:
                raise BatchEncodeError(
                    f"resume {r.id} field {schema.keys[pos]!r} has {n} tokens "
                    f"(cap {MAX_FIELD_TOKENS})"
                )
            width = max(width, n)
    multi_ids = np.full((b, len(multis), width), PAD, dtype=np.int64)
    multi_mask = np.zeros((b, len(multis), width), dtype=bool)
    lengths = np.ones((b, len(multis)), dtype=np.int64)
    for bi, r in enumerate(resumes):
        for mi, pos in enumerate(multis):
            enc = vocab.encode(r.fields[pos].value)
            multi_ids[bi, mi, : len(enc)] = enc
            multi_mask[bi, mi, : len(enc)] = True
            lengths[bi, mi] = len(enc)
    return ResumeBatch(single_ids, multi_ids, multi_mask, lengths)


@dataclass
class TargetBatch:
    """Teacher-forcing arrays: prefix starts with BOS, target ends with EOS."""

    prefix_ids: np.ndarray   # (B, T) int64
    target_ids: np.ndarray   # (B, T) int64
    step_mask: np.ndarray    # (B, T) bool


def encode_targets(targets: list[list[str]], vocab: Vocabulary) -> TargetBatch:
    if not targets:
        raise BatchEncodeError("encode_targets: empty batch")
    enc = [vocab.encode(t) + [EOS] for t in targets]
    width = max(len(e) for e in enc)
    b = len(enc)
    prefix = np.full((b, width), PAD, dtype=np.int64)
    target = np.full((b, width), PAD, dtype=np.int64)
    mask = np.zeros((b, width), dtype=bool)
    for i, e in enumerate(enc):
        prefix[i, 0] = BOS
        prefix[i, 1 : len(e)] = e[:-1]
        target[i, : len(e)] = e
        mask[i, : len(e)] = True
    return TargetBatch(prefix, target, mask)
