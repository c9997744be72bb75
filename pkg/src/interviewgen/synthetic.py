"""Seeded synthetic corpora with planted ground truth.

Resumes, job descriptions, interview dialogs, generic (ungrounded) dialogs
and match/no-match pairs are all rendered from compositional templates:
question frames x resume fields x entities. Each grounded dialog plants the
index of the resume field its target question was rendered from, and the
target always mentions at least one entity from that field that does NOT
appear in the dialog context, so knowledge retrieval is required (and
measurable) rather than copyable from context.

Matching pairs are separable by construction: a "match" job description
draws its decisive skills from the resume's own stack, a "no_match" one
from the complement, so decisive-skill overlap classifies perfectly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    DialogTurn,
    GroundedDialog,
    JobDescription,
    MatchingPair,
    Resume,
    ResumeField,
    UngroundedDialog,
    grounded_from_record,
    grounded_to_record,
    jd_from_record,
    jd_to_record,
    matching_from_record,
    matching_to_record,
    read_jsonl,
    resume_from_record,
    resume_to_record,
    ungrounded_from_record,
    ungrounded_to_record,
    write_jsonl,
)

# -- entity space ---------------------------------------------------------------

ENTITY_CATEGORIES: dict[str, list[str]] = {
    "skills": [
        "python", "java", "golang", "ruby", "swift", "kotlin",
        "scala", "haskell", "perl", "elixir", "clojure", "erlang",
    ],
    "frameworks": [
        "react", "vue", "angular", "django", "flask", "spring",
        "rails", "laravel", "express", "svelte", "kafka", "spark",
    ],
    "roles": [
        "backend_engineer", "frontend_engineer", "data_scientist",
        "platform_engineer", "mobile_developer", "reliability_engineer",
        "ml_engineer", "qa_engineer",
    ],
    "schools": [
        "northlake_university", "eastfield_college", "harborview_institute",
        "westbrook_university", "southgate_polytechnic", "riverton_state",
    ],
    "majors": [
        "computer_science", "software_engineering", "information_systems",
        "applied_mathematics", "electrical_engineering", "data_engineering",
    ],
}

SKILL_POOL = ENTITY_CATEGORIES["skills"] + ENTITY_CATEGORIES["frameworks"]

# Each stack family comes with its own role and major families, so a
# resume's expected position / major and a jd's advertised role echo the
# family signal that the decisive skills carry. Families are deliberately
# imbalanced (70/30): the jd side alone then predicts matching at 0.7,
# which gives optimization a first-order foothold, while beating that
# prior still requires reading the resume.
ROLE_FAMILIES = {
    "skills": ["backend_engineer", "data_scientist", "platform_engineer", "ml_engineer"],
    "frameworks": ["frontend_engineer", "mobile_developer", "reliability_engineer",
                   "qa_engineer"],
}
MAJOR_FAMILIES = {
    "skills": ["computer_science", "applied_mathematics", "data_engineering"],
    "frameworks": ["software_engineering", "information_systems", "electrical_engineering"],
}
SKILL_FAMILY_PRIOR = 0.7

COMPANIES = ["acme_systems", "nova_labs", "bright_apps", "quietworks", "summit_stack",
             "blue_harbor", "red_canyon", "silver_peak"]
ADJECTIVES = ["scalable", "reliable", "modular", "maintainable", "robust", "efficient"]
VERBS = ["built", "shipped", "designed", "maintained", "migrated", "optimized"]
WORK_FILLER = ["pipelines", "dashboards", "services", "integrations", "reports",
               "workflows", "deployments", "monitors", "queues", "schemas"]
GENERIC_TOPICS = ["planning", "roadmaps", "tooling", "process", "documentation",
                  "mentoring", "scheduling", "reviews", "testing", "staging",
                  "releases", "standups"]

BASIC_KEYS = [
    "gender", "age", "education", "major", "work_years",
    "expected_position", "low_salary", "high_salary", "school", "skills",
]

GENDERS = ["male", "female", "nonbinary"]
EDUCATION_LEVELS = ["associate", "bachelor", "master", "phd"]

# -- templates -------------------------------------------------------------------
# {k} = resume field key token, {e} = entity token, {v} = field value token.

INTERVIEWER_FIELD_FRAMES = [
    "i see {k} on your resume could you describe how you used {e} there",
    "your {k} section mentions {e} can you explain what you did with it",
    "let us talk about your {k} how did {e} fit into that work",
]
CANDIDATE_FIELD_FRAMES = [
    "sure in my {k} i mainly worked with {e} and learned a lot",
    "yes that {k} role involved {e} almost every day for two years",
    "of course my {k} work centered on {e} and close team collaboration",
]
INTERVIEWER_BASIC_FRAMES = [
    "i would like to hear about your {k} could you introduce it briefly",
    "your resume lists a {k} entry can you tell me more about it",
]
CANDIDATE_BASIC_FRAMES = [
    "sure my {k} background is something i am quite proud of honestly",
    "yes i can walk you through my {k} whenever you are ready",
]
INTERVIEWER_FILLER_FRAMES = [
    "hello thanks for joining today let us start with a quick introduction",
    "welcome again before we begin do you have any questions for me",
]
CANDIDATE_FILLER_FRAMES = [
    "thank you for having me i am excited to talk with you",
    "no questions yet i am ready to start whenever you would like",
]
TARGET_FIELD_FRAMES = [
    "so can you explain how {e} was applied in your {k} project",
    "i noticed {e} also appears in your {k} what problems did it solve",
    "could you compare {e} with the other tools from your {k} work",
    "would you walk me through one {k} task where {e} made a difference",
]
TARGET_BASIC_FRAMES = [
    "i see your {k} is {v} how has that shaped your work",
    "your {k} says {v} could you tell me why you chose it",
]
TARGET_GENERIC_FRAMES = [
    "okay thank you could you please share a little more detail about that",
    "understood and what would you say was the most challenging part of it",
]

GREETING_TOKENS = "hello welcome to this mock interview please introduce yourself briefly".split()


def _frame_words() -> frozenset[str]:
    words: set[str] = set()
    frames = (
        INTERVIEWER_FIELD_FRAMES + CANDIDATE_FIELD_FRAMES + INTERVIEWER_BASIC_FRAMES
        + CANDIDATE_BASIC_FRAMES + INTERVIEWER_FILLER_FRAMES + CANDIDATE_FILLER_FRAMES
        + TARGET_FIELD_FRAMES + TARGET_BASIC_FRAMES + TARGET_GENERIC_FRAMES
    )
    for f in frames:
        for tok in f.split():
            if not (tok.startswith("{") and tok.endswith("}")):
                words.add(tok)
    words.update(GREETING_TOKENS)
    words.update(["at", "i", "using", "and", "while", "during", "our", "team",
                  "hires", "a", "to", "build", "products", "with", "we", "value",
                  "offer", "growth", "opportunities"])
    return frozenset(words)


FUNCTION_WORDS = _frame_words()


@dataclass
class EntityVocabulary:
    """Entity tokens grouped by category; categories are disjoint."""

    categories: dict[str, list[str]] = field(
        default_factory=lambda: {k: list(v) for k, v in ENTITY_CATEGORIES.items()}
    )

    def __post_init__(self):
        seen: set[str] = set()
        for name, toks in self.categories.items():
            dup = seen.intersection(toks)
            if dup:
                raise ValueError(f"entity category {name} overlaps others: {sorted(dup)}")
            seen.update(toks)

    def all_entities(self) -> set[str]:
        return {t for toks in self.categories.values() for t in toks}


@dataclass
class GeneratorConfig:
    seed: int = 7
    num_resumes: int = 100
    num_grounded_dialogs: int = 2000
    num_ungrounded_dialogs: int = 20000
    num_matching_pairs: int = 4000
    fields_per_resume: int = 22
    decisive_skill_count: int = 3
    mean_turns_grounded: float = 4.47
    mean_turns_ungrounded: float = 4.0
    mean_utterance_tokens: float = 13.18
    # Corpus-length targets are the published per-item averages scaled down
    # to desk size; counts are scaled separately.
    length_scale: float = 0.25
    work_experience_words: float = 72.80
    self_description_words: float = 51.13
    jd_words: float = 74.26
    generic_target_fraction: float = 0.15
    home_stack_size: int = 8
    grounded_split: tuple[float, float, float] = (0.90, 0.05, 0.05)

    def __post_init__(self):
        for name in ("num_resumes", "num_grounded_dialogs", "num_ungrounded_dialogs",
                     "num_matching_pairs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.fields_per_resume < 10:
            raise ValueError(
                "fields_per_resume must be >= 10 to populate all three resume parts"
            )
        if self.mean_utterance_tokens <= 0 or self.length_scale <= 0:
            raise ValueError("length targets must be positive")

    @property
    def work_experience_target(self) -> float:
        return self.work_experience_words * self.length_scale

    @property
    def extended_target(self) -> float:
        return self.self_description_words * self.length_scale

    @property
    def jd_target(self) -> float:
        return self.jd_words * self.length_scale


def _pick(rng: np.random.Generator, seq):
    return seq[int(rng.integers(len(seq)))]


def _sample_turn_count(rng: np.random.Generator, mean: float) -> int:
    base = int(mean)
    frac = mean - base
    m = base + (1 if rng.random() < frac else 0)
    m += int(rng.choice([-1, 0, 1], p=[0.15, 0.7, 0.15]))
    return max(2, m)


def _multi_token_value(
    rng: np.random.Generator, skills: list[str], target_len: float
) -> list[str]:
    """Work-experience style value mentioning the given skills.

    Skills close the sequence: the value encoder summarises a field by its
    last state, so the field's identifying skill sits where that summary
    can reach it.
    """
    head = ["at", _pick(rng, COMPANIES), "i", _pick(rng, VERBS),
            _pick(rng, ADJECTIVES), "services"]
    body = ["using"]
    for i, s in enumerate(skills):
        if i:
            body.append("and")
        body.append(s)
    length = max(len(head) + len(body), int(round(rng.normal(target_len, 2.0))))
    while len(head) + len(body) < length:
        head.append(_pick(rng, WORK_FILLER))
    return head + body


def gen_resume(config: GeneratorConfig, rng: np.random.Generator, resume_id: str) -> Resume:
    """One resume with the shared 3-part layout and a coherent home stack.

    The stack is drawn from a single skill family (languages or frameworks),
    which keeps match/no_match job descriptions separable by decisive-skill
    overlap while giving the matching task a family-level signal that a
    desk-scale model can actually pick up.
    """
    family_name = "skills" if rng.random() < SKILL_FAMILY_PRIOR else "frameworks"
    family = ENTITY_CATEGORIES[family_name]
    k = min(config.home_stack_size, len(family))
    stack_idx = rng.permutation(len(family))[:k]
    stack = [family[i] for i in sorted(stack_idx)]
    low = int(rng.integers(4, 26))
    basics = {
        "gender": _pick(rng, GENDERS),
        "age": str(int(rng.integers(23, 46))),
        "education": _pick(rng, EDUCATION_LEVELS),
        "major": _pick(rng, MAJOR_FAMILIES[family_name]),
        "work_years": str(int(rng.integers(1, 21))),
        "expected_position": _pick(rng, ROLE_FAMILIES[family_name]),
        "low_salary": str(low),
        "high_salary": str(low + int(rng.integers(2, 7))),
        "school": _pick(rng, ENTITY_CATEGORIES["schools"]),
        "skills": _pick(rng, stack),
    }
    fields = [ResumeField(k, [basics[k]], "basic") for k in BASIC_KEYS]
    extra = config.fields_per_resume - len(BASIC_KEYS)
    n_exp = (extra + 1) // 2
    n_ext = extra - n_exp
    # Every multi-token field ends in a signature skill that no other field
    # of this resume carries, so exact-field retrieval is both necessary
    # and rewarded; the leading skill may repeat across fields.
    signature_order = rng.permutation(len(family))
    signatures = [family[signature_order[i % len(family)]] for i in range(extra)]

    def field_skills(idx: int) -> list[str]:
        sig = signatures[idx]
        lead = sig
        while lead == sig:
            lead = _pick(rng, stack)
        return [lead, sig]

    for i in range(n_exp):
        fields.append(
            ResumeField(
                f"experience_{i + 1}",
                _multi_token_value(rng, field_skills(i), config.work_experience_target),
                "work_experience",
            )
        )
    for i in range(n_ext):
        fields.append(
            ResumeField(
                f"extended_{i + 1}",
                _multi_token_value(rng, field_skills(n_exp + i), config.extended_target),
                "extended",
            )
        )
    return Resume(id=resume_id, fields=fields, extras={"home_stack": stack})


def resume_skill_union(resume: Resume) -> set[str]:
    pool = set(SKILL_POOL)
    return {t for f in resume.fields for t in f.value if t in pool}


def gen_job_description(
    resume: Resume,
    label: str,
    config: GeneratorConfig,
    rng: np.random.Generator,
    jd_id: str,
) -> JobDescription:
    """Job description whose decisive skills overlap (match) or avoid
    (no_match) the resume's skill set."""
    owned = sorted(resume_skill_union(resume))
    if not owned:
        raise ValueError(f"resume {resume.id} has no skill entities")
    family_name = "skills" if owned[0] in set(ENTITY_CATEGORIES["skills"]) else "frameworks"
    if label == "match":
        if len(owned) < config.decisive_skill_count:
            raise ValueError(f"resume {resume.id} has too few skills for a match jd")
        picks = rng.permutation(len(owned))[: config.decisive_skill_count]
        decisive = [owned[i] for i in picks]
        role = _pick(rng, ROLE_FAMILIES[family_name])
    elif label == "no_match":
        # opposite skill family: disjoint by construction, role echoes it
        other_name = "frameworks" if family_name == "skills" else "skills"
        other = sorted(set(ENTITY_CATEGORIES[other_name]) - set(owned))
        if len(other) < config.decisive_skill_count:
            raise ValueError("skill pool too small for disjoint decisive skills")
        picks = rng.permutation(len(other))[: config.decisive_skill_count]
        decisive = [other[i] for i in picks]
        role = _pick(rng, ROLE_FAMILIES[other_name])
    else:
        raise ValueError(f"unknown label {label!r}")
    head = ["hiring", "a", role, "to", "build",
            _pick(rng, ADJECTIVES), "products", "with"]
    body: list[str] = []
    for i, s in enumerate(decisive):
        if i:
            body.append("and")
        body.append(s)
    tokens = head + body + ["we", "value", _pick(rng, GENERIC_TOPICS)]
    target = int(round(rng.normal(config.jd_target, 1.5)))
    while len(tokens) < target:
        tokens.append(_pick(rng, WORK_FILLER))
    return JobDescription(id=jd_id, tokens=tokens, extras={"decisive": decisive})


def _render(frame: str, **slots) -> list[str]:
    return frame.format(**slots).split()


def _field_entities(fld: ResumeField) -> list[str]:
    pool = set(SKILL_POOL)
    return [t for t in fld.value if t in pool]


def _plantable_indices(resume: Resume) -> tuple[list[int], list[int]]:
    """(multi-token entity fields, entity-valued basic fields) by index."""
    multi, basic = [], []
    for i, f in enumerate(resume.fields):
        if f.part != "basic" and len(_field_entities(f)) >= 2:
            multi.append(i)
        elif f.key in ("school", "major", "skills", "expected_position"):
            basic.append(i)
    return multi, basic


def _exchange_for_field(
    rng: np.random.Generator, fld: ResumeField, avoid: set[str]
) -> tuple[DialogTurn, DialogTurn, str | None]:
    """Interviewer/candidate turn pair about a field; returns the entity used."""
    if fld.part == "basic":
        q = _render(_pick(rng, INTERVIEWER_BASIC_FRAMES), k=fld.key)
        a = _render(_pick(rng, CANDIDATE_BASIC_FRAMES), k=fld.key)
        return DialogTurn("interviewer", q), DialogTurn("candidate", a), None
    ents = [e for e in _field_entities(fld) if e not in avoid]
    ent = ents[0] if ents else _field_entities(fld)[0]
    q = _render(_pick(rng, INTERVIEWER_FIELD_FRAMES), k=fld.key, e=ent)
    a = _render(_pick(rng, CANDIDATE_FIELD_FRAMES), k=fld.key, e=ent)
    return DialogTurn("interviewer", q), DialogTurn("candidate", a), ent


def gen_grounded_dialog(
    resume: Resume,
    jd: JobDescription,
    config: GeneratorConfig,
    rng: np.random.Generator,
) -> GroundedDialog:
    """Multi-turn context whose final exchange sets up the planted field.

    Grounded targets mention one entity (or basic value) from the planted
    field that the context never mentions; 10-20% of targets are generic
    follow-ups with no grounding index.
    """
    multi, basic = _plantable_indices(resume)
    generic = rng.random() < config.generic_target_fraction
    if multi and (not basic or rng.random() < 0.7):
        planted = multi[int(rng.integers(len(multi)))]
    else:
        planted = basic[int(rng.integers(len(basic)))]
    fld = resume.fields[planted]

    if fld.part == "basic":
        frame_id = int(rng.integers(len(TARGET_BASIC_FRAMES)))
        target = _render(TARGET_BASIC_FRAMES[frame_id], k=fld.key, v=fld.value[0])
        primary = fld.value[0]
        reserved: set[str] = {fld.value[0]}
    else:
        ents = _field_entities(fld)
        context_ent = ents[0]
        unseen = [e for e in ents[1:] if e != context_ent]
        target_ent = unseen[int(rng.integers(len(unseen)))]
        frame_id = int(rng.integers(len(TARGET_FIELD_FRAMES)))
        target = _render(TARGET_FIELD_FRAMES[frame_id], k=fld.key, e=target_ent)
        primary = target_ent
        reserved = {target_ent}

    m = min(_sample_turn_count(rng, config.mean_turns_grounded), 8)
    last_q, last_a, _ = _exchange_for_field(rng, fld, avoid=reserved)
    turns = [last_q, last_a]
    other_candidates = [i for i in multi + basic if i != planted]
    while len(turns) < m:
        need = m - len(turns)
        if need == 1:
            # turns currently start with an interviewer question, so a single
            # prepended turn must be a candidate one to keep alternation.
            turns.insert(0, DialogTurn("candidate", _pick(rng, CANDIDATE_FILLER_FRAMES).split()))
        elif other_candidates and rng.random() < 0.6:
            j = other_candidates[int(rng.integers(len(other_candidates)))]
            q, a, _ = _exchange_for_field(rng, resume.fields[j], avoid=reserved)
            turns = [q, a] + turns
        else:
            q = DialogTurn("interviewer", _pick(rng, INTERVIEWER_FILLER_FRAMES).split())
            a = DialogTurn("candidate", _pick(rng, CANDIDATE_FILLER_FRAMES).split())
            turns = [q, a] + turns

    if generic:
        frame_id = int(rng.integers(len(TARGET_GENERIC_FRAMES)))
        target = TARGET_GENERIC_FRAMES[frame_id].split()
        return GroundedDialog(
            resume_id=resume.id, jd_id=jd.id, context=turns, target=target,
            grounding_field_index=None,
            extras={"combo": f"g{frame_id}:none"},
        )
    return GroundedDialog(
        resume_id=resume.id, jd_id=jd.id, context=turns, target=target,
        grounding_field_index=planted,
        extras={"combo": f"{'b' if fld.part == 'basic' else 'f'}{frame_id}:{primary}"},
    )


def _generic_exchange(rng: np.random.Generator) -> tuple[DialogTurn, DialogTurn]:
    topic, topic2 = _pick(rng, GENERIC_TOPICS), _pick(rng, GENERIC_TOPICS)
    style = rng.random()
    if style < 0.45:
        q = _render(_pick(rng, INTERVIEWER_FIELD_FRAMES), k=topic, e=topic2)
        a = _render(_pick(rng, CANDIDATE_FIELD_FRAMES), k=topic, e=topic2)
    elif style < 0.75:
        q = _render(_pick(rng, INTERVIEWER_BASIC_FRAMES), k=topic)
        a = _render(_pick(rng, CANDIDATE_BASIC_FRAMES), k=topic)
    else:
        q = _pick(rng, INTERVIEWER_FILLER_FRAMES).split()
        a = _pick(rng, CANDIDATE_FILLER_FRAMES).split()
    return DialogTurn("interviewer", q), DialogTurn("candidate", a)


def gen_ungrounded_dialog(config: GeneratorConfig, rng: np.random.Generator) -> UngroundedDialog:
    m = min(_sample_turn_count(rng, config.mean_turns_ungrounded), 8)
    turns: list[DialogTurn] = []
    while len(turns) < m:
        q, a = _generic_exchange(rng)
        if turns and m - len(turns) == 1:
            turns.insert(0, DialogTurn("candidate", _pick(rng, CANDIDATE_FILLER_FRAMES).split()))
        elif m - len(turns) == 1:
            turns.append(a)
        else:
            turns = [q, a] + turns
    t, t2 = _pick(rng, GENERIC_TOPICS), _pick(rng, GENERIC_TOPICS)
    r = rng.random()
    if r < 0.4:
        target = _render(_pick(rng, TARGET_FIELD_FRAMES), k=t, e=t2)
    elif r < 0.7:
        target = _render(_pick(rng, TARGET_BASIC_FRAMES), k=t, v=t2)
    else:
        target = _pick(rng, TARGET_GENERIC_FRAMES).split()
    return UngroundedDialog(context=turns, target=target)


# -- bundle ---------------------------------------------------------------------


@dataclass
class CorpusBundle:
    config: GeneratorConfig
    resumes: list[Resume]
    jds: list[JobDescription]
    grounded: list[GroundedDialog]
    ungrounded: list[UngroundedDialog]
    matching: list[MatchingPair]
    entity_vocab: EntityVocabulary
    splits: dict

    def grounded_split(self, name: str) -> list[GroundedDialog]:
        return [self.grounded[i] for i in self.splits["grounded"][name]]

    def ungrounded_split(self, name: str) -> list[UngroundedDialog]:
        return [self.ungrounded[i] for i in self.splits["ungrounded"][name]]

    def matching_split(self, name: str) -> list[MatchingPair]:
        return [self.matching[i] for i in self.splits["matching"][name]]

    def jd_by_id(self) -> dict[str, JobDescription]:
        return {j.id: j for j in self.jds}

    def resume_by_id(self) -> dict[str, Resume]:
        return {r.id: r for r in self.resumes}


def _split_indices_by_combo(
    dialogs: list[GroundedDialog], fractions, rng: np.random.Generator
) -> dict[str, list[int]]:
    """Assign whole (frame, entity) combos to splits so held-out dialogs use
    unseen combinations."""
    by_combo: dict[str, list[int]] = {}
    for i, d in enumerate(dialogs):
        by_combo.setdefault(d.extras.get("combo", f"solo{i}"), []).append(i)
    combos = sorted(by_combo)
    order = rng.permutation(len(combos))
    names = ("train", "valid", "test")
    want = [f * len(dialogs) for f in fractions]
    have = [0.0, 0.0, 0.0]
    out: dict[str, list[int]] = {n: [] for n in names}
    for ci in order:
        combo = combos[int(ci)]
        deficits = [want[k] - have[k] for k in range(3)]
        k = int(np.argmax(deficits))
        out[names[k]].extend(by_combo[combo])
        have[k] += len(by_combo[combo])
    for n in names:
        out[n].sort()
    return out


def generate_bundle(config: GeneratorConfig) -> CorpusBundle:
    """Deterministically generate every corpus from one seed."""
    rng = np.random.default_rng(config.seed)
    resumes = [gen_resume(config, rng, f"r{i:04d}") for i in range(config.num_resumes)]

    dialog_jds = [
        gen_job_description(r, "match", config, rng, f"jd_d{i:04d}")
        for i, r in enumerate(resumes)
    ]
    grounded = []
    for i in range(config.num_grounded_dialogs):
        ri = int(rng.integers(len(resumes)))
        grounded.append(gen_grounded_dialog(resumes[ri], dialog_jds[ri], config, rng))

    ungrounded = [gen_ungrounded_dialog(config, rng) for _ in range(config.num_ungrounded_dialogs)]

    matching: list[MatchingPair] = []
    matching_jds: list[JobDescription] = []
    for i in range(config.num_matching_pairs):
        label = "match" if i % 2 == 0 else "no_match"
        ri = int(rng.integers(len(resumes)))
        jd = gen_job_description(resumes[ri], label, config, rng, f"jd_m{i:05d}")
        matching_jds.append(jd)
        matching.append(MatchingPair(jd_id=jd.id, resume_id=resumes[ri].id, label=label))

    splits = {
        "grounded": _split_indices_by_combo(grounded, config.grounded_split, rng),
        "ungrounded": _simple_split(len(ungrounded), (0.95, 0.05), ("train", "valid"), rng),
        "matching": _simple_split(len(matching), (0.90, 0.10), ("train", "valid"), rng),
    }
    return CorpusBundle(
        config=config,
        resumes=resumes,
        jds=dialog_jds + matching_jds,
        grounded=grounded,
        ungrounded=ungrounded,
        matching=matching,
        entity_vocab=EntityVocabulary(),
        splits=splits,
    )


def _simple_split(n: int, fractions, names, rng: np.random.Generator) -> dict[str, list[int]]:
    order = rng.permutation(n)
    out: dict[str, list[int]] = {}
    start = 0
    for frac, name in zip(fractions, names):
        count = int(round(frac * n)) if name != names[-1] else n - start
        out[name] = sorted(int(i) for i in order[start : start + count])
        start += count
    return out


def save_bundle(bundle: CorpusBundle, out_dir: Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "resumes.jsonl", (resume_to_record(r) for r in bundle.resumes))
    write_jsonl(out / "jds.jsonl", (jd_to_record(j) for j in bundle.jds))
    write_jsonl(out / "grounded_dialogs.jsonl", (grounded_to_record(d) for d in bundle.grounded))
    write_jsonl(out / "ungrounded_dialogs.jsonl", (ungrounded_to_record(d) for d in bundle.ungrounded))
    write_jsonl(out / "matching_pairs.jsonl", (matching_to_record(p) for p in bundle.matching))
    manifest = {
        "config": asdict(bundle.config),
        "entity_vocab": bundle.entity_vocab.categories,
        "stopwords": sorted(FUNCTION_WORDS),
        "splits": bundle.splits,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )


def load_bundle(data_dir: Path) -> CorpusBundle:
    data = Path(data_dir)
    manifest = json.loads((data / "manifest.json").read_text(encoding="utf-8"))
    cfg_raw = dict(manifest["config"])
    cfg_raw["grounded_split"] = tuple(cfg_raw["grounded_split"])
    config = GeneratorConfig(**cfg_raw)
    return CorpusBundle(
        config=config,
        resumes=read_jsonl(data / "resumes.jsonl", resume_from_record),
        jds=read_jsonl(data / "jds.jsonl", jd_from_record),
        grounded=read_jsonl(data / "grounded_dialogs.jsonl", grounded_from_record),
        ungrounded=read_jsonl(data / "ungrounded_dialogs.jsonl", ungrounded_from_record),
        matching=read_jsonl(data / "matching_pairs.jsonl", matching_from_record),
        entity_vocab=EntityVocabulary(
            categories={k: list(v) for k, v in manifest["entity_vocab"].items()}
        ),
        splits=manifest["splits"],
    )
