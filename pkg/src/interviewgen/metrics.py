"""Automatic evaluation for generated interview questions.

Corpus-level BLEU-1..4 (epsilon-smoothed for n >= 2), Distinct-1/2,
embedding Greedy/Average/Extrema over a word-embedding table, micro-averaged
Entity F1, and the job-description overlap score. All scores live in [0, 1];
embedding cosines are clamped at zero per pair so the bound holds.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

BLEU_EPSILON = 1e-9


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: list[list[str]], references: list[list[str]], n: int) -> float:
    """Corpus-level BLEU-n: uniform 1..n weights, modified precision,
    brevity penalty, and epsilon-substituted zero counts for n >= 2."""
    if len(candidates) != len(references):
        raise ValueError(
            f"bleu: {len(candidates)} candidates vs {len(references)} references"
        )
    if not candidates:
        raise ValueError("bleu: empty inputs")
    if not 1 <= n <= 4:
        raise ValueError(f"bleu: order {n} outside 1..4")
    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    product = 1.0
    for k in range(1, n + 1):
        matched = 0.0
        total = 0.0
        for c, r in zip(candidates, references):
            cg = _ngrams(c, k)
            rg = _ngrams(r, k)
            matched += sum(min(v, rg[g]) for g, v in cg.items())
            total += max(sum(cg.values()), 0)
        if total == 0:
            return 0.0
        if matched == 0.0:
            if k == 1:
                return 0.0
            matched = BLEU_EPSILON
        product *= (matched / total) ** (1.0 / n)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return bp * product


def distinct(candidates: list[list[str]], n: int) -> float:
    """Distinct n-grams over total n-grams across all candidates."""
    if n not in (1, 2):
        raise ValueError(f"distinct: order {n} must be 1 or 2")
    if not candidates:
        raise ValueError("distinct: empty candidate set")
    seen: set[tuple] = set()
    total = 0
    for c in candidates:
        for i in range(len(c) - n + 1):
            seen.add(tuple(c[i : i + n]))
            total += 1
    return len(seen) / total if total else 0.0


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _vectors(tokens: list[str], table: np.ndarray, token_ids) -> np.ndarray:
    return np.stack([table[token_ids(t)] for t in tokens])


def embedding_similarity(
    candidates: list[list[str]],
    references: list[list[str]],
    table: np.ndarray,
    token_ids,
) -> tuple[float, float, float]:
    """(greedy, average, extrema) similarities, means over pairs.

    greedy: for each side, every token greedily matches its best cosine in
    the other utterance; both directions averaged. average: cosine of mean
    vectors. extrema: cosine of the per-dimension values of largest
    magnitude. Pair scores are clamped at 0.
    """
    if len(candidates) != len(references):
        raise ValueError("embedding_similarity: length mismatch")
    if not candidates:
        raise ValueError("embedding_similarity: empty inputs")
    greedy_total = avg_total = ext_total = 0.0
    for c, r in zip(candidates, references):
        cv = _vectors(c, table, token_ids)
        rv = _vectors(r, table, token_ids)
        norm_c = np.linalg.norm(cv, axis=1)
        norm_r = np.linalg.norm(rv, axis=1)
        denom = np.outer(norm_c, norm_r)
        sims = np.zeros((len(c), len(r)))
        nz = denom > 0
        dots = cv @ rv.T
        sims[nz] = dots[nz] / denom[nz]
        g = 0.5 * (sims.max(axis=1).mean() + sims.max(axis=0).mean())
        greedy_total += max(g, 0.0)
        avg_total += max(_cosine(cv.mean(axis=0), rv.mean(axis=0)), 0.0)
        ext_total += max(_cosine(_extrema(cv), _extrema(rv)), 0.0)
    n = len(candidates)
    return greedy_total / n, avg_total / n, ext_total / n


def _extrema(vectors: np.ndarray) -> np.ndarray:
    """Per-dimension signed value of largest magnitude."""
    hi = vectors.max(axis=0)
    lo = vectors.min(axis=0)
    return np.where(np.abs(hi) >= np.abs(lo), hi, lo)


def entity_f1(
    candidates: list[list[str]], references: list[list[str]], entities: set[str]
) -> float:
    """Micro-averaged F1 over deduplicated entity mentions."""
    if len(candidates) != len(references):
        raise ValueError("entity_f1: length mismatch")
    tp = fp = fn = 0
    for c, r in zip(candidates, references):
        ce = set(c) & entities
        re = set(r) & entities
        tp += len(ce & re)
        fp += len(ce - re)
        fn += len(re - ce)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def correlation(
    candidates: list[list[str]], jds: list[list[str]], stopwords: set[str]
) -> float:
    """Mean over pairs of |unique(cand) & unique(jd)| / |unique(cand)| after
    stopword filtering; empty filtered candidates contribute 0."""
    if len(candidates) != len(jds):
        raise ValueError("correlation: length mismatch")
    if not candidates:
        raise ValueError("correlation: empty inputs")
    total = 0.0
    for c, j in zip(candidates, jds):
        cu = {t for t in c if t not in stopwords}
        ju = {t for t in j if t not in stopwords}
        if cu:
            total += len(cu & ju) / len(cu)
    return total / len(candidates)


@dataclass
class MetricReport:
    """Every metric present (or explicitly skipped with a reason) plus the
    configuration echo that makes numbers comparable across runs."""

    values: dict[str, float]
    corpus_size: int
    config_echo: dict
    skipped: dict[str, str] = field(default_factory=dict)

    METRICS = (
        "bleu1", "bleu2", "bleu3", "bleu4",
        "dist1", "dist2",
        "emb_greedy", "emb_average", "emb_extrema",
        "entity_f1", "cor",
    )

    def __post_init__(self):
        for name, v in self.values.items():
            if not -1e-9 <= v <= 1.0 + 1e-9:
                raise ValueError(f"metric {name}={v} outside [0, 1]")
        missing = [m for m in self.METRICS if m not in self.values and m not in self.skipped]
        if missing:
            raise ValueError(f"incomplete report, missing {missing}")

    def to_json(self) -> dict:
        return {
            "values": self.values,
            "corpus_size": self.corpus_size,
            "config_echo": self.config_echo,
            "skipped": self.skipped,
        }


def compute_report(
    candidates: list[list[str]],
    references: list[list[str]],
    jds: list[list[str]] | None,
    entities: set[str],
    embedding_table: np.ndarray,
    token_ids,
    stopwords: set[str],
    extra_echo: dict | None = None,
) -> MetricReport:
    values = {}
    skipped = {}
    for k in (1, 2, 3, 4):
        values[f"bleu{k}"] = bleu(candidates, references, k)
    values["dist1"] = distinct(candidates, 1)
    values["dist2"] = distinct(candidates, 2)
    g, a, e = embedding_similarity(candidates, references, embedding_table, token_ids)
    values["emb_greedy"] = g
    values["emb_average"] = a
    values["emb_extrema"] = e
    values["entity_f1"] = entity_f1(candidates, references, entities)
    if jds is None:
        skipped["cor"] = "no job descriptions supplied"
    else:
        values["cor"] = correlation(candidates, jds, stopwords)
    echo = {
        "bleu_smoothing": f"epsilon {BLEU_EPSILON} on zero counts for n >= 2, corpus-level brevity penalty",
        "embedding_source": "generator word-embedding table",
        "embedding_clamp": "pair cosines clamped at 0",
        "cor_formula": "stopword-filtered unique-token overlap / unique candidate tokens, mean over pairs",
    }
    echo.update(extra_echo or {})
    return MetricReport(
        values=values,
        corpus_size=len(candidates),
        config_echo=echo,
        skipped=skipped,
    )
