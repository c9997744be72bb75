"""Metric tests: every implementation is checked against an independent
brute-force oracle on small fixtures, to 1e-10."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interviewgen.metrics import (
    BLEU_EPSILON,
    MetricReport,
    bleu,
    compute_report,
    correlation,
    distinct,
    embedding_similarity,
    entity_f1,
)

# -- oracles ---------------------------------------------------------------------


def oracle_bleu(cands, refs, n):
    """Direct transcription of corpus BLEU: clipped n-gram matches with
    uniform weights and a brevity penalty, eps-substituted zero counts."""
    precisions = []
    for k in range(1, n + 1):
        match = 0.0
        total = 0.0
        for c, r in zip(cands, refs):
            cg = [tuple(c[i : i + k]) for i in range(len(c) - k + 1)]
            rg = [tuple(r[i : i + k]) for i in range(len(r) - k + 1)]
            for g in set(cg):
                match += min(cg.count(g), rg.count(g))
            total += len(cg)
        if total == 0:
            return 0.0
        if match == 0:
            if k == 1:
                return 0.0
            match = BLEU_EPSILON
        precisions.append(match / total)
    c_len = sum(len(c) for c in cands)
    r_len = sum(len(r) for r in refs)
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / max(c_len, 1))
    return bp * math.prod(p ** (1.0 / n) for p in precisions)


def oracle_distinct(cands, n):
    grams = []
    for c in cands:
        grams.extend(tuple(c[i : i + n]) for i in range(len(c) - n + 1))
    return len(set(grams)) / len(grams) if grams else 0.0


def oracle_cosine(a, b):
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0 or nb == 0:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def oracle_embedding(cands, refs, table, token_ids):
    greedy = avg = ext = 0.0
    for c, r in zip(cands, refs):
        cv = [table[token_ids(t)] for t in c]
        rv = [table[token_ids(t)] for t in r]
        fwd = sum(max(oracle_cosine(x, y) for y in rv) for x in cv) / len(cv)
        bwd = sum(max(oracle_cosine(x, y) for x in cv) for y in rv) / len(rv)
        greedy += max(0.5 * (fwd + bwd), 0.0)
        mean_c = [sum(col) / len(cv) for col in zip(*cv)]
        mean_r = [sum(col) / len(rv) for col in zip(*rv)]
        avg += max(oracle_cosine(mean_c, mean_r), 0.0)

        def extrema(vs):
            out = []
            for col in zip(*vs):
                hi, lo = max(col), min(col)
                out.append(hi if abs(hi) >= abs(lo) else lo)
            return out

        ext += max(oracle_cosine(extrema(cv), extrema(rv)), 0.0)
    n = len(cands)
    return greedy / n, avg / n, ext / n


def oracle_entity_f1(cands, refs, entities):
    tp = fp = fn = 0
    for c, r in zip(cands, refs):
        ce, re = set(c) & entities, set(r) & entities
        tp += len(ce & re)
        fp += len(ce - re)
        fn += len(re - ce)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def oracle_correlation(cands, jds, stop):
    vals = []
    for c, j in zip(cands, jds):
        cu = {t for t in c if t not in stop}
        ju = {t for t in j if t not in stop}
        vals.append(len(cu & ju) / len(cu) if cu else 0.0)
    return sum(vals) / len(vals)


FIXTURES = [
    ([["a", "b", "c", "d"]], [["a", "b", "x", "y"]]),
    ([["a", "a", "b"]], [["a", "b", "b"]]),
    ([["p", "q"]], [["r", "s", "t"]]),
    ([["m"], ["m", "n", "o"]], [["m"], ["n", "n", "o"]]),
    ([["u", "v", "w", "x", "y"]], [["u", "v", "w", "x", "y"]]),
]


class TestBleu:
    def test_identity_is_one(self):
        for n in (1, 2, 3, 4):
            assert bleu([["a", "b", "c", "d"]], [["a", "b", "c", "d"]], n) == pytest.approx(1.0)

    def test_half_overlap_spec_example(self):
        # equal lengths so the brevity penalty is 1; 2 of 4 unigrams match
        assert bleu([["a", "b", "c", "d"]], [["a", "b", "x", "y"]], 1) == pytest.approx(0.5)

    def test_disjoint_is_zero(self):
        assert bleu([["a", "b"]], [["x", "y"]], 1) == 0.0

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    @pytest.mark.parametrize("cands,refs", FIXTURES)
    def test_matches_oracle(self, cands, refs, n):
        assert bleu(cands, refs, n) == pytest.approx(oracle_bleu(cands, refs, n), abs=1e-10)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            bleu([["a"]], [["a"], ["b"]], 1)

    def test_appending_matched_token_never_lowers_bleu1(self):
        ref = [["a", "b", "c", "d", "e"]]
        cand = ["a", "b"]
        prev = bleu([cand], ref, 1)
        while len(cand) < 5:
            cand = cand + [ref[0][len(cand)]]
            cur = bleu([cand], ref, 1)
            assert cur >= prev - 1e-12
            prev = cur


class TestDistinct:
    def test_spec_examples(self):
        assert distinct([["a", "a", "b"]], 1) == pytest.approx(2 / 3)
        assert distinct([["a", "a", "b"]], 2) == pytest.approx(1.0)

    def test_identical_responses_degenerate(self):
        cands = [["x", "y"]] * 10
        assert distinct(cands, 1) == pytest.approx(2 / 20)

    @pytest.mark.parametrize("cands,refs", FIXTURES)
    def test_matches_oracle(self, cands, refs):
        for n in (1, 2):
            assert distinct(cands, n) == pytest.approx(oracle_distinct(cands, n), abs=1e-10)

    @given(st.permutations(range(5)))
    @settings(max_examples=20, deadline=None)
    def test_permutation_invariant_over_candidates(self, perm):
        cands = [["a", "b"], ["b", "c"], ["a"], ["c", "c"], ["d"]]
        shuffled = [cands[i] for i in perm]
        assert distinct(shuffled, 1) == pytest.approx(distinct(cands, 1))
        assert distinct(shuffled, 2) == pytest.approx(distinct(cands, 2))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            distinct([], 1)
        with pytest.raises(ValueError):
            distinct([["a"]], 3)


@pytest.fixture()
def emb_table():
    rng = np.random.default_rng(5)
    table = rng.normal(size=(12, 4))
    tokens = {t: i for i, t in enumerate("abcdefghijkl")}
    return table, lambda t: tokens.get(t, 0)


class TestEmbeddingMetrics:
    def test_identity_maximal(self, emb_table):
        table, ids = emb_table
        g, a, e = embedding_similarity([["a", "b"]], [["a", "b"]], table, ids)
        assert g == pytest.approx(1.0) and a == pytest.approx(1.0) and e == pytest.approx(1.0)

    def test_orthogonal_single_tokens_average_zero(self):
        table = np.array([[1.0, 0.0], [0.0, 1.0]])
        ids = {"x": 0, "y": 1}
        g, a, e = embedding_similarity([["x"]], [["y"]], table, ids.__getitem__)
        assert a == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("cands,refs", FIXTURES)
    def test_matches_bruteforce_oracle(self, cands, refs, emb_table):
        table, ids = emb_table
        got = embedding_similarity(cands, refs, table, ids)
        want = oracle_embedding(cands, refs, table, ids)
        for g, w in zip(got, want):
            assert g == pytest.approx(w, abs=1e-10)

    def test_zero_vector_pair_scores_zero(self):
        table = np.zeros((2, 3))
        g, a, e = embedding_similarity([["a"]], [["b"]], table, lambda t: 0 if t == "a" else 1)
        assert (g, a, e) == (0.0, 0.0, 0.0)


class TestEntityF1:
    def test_spec_half_overlap(self):
        ents = {"react", "vue", "css"}
        score = entity_f1([["react", "vue"]], [["react", "css"]], ents)
        assert score == pytest.approx(0.5)

    def test_exact_entities_full_score(self):
        ents = {"react", "vue"}
        assert entity_f1([["react", "vue", "x"]], [["vue", "react"]], ents) == pytest.approx(1.0)

    def test_candidate_without_entities_zero(self):
        ents = {"react"}
        assert entity_f1([["hello"]], [["react"]], ents) == 0.0

    @pytest.mark.parametrize("cands,refs", FIXTURES)
    def test_matches_oracle(self, cands, refs):
        ents = {"a", "m", "u", "q"}
        assert entity_f1(cands, refs, ents) == pytest.approx(
            oracle_entity_f1(cands, refs, ents), abs=1e-10
        )


class TestCorrelation:
    def test_full_overlap(self):
        assert correlation([["react", "vue"]], [["react", "vue", "go"]], set()) == 1.0

    def test_disjoint(self):
        assert correlation([["a"]], [["b"]], set()) == 0.0

    def test_two_of_five(self):
        cand = [["v", "w", "x", "y", "z"]]
        jd = [["v", "w", "q"]]
        assert correlation(cand, jd, set()) == pytest.approx(0.4)

    def test_stopwords_filtered(self):
        cand = [["the", "react"]]
        jd = [["react"]]
        assert correlation(cand, jd, {"the"}) == 1.0

    def test_empty_after_filtering_contributes_zero(self):
        assert correlation([["the"]], [["react"]], {"the"}) == 0.0

    @pytest.mark.parametrize("cands,refs", FIXTURES)
    def test_matches_oracle(self, cands, refs):
        stop = {"b"}
        assert correlation(cands, refs, stop) == pytest.approx(
            oracle_correlation(cands, refs, stop), abs=1e-10
        )


class TestReport:
    def test_complete_report(self, emb_table):
        table, ids = emb_table
        report = compute_report(
            [["a", "b"]], [["a", "c"]], [["a"]], {"a"}, table, ids, set()
        )
        assert set(report.values) == set(MetricReport.METRICS)
        assert all(0.0 <= v <= 1.0 for v in report.values.values())
        assert "bleu_smoothing" in report.config_echo

    def test_skipped_metric_recorded(self, emb_table):
        table, ids = emb_table
        report = compute_report([["a"]], [["a"]], None, {"a"}, table, ids, set())
        assert "cor" in report.skipped

    def test_out_of_range_value_rejected(self):
        with pytest.raises(ValueError):
            MetricReport(
                values={m: (1.5 if m == "bleu1" else 0.5) for m in MetricReport.METRICS},
                corpus_size=1,
                config_echo={},
            )

    def test_incomplete_report_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            MetricReport(values={"bleu1": 0.5}, corpus_size=1, config_echo={})
