import math

import numpy as np
import pytest

from interviewgen import autodiff as ad
from interviewgen.autodiff import Tensor, gradient_check
from interviewgen.corpus import (
    ResumeSchema,
    build_vocabulary,
    corpus_token_streams,
    encode_resumes,
    encode_token_batch,
)
from interviewgen.model import InterviewModel, ModelConfig
from interviewgen.selector import EncodedResume, VisibleMatrix, matching_pretrain_loss


@pytest.fixture()
def encoded(tiny_model, small_bundle, small_vocab, small_schema):
    rbatch = encode_resumes(small_bundle.resumes[:3], small_schema, small_vocab)
    with ad.no_grad():
        enc, updated, alpha = tiny_model.encode_resume_states(rbatch)
    return enc, updated, alpha


class TestResumeEncoder:
    def test_single_field_change_leaves_others_untouched(
        self, tiny_model, small_bundle, small_vocab, small_schema
    ):
        import copy

        r = small_bundle.resumes[0]
        r2 = copy.deepcopy(r)
        pos = small_schema.keys.index("experience_1")
        r2.fields[pos].value = list(reversed(r2.fields[pos].value))
        a = encode_resumes([r], small_schema, small_vocab)
        b = encode_resumes([r2], small_schema, small_vocab)
        with ad.no_grad():
            ea = tiny_model.selector.encode_resume(a, tiny_model.generator.word)
            eb = tiny_model.selector.encode_resume(b, tiny_model.generator.word)
        others = [i for i in range(small_schema.num_fields) if i != pos]
        assert np.array_equal(ea.value_states.data[0, others], eb.value_states.data[0, others])
        assert not np.array_equal(ea.value_states.data[0, pos], eb.value_states.data[0, pos])

    def test_single_token_value_is_projected_table_row(
        self, tiny_model, small_bundle, small_vocab, small_schema
    ):
        r = small_bundle.resumes[0]
        rbatch = encode_resumes([r], small_schema, small_vocab)
        with ad.no_grad():
            enc = tiny_model.selector.encode_resume(rbatch, tiny_model.generator.word)
        si = small_schema.single_positions.index(small_schema.keys.index("school"))
        table = tiny_model.selector.value_tables[si]
        row = table.data[rbatch.single_ids[0, si]]
        expected = row @ tiny_model.selector.proj_in.w.data + tiny_model.selector.proj_in.b.data
        pos = small_schema.keys.index("school")
        assert np.allclose(enc.value_states.data[0, pos], expected, atol=1e-12)

    def test_gradient_check_through_value_encoder(self, small_bundle):
        vocab = build_vocabulary(
            corpus_token_streams(small_bundle.resumes, small_bundle.jds,
                                 small_bundle.grounded, small_bundle.ungrounded),
            50,
        )
        schema = ResumeSchema.from_resumes(small_bundle.resumes)
        model = InterviewModel(
            ModelConfig(embed_dim=6, hidden_dim=8, ffn_dim=12, layers=1, heads=2),
            vocab, schema, seed=4,
        )
        model.set_trainable({"selector"})
        rbatch = encode_resumes(small_bundle.resumes[:2], schema, vocab)

        def loss():
            enc, updated, _ = model.encode_resume_states(rbatch)
            return ad.tsum(ad.mul(updated, updated))

        sel_params = {n: p for n, p in model.params.items() if p.component_tag == "selector"}
        err = gradient_check(loss, sel_params, epsilon=1e-5,
                             rng=np.random.default_rng(1), samples_per_param=1)
        assert err < 1e-4


class TestVisibleMatrix:
    def test_diagonal_is_one(self, tiny_model, encoded):
        enc, _, _ = encoded
        with ad.no_grad():
            vis = tiny_model.selector.build_visible_matrix(enc)
        diag = np.diagonal(vis.cosine.data, axis1=-2, axis2=-1)
        assert np.allclose(diag, 1.0, atol=1e-12)

    def test_orthogonal_same_part_pair_is_zero(self, tiny_model, small_schema):
        t_r = small_schema.num_fields
        h = tiny_model.config.hidden_dim
        states = np.zeros((1, t_r, h))
        states[0, :, 0] = 1.0
        states[0, 1, :] = 0.0
        states[0, 1, 1] = 1.0  # orthogonal to field 0, same basic part
        enc = EncodedResume(Tensor(np.zeros((t_r, h))), Tensor(states), small_schema.part_ids())
        with ad.no_grad():
            vis = tiny_model.selector.build_visible_matrix(enc)
        assert vis.cosine.data[0, 0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_cross_part_pairs_masked(self, tiny_model, encoded, small_schema):
        enc, _, _ = encoded
        with ad.no_grad():
            vis = tiny_model.selector.build_visible_matrix(enc)
        parts = small_schema.part_ids()
        cross = parts[:, None] != parts[None, :]
        assert not vis.visible[cross].any()
        assert vis.visible[~cross].all()

    def test_zero_norm_value_state_gives_zero_similarity(self, tiny_model, small_schema):
        t_r = small_schema.num_fields
        h = tiny_model.config.hidden_dim
        states = np.ones((1, t_r, h))
        states[0, 0] = 0.0
        enc = EncodedResume(Tensor(np.zeros((t_r, h))), Tensor(states), small_schema.part_ids())
        with ad.no_grad():
            vis = tiny_model.selector.build_visible_matrix(enc)
        assert np.array_equal(vis.cosine.data[0, 0, 1:], np.zeros(t_r - 1))


class TestMaskedResumeAttention:
    def test_rows_sum_to_one_over_visible_support(self, tiny_model, encoded):
        enc, _, alpha = encoded
        assert np.allclose(alpha.data.sum(-1), 1.0, atol=1e-6)

    def test_cross_part_weights_exactly_zero(self, tiny_model, encoded, small_schema):
        _, _, alpha = encoded
        parts = small_schema.part_ids()
        cross = parts[:, None] != parts[None, :]
        assert np.array_equal(alpha.data[:, cross], np.zeros_like(alpha.data[:, cross]))

    def test_mask_isolation_bit_identical(
        self, tiny_model, small_bundle, small_vocab, small_schema
    ):
        import copy

        r = small_bundle.resumes[0]
        pos = small_schema.keys.index("experience_2")  # work_experience part
        basic_idx = [i for i, p in enumerate(small_schema.parts) if p == "basic"]
        r2 = copy.deepcopy(r)
        r2.fields[small_schema.keys.index("school")].value = ["eastfield_college"]
        r2.fields[small_schema.keys.index("age")].value = ["44"]
        a = encode_resumes([r], small_schema, small_vocab)
        b = encode_resumes([r2], small_schema, small_vocab)
        with ad.no_grad():
            _, upd_a, _ = tiny_model.encode_resume_states(a)
            _, upd_b, _ = tiny_model.encode_resume_states(b)
        exp_idx = [i for i, p in enumerate(small_schema.parts) if p != "basic"]
        assert np.array_equal(upd_a.data[0, exp_idx], upd_b.data[0, exp_idx])
        assert not np.array_equal(upd_a.data[0, basic_idx], upd_b.data[0, basic_idx])

    def test_single_visible_field_is_value_over_sqrt_d(self, tiny_model, small_schema):
        # a one-field part: alpha on it is exactly 1, update = value / sqrt(d)
        h = tiny_model.config.hidden_dim
        rng = np.random.default_rng(0)
        keys = Tensor(rng.normal(size=(3, h)))
        values = Tensor(rng.normal(size=(1, 3, h)))
        parts = np.array([0, 1, 1], dtype=np.int64)
        enc = EncodedResume(keys, values, parts)
        visible = parts[:, None] == parts[None, :]
        with ad.no_grad():
            cos = ad.cosine_matrix(values)
            vis = VisibleMatrix(cos, visible)
            updated, alpha = tiny_model.selector.masked_resume_attention(enc, vis)
        assert alpha.data[0, 0, 0] == 1.0
        expected = values.data[0, 0] / math.sqrt(h)
        assert np.allclose(updated.data[0, 0], expected, atol=1e-10)


class TestKeyValueRead:
    def test_identical_keys_give_uniform_beta(self, tiny_model, small_schema, rng):
        h = tiny_model.config.hidden_dim
        t_r = small_schema.num_fields
        keys = Tensor(np.tile(rng.normal(size=(1, h)), (t_r, 1)))
        values = Tensor(rng.normal(size=(2, t_r, h)))
        enc = EncodedResume(keys, values, small_schema.part_ids())
        queries = Tensor(rng.normal(size=(2, 3, h)))
        with ad.no_grad():
            beta, reads = tiny_model.selector.key_value_read(queries, enc, values)
        assert np.allclose(beta.data, 1.0 / t_r, atol=1e-12)

    def test_beta_rows_are_distributions(self, tiny_model, encoded, rng):
        enc, updated, _ = encoded
        queries = Tensor(rng.normal(size=(3, 4, tiny_model.config.hidden_dim)))
        with ad.no_grad():
            beta, _ = tiny_model.selector.key_value_read(queries, enc, updated)
        assert np.allclose(beta.data.sum(-1), 1.0, atol=1e-6)
        assert (beta.data >= 0).all()

    def test_one_hot_beta_reads_single_value(self, tiny_model, encoded, small_schema):
        enc, updated, _ = encoded
        t_r = small_schema.num_fields
        beta = np.zeros((1, 1, t_r))
        beta[0, 0, 5] = 1.0
        read = beta @ updated.data[:1]
        assert np.allclose(read[0, 0], updated.data[0, 5], atol=1e-12)

    def test_field_permutation_permutes_beta_and_preserves_read(
        self, tiny_model, small_schema, rng
    ):
        h = tiny_model.config.hidden_dim
        t_r = small_schema.num_fields
        keys = rng.normal(size=(t_r, h))
        values = rng.normal(size=(1, t_r, h))
        perm = rng.permutation(t_r)
        q = Tensor(rng.normal(size=(1, 1, h)))
        enc1 = EncodedResume(Tensor(keys), Tensor(values), small_schema.part_ids())
        enc2 = EncodedResume(Tensor(keys[perm]), Tensor(values[:, perm]),
                             small_schema.part_ids()[perm])
        with ad.no_grad():
            b1, m1 = tiny_model.selector.key_value_read(q, enc1, Tensor(values))
            b2, m2 = tiny_model.selector.key_value_read(q, enc2, Tensor(values[:, perm]))
        assert np.allclose(b1.data[0, 0, perm], b2.data[0, 0], atol=1e-12)
        assert np.allclose(m1.data, m2.data, atol=1e-12)


class TestJobResumeMatching:
    def test_score_strictly_inside_unit_interval(
        self, tiny_model, small_bundle, small_vocab, small_schema
    ):
        pairs = small_bundle.matching[:6]
        rmap = small_bundle.resume_by_id()
        jmap = small_bundle.jd_by_id()
        rbatch = encode_resumes([rmap[p.resume_id] for p in pairs], small_schema, small_vocab)
        jd_ids, jd_mask = encode_token_batch([jmap[p.jd_id].tokens for p in pairs], small_vocab)
        with ad.no_grad():
            out = tiny_model.matching_outcome(jd_ids, jd_mask, rbatch)
        assert np.all(out.score.data > 0.0) and np.all(out.score.data < 1.0)

    def test_loss_half_everywhere_is_ln2(self):
        from interviewgen.selector import MatchOutcome

        s = Tensor(np.full(4, 0.5))
        outcome = MatchOutcome(score=s, logit=s, jd_summary=s, read=s, beta=s)
        loss = matching_pretrain_loss(outcome, np.array([1.0, 0.0, 1.0, 0.0]))
        assert loss.item() == pytest.approx(np.log(2), rel=1e-12)

    def test_loss_approaches_zero_at_perfect_scores(self):
        from interviewgen.selector import MatchOutcome

        s = Tensor(np.array([1.0 - 1e-12, 1e-12]))
        outcome = MatchOutcome(score=s, logit=s, jd_summary=s, read=s, beta=s)
        loss = matching_pretrain_loss(outcome, np.array([1.0, 0.0]))
        assert loss.item() < 1e-9

    def test_gradient_check_matching_loss(self, small_bundle):
        vocab = build_vocabulary(
            corpus_token_streams(small_bundle.resumes, small_bundle.jds,
                                 small_bundle.grounded, small_bundle.ungrounded),
            50,
        )
        schema = ResumeSchema.from_resumes(small_bundle.resumes)
        model = InterviewModel(
            ModelConfig(embed_dim=6, hidden_dim=8, ffn_dim=12, layers=1, heads=2),
            vocab, schema, seed=6,
        )
        model.set_trainable({"selector"})
        pairs = small_bundle.matching[:2]
        rmap = small_bundle.resume_by_id()
        jmap = small_bundle.jd_by_id()
        rbatch = encode_resumes([rmap[p.resume_id] for p in pairs], schema, vocab)
        jd_ids, jd_mask = encode_token_batch([jmap[p.jd_id].tokens for p in pairs], vocab)
        labels = np.array([1.0, 0.0])

        def loss():
            return model.matching_loss(jd_ids, jd_mask, rbatch, labels)

        sel_params = {n: p for n, p in model.params.items() if p.component_tag == "selector"}
        err = gradient_check(loss, sel_params, epsilon=1e-5,
                             rng=np.random.default_rng(2), samples_per_param=1)
        assert err < 1e-3


class TestKnowledgeMemory:
    def test_one_slot_per_turn(self, tiny_model, small_bundle, small_vocab, small_schema):
        from interviewgen.corpus import encode_contexts, truncate_dialog
        from interviewgen.model import AblationFlags

        ds = [d for d in small_bundle.grounded if len(d.context) >= 3][:2]
        ctx = encode_contexts([truncate_dialog(d.context) for d in ds], small_vocab)
        rmap = small_bundle.resume_by_id()
        rbatch = encode_resumes([rmap[d.resume_id] for d in ds], small_schema, small_vocab)
        with ad.no_grad():
            summaries, _ = tiny_model.encode_context_states(ctx)
            enc, updated, _ = tiny_model.encode_resume_states(rbatch)
            mem = tiny_model.knowledge_memory(summaries, ctx.turn_mask, ctx.turn_counts, enc, updated, AblationFlags())
        assert mem.slots.shape[1] == ctx.ids.shape[1]
        assert np.array_equal(mem.slot_mask, ctx.turn_mask)
        assert np.allclose(mem.betas.data.sum(-1), 1.0, atol=1e-6)
