import numpy as np
import pytest

from interviewgen.corpus import ResumeSchema, build_vocabulary, corpus_token_streams
from interviewgen.model import InterviewModel, ModelConfig
from interviewgen.synthetic import GeneratorConfig, generate_bundle

TINY_MODEL = ModelConfig(embed_dim=12, hidden_dim=16, ffn_dim=24, layers=1, heads=2)


@pytest.fixture(scope="session")
def small_bundle():
    config = GeneratorConfig(
        seed=11,
        num_resumes=24,
        num_grounded_dialogs=160,
        num_ungrounded_dialogs=240,
        num_matching_pairs=120,
    )
    return generate_bundle(config)


@pytest.fixture(scope="session")
def small_vocab(small_bundle):
    b = small_bundle
    return build_vocabulary(
        corpus_token_streams(b.resumes, b.jds, b.grounded, b.ungrounded), 2000
    )


@pytest.fixture(scope="session")
def small_schema(small_bundle):
    return ResumeSchema.from_resumes(small_bundle.resumes)


@pytest.fixture()
def tiny_model(small_vocab, small_schema):
    return InterviewModel(TINY_MODEL, small_vocab, small_schema, seed=5)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
