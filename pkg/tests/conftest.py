import numpy as np
import pytest

from genret.corpus import generate_synthetic_corpus
from genret.model.config import ModelConfig
from genret.model.params import init_params


@pytest.fixture(scope="session")
def tiny_cfg():
    return ModelConfig(D=8, L=4, V=8, n_layers=2, n_heads=2, token_vocab=40,
                       max_seq_len=12, d_ff=16)


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_params(tiny_cfg, seed=0)


@pytest.fixture(scope="session")
def small_synth():
    """50-doc synthetic instance shared by read-only tests."""
    return generate_synthetic_corpus(n_docs=50, n_queries=20, n_topics=5, dim=8, seed=11)


def random_tokens(rng, cfg, n=None):
    n = n or int(rng.integers(3, cfg.max_seq_len + 1))
    return rng.integers(0, cfg.token_vocab, size=n)
