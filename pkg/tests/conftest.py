"""
Shared fixtures for the titleskills test suite
"""
import logging

import numpy as np
import pytest

from src.models.encoder import EncoderConfig
from src.services.corpus_service import SynthConfig, generate_synthetic
from src.services.encoder_service import init_params
from src.services.tokenizer_service import build_vocab

SMALL_CORPUS = [
    "senior software developer",
    "python sql git docker",
    "registered nurse",
    "patient care wound care triage",
    "chef",
    "menu planning food safety knife skills",
    "data scientist",
    "machine learning statistics pandas",
]


@pytest.fixture(autouse=True)
def reset_logging():
    """CLI runs attach handlers to streams that close with the runner"""
    yield
    logging.getLogger().handlers.clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_vocab():
    return build_vocab(SMALL_CORPUS)


@pytest.fixture
def small_config(small_vocab):
    return EncoderConfig(
        vocab_size=len(small_vocab),
        hidden_dim=16,
        num_layers=2,
        num_heads=2,
        pooled_dim=8,
        init_std=0.1,
        init_seed=3,
    )


@pytest.fixture
def small_params(small_config):
    return init_params(small_config)


@pytest.fixture
def synthetic_records():
    return generate_synthetic(SynthConfig(families=4, records_per_family=5), seed=7)
