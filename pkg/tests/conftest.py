import numpy as np
import pytest

from tokencom import (
    Vocabulary,
    generate_markov_corpus,
    packetize,
    square_qam,
    train_ngram,
)


@pytest.fixture(scope="session")
def qam16():
    return square_qam(4)


@pytest.fixture(scope="session")
def qpsk():
    return square_qam(2)


@pytest.fixture(scope="session")
def bert_vocab():
    return Vocabulary(30522, mask_token_id=103)


@pytest.fixture(scope="session")
def toy_vocab():
    return Vocabulary(16)


@pytest.fixture(scope="session")
def markov_packets():
    """1000 packets of 128 tokens from the V=256, ~2-bit chain."""
    stream = generate_markov_corpus(256, 1000 * 128, transition_entropy_bits=2.0, seed=1)
    return packetize(stream, 128)


@pytest.fixture(scope="session")
def markov_bigram(markov_packets):
    return train_ngram(list(markov_packets), 256, alpha=1.0)
