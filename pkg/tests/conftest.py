import numpy as np
import pytest

from ctrsgen.corpus import encode_quadruple
from ctrsgen.params import init_params
from ctrsgen.synthetic import make_corpus
from ctrsgen.verify import tiny_instance


@pytest.fixture
def tiny():
    quad, vocab = tiny_instance()
    return quad, vocab, encode_quadruple(quad, vocab)


@pytest.fixture
def tiny_params(tiny):
    _, vocab, _ = tiny
    return init_params(len(vocab), embedding_dim=5, hidden=4, init_range=0.5, seed=3, dtype=np.float64)


@pytest.fixture
def toy_corpus():
    return make_corpus(12, seed=5)
