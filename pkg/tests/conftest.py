import numpy as np
import pytest

from arhate.corpus import Corpus, TweetRecord
from arhate.model import EncoderConfig, init_params
from arhate.preprocess import normalize_corpus
from arhate.toy import toy_dev, toy_train


def rec(id, a="NOT_OFF", b="NOT_HS", c="NOT_HS", text=None):
    return TweetRecord(id=str(id), text=text if text is not None else f"tweet {id}", label_a=a, label_b=b, label_c=c)


def corpus_ab(n_off, n_not_off, prefix="r", tag="primary"):
    records = [rec(f"{prefix}{i}", "OFF") for i in range(n_off)]
    records += [rec(f"{prefix}{n_off + i}", "NOT_OFF") for i in range(n_not_off)]
    return Corpus(records, source_tag=tag)


@pytest.fixture(scope="session")
def toy():
    return normalize_corpus(toy_train()), normalize_corpus(toy_dev())


@pytest.fixture
def small_config():
    return EncoderConfig(hash_buckets=64, ngram_min=2, ngram_max=3, embed_dim=6, out_dim=5, dropout_p=0.1, seed=3)


@pytest.fixture
def wide_params(small_config):
    """Small model with a larger init scale so gradients are well away from zero."""
    params = init_params(small_config)
    rng = np.random.default_rng(7)
    for arr in params.blocks().values():
        arr[...] = rng.uniform(-0.8, 0.8, size=arr.shape)
    return params


# one pass/fail line per acceptance criterion, collected by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
