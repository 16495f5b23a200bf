import numpy as np
import pytest

from syntag.corpus import (
    DepTree,
    LabeledSentence,
    Token,
    Vocabulary,
    random_embeddings,
)
from syntag.pipeline import ModelConfig, build_model
from syntag.synthetic import template_corpus

BROWSER_ROWS = [
    ("Speaking", 8, "advcl", "O"),
    ("of", 4, "case", "O"),
    ("the", 4, "det", "O"),
    ("browser", 1, "nmod", "B-AP"),
    (",", 8, "punct", "O"),
    ("it", 8, "nsubj", "O"),
    ("too", 8, "advmod", "O"),
    ("has", 0, "root", "O"),
    ("problems", 8, "obj", "O"),
    (".", 8, "punct", "O"),
]


def make_sentence(rows, sent_id="1"):
    """Sentence from ``(surface, head, relation, label)`` rows."""

    tokens = [
        Token(ii, surface, head, relation, label)
        for ii, (surface, head, relation, label) in enumerate(rows, start=1)
    ]
    return LabeledSentence(tree=DepTree(tokens), sent_id=sent_id)


def tree_from_heads(heads, relation="dep"):
    rows = [(f"w{ii}", h, relation, "O") for ii, h in enumerate(heads, 1)]
    return make_sentence(rows).tree


def make_model(corpus, seed=0, **kwargs):
    config = ModelConfig(seed=seed, **kwargs)
    vocabulary = Vocabulary.build(corpus)
    embeddings = random_embeddings(
        vocabulary, config.dim, np.random.default_rng(seed)
    )
    return build_model(config, vocabulary, embeddings)


@pytest.fixture
def browser_sentence():
    return make_sentence(BROWSER_ROWS)


@pytest.fixture
def chain_tree():
    # 3 -> 2 -> 1 -> ROOT
    return tree_from_heads([0, 1, 2])


@pytest.fixture
def star_tree():
    return tree_from_heads([0, 1, 1, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic_corpus():
    return template_corpus(50, seed=1)
