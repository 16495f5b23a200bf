import numpy as np
import pytest

from syntag._tests.conftest import make_model, make_sentence
from syntag.logger import logger, logger_testing_mode
from syntag.pipeline import ModelConfig, predict
from syntag.storage import (
    MAGIC,
    ModelFileError,
    load_model,
    model_from_bytes,
    model_to_bytes,
    save_model,
)
from syntag.synthetic import random_sentence


def _same_parameters(a, b):
    pa, pb = a.parameters(), b.parameters()
    assert list(pa) == list(pb)
    return all(np.array_equal(pa[k].data, pb[k].data) for k in pa)


@pytest.mark.parametrize("ablation", ["full", "dtree-down", "bilstm-crf"])
def test_round_trip_predicts_identically(synthetic_corpus, tmp_path, ablation):
    model = make_model(synthetic_corpus, dim=4, variant=2, ablation=ablation)
    path = tmp_path / "model.bin"
    save_model(model, path)
    loaded = load_model(path)

    assert loaded.config == model.config
    assert loaded.vocabulary == model.vocabulary
    assert _same_parameters(model, loaded)

    rng = np.random.default_rng(0)
    sentences = [
        random_sentence(int(rng.integers(1, 12)), rng, labeled=False)
        for _ in range(100)
    ]
    before = [[s.key for s in spans] for spans in predict(model, sentences)]
    after = [[s.key for s in spans] for spans in predict(loaded, sentences)]
    assert before == after


def test_words_that_look_like_section_headers():
    sentence = make_sentence(
        [("[words] 1", 2, "nsubj", "B-AP"), ("[config] 0", 0, "root", "O")]
    )
    model = make_model([sentence], dim=2)
    loaded = model_from_bytes(model_to_bytes(model))
    assert loaded.vocabulary.words == model.vocabulary.words
    assert _same_parameters(model, loaded)


def test_file_starts_with_magic(synthetic_corpus):
    data = model_to_bytes(make_model(synthetic_corpus[:3], dim=2))
    assert data.startswith(MAGIC)


def test_tampered_byte_fails_checksum(synthetic_corpus):
    data = bytearray(model_to_bytes(make_model(synthetic_corpus[:3], dim=2)))
    data[len(data) // 2] ^= 0x01
    with pytest.raises(ModelFileError, match="checksum"):
        model_from_bytes(bytes(data))


def test_bad_magic_and_version(synthetic_corpus):
    data = model_to_bytes(make_model(synthetic_corpus[:3], dim=2))
    with pytest.raises(ModelFileError, match="not a syntag model"):
        model_from_bytes(b"X" + data[1:])
    bumped = data[: len(MAGIC)] + (99).to_bytes(4, "little") + data[12:]
    with pytest.raises(ModelFileError, match="version 99"):
        model_from_bytes(bumped)


def test_truncated_file(synthetic_corpus, tmp_path):
    data = model_to_bytes(make_model(synthetic_corpus[:3], dim=2))
    with pytest.raises(ModelFileError):
        model_from_bytes(data[:-40])
    with pytest.raises(ModelFileError, match="truncated"):
        model_from_bytes(data[:20])
    with pytest.raises(ModelFileError):
        load_model(tmp_path / "missing.bin")


def test_file_configuration_wins(synthetic_corpus, tmp_path):
    model = make_model(synthetic_corpus[:3], dim=3)
    path = tmp_path / "model.bin"
    save_model(model, path)
    requested = ModelConfig(dim=7, seed=model.config.seed)
    with logger_testing_mode():
        with pytest.warns(UserWarning, match="DUMMY WARNING"):
            loaded = load_model(path, requested)
    assert loaded.config.dim == 3
    assert _same_parameters(model, loaded)


def test_only_requested_values_are_compared(synthetic_corpus, tmp_path):
    model = make_model(synthetic_corpus[:3], dim=3, lr=0.01)
    path = tmp_path / "model.bin"
    save_model(model, path)
    messages = []
    sink = logger.add(messages.append, level="WARNING", format="{message}")
    try:
        load_model(path, {"dim": 3})
        assert messages == []
        loaded = load_model(path, {"dim": 5})
    finally:
        logger.remove(sink)
    assert loaded.config.lr == 0.01
    assert len(messages) == 1
    assert messages[0].strip().endswith("requested values of dim")
