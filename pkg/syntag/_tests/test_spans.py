import json
from itertools import product

import numpy as np
import pytest
from monty.json import MontyDecoder, MontyEncoder

from syntag.corpus import B_AP, I_AP, O
from syntag.spans import (
    AspectSpan,
    EvalReport,
    decode_spans,
    encode_spans,
    format_predictions,
    span_f1,
    write_predictions,
)

W4 = ["w1", "w2", "w3", "w4"]


def _triples(spans):
    return [(s.text, s.begin, s.end) for s in spans]


def _reference_spans(labels):
    """Maximal runs of a B-AP followed by any mix of I-AP, closed by the
    next O or B-AP."""

    runs = []
    j = 0
    n = len(labels)
    while j < n:
        if labels[j] != B_AP:
            j += 1
            continue
        k = j + 1
        while k < n and labels[k] == I_AP:
            k += 1
        runs.append((j + 1, k + 1))
        j = k
    return runs


def test_decode_examples():
    labels = ["B-AP", "B-AP", "I-AP", "O"]
    assert _triples(decode_spans(labels, W4)) == [
        ("w1", 1, 2),
        ("w2 w3", 2, 4),
    ]
    assert decode_spans([O] * 4, W4) == []
    assert _triples(decode_spans(["O", "O", "O", "B-AP"], W4)) == [
        ("w4", 4, 5)
    ]
    assert decode_spans(["I-AP", "O"], W4[:2]) == []


def test_orphan_inside_labels_are_skipped():
    labels = [O, I_AP, I_AP, B_AP]
    assert _triples(decode_spans(labels, W4)) == [("w4", 4, 5)]
    labels = [B_AP, O, I_AP, I_AP]
    assert _triples(decode_spans(labels, W4)) == [("w1", 1, 2)]


def test_decode_length_mismatch():
    with pytest.raises(ValueError):
        decode_spans([O, O], W4)


@pytest.mark.parametrize("n", range(1, 7))
def test_decode_agrees_with_reference_on_all_sequences(n):
    tokens = [f"t{ii}" for ii in range(1, n + 1)]
    for labels in product((B_AP, I_AP, O), repeat=n):
        spans = decode_spans(list(labels), tokens)
        assert [s.key for s in spans] == _reference_spans(labels)
        begins = [s.begin for s in spans]
        assert begins == sorted(set(begins))
        for a, b in zip(spans, spans[1:]):
            assert a.end <= b.begin


@pytest.mark.parametrize("seed", range(30))
def test_encode_decode_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    size = min(n + 1, 6)
    cuts = sorted(rng.choice(np.arange(1, n + 2), size=size, replace=False))
    spans = [
        (int(a), int(b)) for a, b in zip(cuts[::2], cuts[1::2]) if b > a
    ]
    tokens = [f"t{ii}" for ii in range(1, n + 1)]
    labels = encode_spans(spans, n)
    assert [s.key for s in decode_spans(labels, tokens)] == spans


def test_encode_rejects_bad_spans():
    with pytest.raises(ValueError):
        encode_spans([(1, 6)], 4)
    with pytest.raises(ValueError):
        encode_spans([(1, 3), (2, 4)], 4)
    assert encode_spans([AspectSpan("w2 w3", 2, 4)], 4) == [O, B_AP, I_AP, O]


def test_aspect_span_validation():
    with pytest.raises(ValueError):
        AspectSpan("x", 3, 3)
    with pytest.raises(ValueError):
        AspectSpan("x", 0, 1)


def _spans(*keys):
    return [AspectSpan("x", b, e) for b, e in keys]


def test_span_f1_examples():
    report = span_f1(_spans((1, 2), (2, 4)), _spans((1, 2)))
    assert report.precision == 1.0
    assert report.recall == 0.5
    assert report.f1 == pytest.approx(2 / 3)

    same = span_f1(_spans((1, 2), (2, 4)), _spans((1, 2), (2, 4)))
    assert same.precision == same.recall == same.f1 == 1.0

    assert span_f1(_spans((1, 3)), _spans((1, 2))).f1 == 0.0


def test_empty_denominators():
    report = span_f1([], [])
    assert report.precision == report.recall == report.f1 == 1.0
    missed = span_f1(_spans((1, 2)), [])
    assert missed.precision == 1.0
    assert missed.recall == 0.0
    assert missed.f1 == 0.0
    spurious = span_f1([], _spans((1, 2)))
    assert spurious.precision == 0.0
    assert spurious.recall == 1.0


def test_reports_pool_counts():
    total = span_f1(_spans((1, 2)), _spans((1, 2), (3, 4))) + span_f1(
        _spans((2, 3), (5, 6)), []
    )
    assert (total.n_gold, total.n_predicted, total.n_matched) == (3, 2, 1)
    assert total.format() == "P=50.0 R=33.3 F1=40.0"


def test_report_serializes():
    report = EvalReport(n_gold=4, n_predicted=3, n_matched=2)
    text = json.dumps(report, cls=MontyEncoder)
    assert json.loads(text, cls=MontyDecoder) == report


def test_format_predictions(tmp_path):
    predictions = [
        [AspectSpan("hard disc", 2, 4)],
        [],
        [AspectSpan("food", 1, 2), AspectSpan("staff", 4, 5)],
    ]
    text = format_predictions(["a", "b", "c"], predictions)
    assert text == "a\t2\t4\thard disc\nc\t1\t2\tfood\nc\t4\t5\tstaff\n"
    assert format_predictions([], []) == ""
    path = tmp_path / "spans.tsv"
    write_predictions(["a", "b", "c"], predictions, path)
    assert path.read_text(encoding="utf-8") == text
