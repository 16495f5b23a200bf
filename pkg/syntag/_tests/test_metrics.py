import pytest

from syntag.metrics import format_summary, format_table, summarize_runs
from syntag.spans import EvalReport


def test_summarize_runs():
    reports = [
        EvalReport(n_gold=4, n_predicted=4, n_matched=2),
        EvalReport(n_gold=4, n_predicted=2, n_matched=2),
    ]
    summary = summarize_runs(reports)
    assert summary["precision"][0] == pytest.approx(75.0)
    assert summary["precision"][1] == pytest.approx(35.35533905932738)
    assert summary["recall"] == pytest.approx((50.0, 0.0))


def test_single_run_has_zero_spread():
    report = EvalReport(n_gold=2, n_predicted=2, n_matched=1)
    summary = summarize_runs([report])
    assert summary["f1"] == (50.0, 0.0)
    with pytest.raises(ValueError):
        summarize_runs([])


def test_format_table():
    summary = {
        "precision": (80.0, 1.25),
        "recall": (70.0, 0.0),
        "f1": (74.66, 0.5),
    }
    row = format_summary(summary, "full#3", 5)
    assert row == "full#3 (5 runs)\t80.0 ± 1.2\t70.0 ± 0.0\t74.7 ± 0.5"
    table = format_table([("full#3", summary, 5)]).splitlines()
    assert table == ["model\tP\tR\tF1", row]
