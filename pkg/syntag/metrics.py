import numpy as np

METRICS = ("precision", "recall", "f1")


def summarize_runs(reports):
    """Mean and standard deviation of the span scores of repeated runs.

    Parameters
    ----------
    reports : list of syntag.spans.EvalReport
        One report per run.

    Returns
    -------
    dict
        ``{metric: (mean, std)}`` for precision, recall and F1, in
        percent. The standard deviation is the sample one (0 for a single
        run).
    """

    if not reports:
        raise ValueError("no runs to summarize")
    summary = {}
    for metric in METRICS:
        values = 100.0 * np.array([getattr(r, metric) for r in reports])
        std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        summary[metric] = (float(np.mean(values)), std)
    return summary


def format_summary(summary, label="model", n_runs=None):
    """One table row: label followed by P, R and F1 as mean ± std with one
    decimal place."""

    cells = [f"{m:.1f} ± {s:.1f}" for m, s in (summary[k] for k in METRICS)]
    runs = f" ({n_runs} runs)" if n_runs is not None else ""
    return f"{label}{runs}\t" + "\t".join(cells)


def format_table(rows):
    """A header line followed by :func:`format_summary` rows.

    Parameters
    ----------
    rows : list of tuple
        ``(label, summary, n_runs)`` per model.
    """

    lines = ["model\tP\tR\tF1"]
    lines += [format_summary(s, label, n) for label, s, n in rows]
    return "\n".join(lines)
