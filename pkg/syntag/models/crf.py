"""Linear-chain CRF with per-label-pair potentials.

The log-potential of moving from label ``y'`` to label ``y`` at position j
is ``w[y', y] . g_j + b[y', y]`` where ``g_j`` is the projected score
vector of the token. ``y'`` ranges over the labels plus a virtual START
label used at the first position; there is no STOP potential.

The ``(|T| + 1) * |T|`` weight vectors are the rows of one matrix, so that
all pair scores of a position are a single matrix-vector product reshaped
into a ``(|T| + 1) x |T|`` table whose last row belongs to START.
"""

from itertools import product

import numpy as np
from attrs import define, field
from attrs.validators import instance_of

from syntag.autodiff import (
    ShapeError,
    Value,
    add,
    add_n,
    logsumexp,
    matvec,
    reshape,
    select,
    sub,
)
from syntag.corpus import I_AP, LABELS, O
from syntag.models.initializers import glorot_uniform, zeros

N_LABELS = len(LABELS)
START = N_LABELS
MAX_BRUTE_FORCE_LENGTH = 10


@define(kw_only=True)
class CrfParams:
    W = field(validator=instance_of(Value))
    B = field(validator=instance_of(Value))

    @property
    def n_labels(self):
        return self.B.shape[1]

    def named_parameters(self):
        return {self.W.name: self.W, self.B.name: self.B}

    def biases(self):
        return [self.B]


def init_crf(rng, n_labels=N_LABELS):
    return CrfParams(
        W=glorot_uniform(
            rng, (n_labels + 1) * n_labels, n_labels, name="crf.W"
        ),
        B=zeros((n_labels + 1, n_labels), name="crf.B"),
    )


def _check_label(y, n, allow_start=False):
    upper = n + 1 if allow_start else n
    if not 0 <= int(y) < upper:
        raise ValueError(f"invalid label id {y}")


def _data(g):
    return g.data if isinstance(g, Value) else np.asarray(g, dtype=np.float64)


def pair_score(y_prev, y, g, params):
    """Log-potential of the pair ``(y_prev, y)`` given the score vector
    ``g``; ``y_prev`` may be :data:`START`."""

    n = params.n_labels
    _check_label(y_prev, n, allow_start=True)
    _check_label(y, n)
    g = _data(g)
    if g.shape != (n,):
        raise ShapeError(f"pair_score: features {g.shape}, expected {(n,)}")
    w = params.W.data[y_prev * n + y]
    return float(w @ g + params.B.data[y_prev, y])


def score_table(g, params):
    """All pair log-potentials at one position as a ``(|T|+1, |T|)``
    value."""

    n = params.n_labels
    return add(reshape(matvec(params.W, g), (n + 1, n)), params.B)


def _tables(features, params):
    if len(features) == 0:
        raise ValueError("empty label sequence")
    return [score_table(g, params) for g in features]


def _forward(tables, n):
    alpha = select(tables[0], START)
    for table in tables[1:]:
        prev = reshape(alpha, (n, 1))
        alpha = logsumexp(add(prev, select(table, slice(0, n))), axis=0)
    return logsumexp(alpha)


def log_partition(features, params):
    """Log of the summed potentials over all label sequences, by the
    forward recursion in log space.

    Parameters
    ----------
    features : Sequence[Value]
        One ``|T|``-vector per position.
    params : CrfParams

    Returns
    -------
    Value
        A scalar.
    """

    return _forward(_tables(features, params), params.n_labels)


def log_likelihood(features, labels, params):
    """``log p(labels | features)`` as a differentiable scalar."""

    if len(labels) != len(features):
        raise ValueError(
            f"{len(labels)} labels for a sequence of length {len(features)}"
        )
    tables = _tables(features, params)
    n = params.n_labels
    gold = []
    prev = START
    for table, y in zip(tables, labels):
        _check_label(y, n)
        gold.append(select(table, (prev, int(y))))
        prev = int(y)
    return sub(add_n(gold), _forward(tables, n))


def _numeric_tables(features, params):
    if len(features) == 0:
        raise ValueError("empty label sequence")
    n = params.n_labels
    W, B = params.W.data, params.B.data
    return [(W @ _data(g)).reshape(n + 1, n) + B for g in features]


def sequence_score(features, labels, params):
    """Unnormalized log score of one label sequence."""

    total = 0.0
    prev = START
    for table, y in zip(_numeric_tables(features, params), labels):
        total += table[prev, y]
        prev = y
    return float(total)


def viterbi(features, params):
    """Highest-scoring label sequence and its unnormalized log score.

    Ties are broken toward the smaller label id at every step.

    Returns
    -------
    tuple
        ``(labels, score)`` with ``labels`` a list of label ids.
    """

    n = params.n_labels
    tables = _numeric_tables(features, params)
    delta = tables[0][START].copy()
    backpointers = []
    for table in tables[1:]:
        candidates = delta[:, None] + table[:n]
        best = np.argmax(candidates, axis=0)
        delta = candidates[best, np.arange(n)]
        backpointers.append(best)

    last = int(np.argmax(delta))
    path = [last]
    for best in reversed(backpointers):
        path.append(int(best[path[-1]]))
    path.reverse()
    return path, float(delta[last])


def _enumerate(features, params):
    if len(features) > MAX_BRUTE_FORCE_LENGTH:
        raise ValueError(
            f"brute force limited to {MAX_BRUTE_FORCE_LENGTH} positions, "
            f"got {len(features)}"
        )
    tables = _numeric_tables(features, params)
    n = params.n_labels
    for labels in product(range(n), repeat=len(tables)):
        total = 0.0
        prev = START
        for table, y in zip(tables, labels):
            total += table[prev, y]
            prev = y
        yield list(labels), total


def brute_force_log_partition(features, params):
    scores = np.array([score for _, score in _enumerate(features, params)])
    m = scores.max()
    return float(m + np.log(np.sum(np.exp(scores - m))))


def brute_force_best(features, params):
    """Exhaustive argmax; the lexicographically first maximizer wins."""

    best, best_score = None, -np.inf
    for labels, score in _enumerate(features, params):
        if score > best_score:
            best, best_score = labels, score
    return best, float(best_score)


def strict_bio_violations(labels):
    """Positions (0-based) of ``I-AP`` labels that follow ``O`` or open
    the sentence. Diagnostic only: decoding never enforces strict BIO."""

    violations = []
    prev = O
    for j, y in enumerate(labels):
        if y == I_AP and prev == O:
            violations.append(j)
        prev = y
    return violations
