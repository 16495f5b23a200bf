"""Aspect term spans: decoding BIO label sequences into triples, the
reverse encoding, and exact-match span scoring."""

from attrs import define, field, frozen
from attrs.validators import ge, instance_of
from monty.json import MSONable

from syntag.corpus import B_AP, I_AP, LABEL_IDS, O


@frozen
class AspectSpan:
    """An extracted term covering tokens ``begin`` (1-based, inclusive) up
    to ``end`` (exclusive)."""

    text = field(validator=instance_of(str))
    begin = field(validator=[instance_of(int), ge(1)])
    end = field(validator=instance_of(int))

    def __attrs_post_init__(self):
        if self.end <= self.begin:
            raise ValueError(f"empty span [{self.begin}, {self.end})")

    @property
    def key(self):
        return self.begin, self.end


def _label_id(label):
    return LABEL_IDS[label] if isinstance(label, str) else int(label)


def decode_spans(labels, tokens):
    """Aspect triples of a label sequence.

    A span opens at ``B-AP`` and runs until the next ``O`` or ``B-AP`` (or
    the end of the sentence); ``I-AP`` neither opens nor closes a span, so
    an ``I-AP`` outside a span is skipped.

    Parameters
    ----------
    labels : Sequence[int or str]
        Label ids or label strings.
    tokens : Sequence[str]
        Surface forms.

    Returns
    -------
    list of AspectSpan
    """

    if len(labels) != len(tokens):
        raise ValueError(
            f"{len(labels)} labels for {len(tokens)} tokens"
        )

    spans = []
    start = 0

    def emit(end):
        text = " ".join(tokens[start - 1 : end - 1])
        spans.append(AspectSpan(text=text, begin=start, end=end))

    for i, label in enumerate(labels, start=1):
        label = _label_id(label)
        if label == O and start:
            emit(i)
            start = 0
        elif label == B_AP:
            if start:
                emit(i)
            start = i
    if start:
        emit(len(labels) + 1)
    return spans


def encode_spans(spans, n):
    """BIO label ids of disjoint spans over a sentence of ``n`` tokens."""

    labels = [O] * n
    for span in spans:
        begin, end = span.key if isinstance(span, AspectSpan) else span
        if not 1 <= begin < end <= n + 1:
            raise ValueError(f"span [{begin}, {end}) outside [1, {n + 1})")
        if any(labels[j - 1] != O for j in range(begin, end)):
            raise ValueError(f"span [{begin}, {end}) overlaps another span")
        labels[begin - 1] = B_AP
        for j in range(begin + 1, end):
            labels[j - 1] = I_AP
    return labels


@define
class EvalReport(MSONable):
    """Exact-match span scores.

    With no predicted spans precision is 1, with no gold spans recall is
    1; F1 is 0 when both precision and recall are 0.

    Parameters
    ----------
    n_gold, n_predicted, n_matched : int
    """

    n_gold = field(default=0, validator=[instance_of(int), ge(0)])
    n_predicted = field(default=0, validator=[instance_of(int), ge(0)])
    n_matched = field(default=0, validator=[instance_of(int), ge(0)])

    @property
    def precision(self):
        if self.n_predicted == 0:
            return 1.0
        return self.n_matched / self.n_predicted

    @property
    def recall(self):
        if self.n_gold == 0:
            return 1.0
        return self.n_matched / self.n_gold

    @property
    def f1(self):
        p, r = self.precision, self.recall
        if p + r == 0:
            return 0.0
        return 2 * p * r / (p + r)

    def __add__(self, other):
        return EvalReport(
            n_gold=self.n_gold + other.n_gold,
            n_predicted=self.n_predicted + other.n_predicted,
            n_matched=self.n_matched + other.n_matched,
        )

    def format(self):
        """Percentages to one decimal place."""

        return (
            f"P={100 * self.precision:.1f} R={100 * self.recall:.1f} "
            f"F1={100 * self.f1:.1f}"
        )


def span_f1(gold, predicted):
    """Scores the predicted spans of one sentence against the gold ones;
    a prediction matches when its (begin, end) equals a gold span."""

    gold_keys = {s.key for s in gold}
    predicted_keys = {s.key for s in predicted}
    return EvalReport(
        n_gold=len(gold_keys),
        n_predicted=len(predicted_keys),
        n_matched=len(gold_keys & predicted_keys),
    )


def format_predictions(sent_ids, predictions):
    """``SENT_ID<TAB>BEGIN<TAB>END<TAB>TEXT`` lines, one per span."""

    lines = []
    for sent_id, spans in zip(sent_ids, predictions):
        for span in spans:
            lines.append(f"{sent_id}\t{span.begin}\t{span.end}\t{span.text}")
    return "".join(line + "\n" for line in lines)


def write_predictions(sent_ids, predictions, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_predictions(sent_ids, predictions))
