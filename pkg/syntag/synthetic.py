"""Synthetic labelled corpora for tests, demos and gradient checks.

Template sentences put aspect terms into a handful of syntactic positions
(nominal subject, object, conjunct, nominal modifier) with multiword terms
built from compounds, so that the label of a word is recoverable from its
position in the tree.
"""

import numpy as np

from syntag.corpus import LABELS, DepTree, LabeledSentence, Token
from syntag.utils import make_rng

SINGLE_ASPECTS = (
    "screen",
    "keyboard",
    "battery",
    "price",
    "service",
    "food",
    "staff",
    "menu",
)
COMPOUND_ASPECTS = (
    ("hard", "disc"),
    ("battery", "life"),
    ("touch", "pad"),
    ("wine", "list"),
    ("operating", "system"),
)
ADJECTIVES = ("great", "slow", "terrible", "fast", "nice", "awful")
VERBS = ("love", "hate", "like", "recommend")
RELATIONS = ("nsubj", "obj", "det", "amod", "nmod", "case", "conj", "advmod")


class _Builder:
    def __init__(self):
        self.rows = []

    def word(self, surface, label="O"):
        self.rows.append([surface, None, None, label])
        return len(self.rows)

    def aspect(self, words):
        """Adds a term whose last word heads the others; returns the index
        of the head word."""

        indices = [
            self.word(w, "B-AP" if k == 0 else "I-AP")
            for k, w in enumerate(words)
        ]
        head = indices[-1]
        for index in indices[:-1]:
            self.attach(index, head, "compound")
        return head

    def attach(self, index, head, relation):
        self.rows[index - 1][1] = head
        self.rows[index - 1][2] = relation

    def build(self, sent_id):
        tokens = [
            Token(ii, surface, head, relation, label)
            for ii, (surface, head, relation, label) in enumerate(
                self.rows, start=1
            )
        ]
        return LabeledSentence(tree=DepTree(tokens), sent_id=sent_id)


def _pick(rng, options):
    return options[int(rng.integers(len(options)))]


def _term(rng):
    if rng.random() < 0.4:
        return _pick(rng, COMPOUND_ASPECTS)
    return (_pick(rng, SINGLE_ASPECTS),)


def _subject_template(rng, b):
    # the <term> is <adj>
    det = b.word("the")
    term = b.aspect(_term(rng))
    cop = b.word("is")
    adj = b.word(_pick(rng, ADJECTIVES))
    b.attach(det, term, "det")
    b.attach(term, adj, "nsubj")
    b.attach(cop, adj, "cop")
    b.attach(adj, 0, "root")


def _object_template(rng, b):
    # i <verb> the <term>
    subj = b.word("i")
    verb = b.word(_pick(rng, VERBS))
    det = b.word("the")
    term = b.aspect(_term(rng))
    b.attach(subj, verb, "nsubj")
    b.attach(verb, 0, "root")
    b.attach(det, term, "det")
    b.attach(term, verb, "obj")


def _conjunction_template(rng, b):
    # the <term> and <term> are <adj>
    det = b.word("the")
    first = b.aspect(_term(rng))
    cc = b.word("and")
    second = b.aspect(_term(rng))
    cop = b.word("are")
    adj = b.word(_pick(rng, ADJECTIVES))
    b.attach(det, first, "det")
    b.attach(first, adj, "nsubj")
    b.attach(cc, second, "cc")
    b.attach(second, first, "conj")
    b.attach(cop, adj, "cop")
    b.attach(adj, 0, "root")


def _modifier_template(rng, b):
    # speaking of the <term> , it is <adj>
    speaking = b.word("speaking")
    of = b.word("of")
    det = b.word("the")
    term = b.aspect(_term(rng))
    comma = b.word(",")
    it = b.word("it")
    cop = b.word("is")
    adj = b.word(_pick(rng, ADJECTIVES))
    b.attach(speaking, adj, "advcl")
    b.attach(of, term, "case")
    b.attach(det, term, "det")
    b.attach(term, speaking, "nmod")
    b.attach(comma, adj, "punct")
    b.attach(it, adj, "nsubj")
    b.attach(cop, adj, "cop")
    b.attach(adj, 0, "root")


def _no_aspect_template(rng, b):
    # it was <adj>
    it = b.word("it")
    cop = b.word("was")
    adj = b.word(_pick(rng, ADJECTIVES))
    b.attach(it, adj, "nsubj")
    b.attach(cop, adj, "cop")
    b.attach(adj, 0, "root")


TEMPLATES = (
    _subject_template,
    _object_template,
    _conjunction_template,
    _modifier_template,
    _no_aspect_template,
)


def template_corpus(n, seed=0):
    """``n`` template sentences; the same seed always gives the same
    corpus."""

    rng = make_rng(seed)
    corpus = []
    for ii in range(n):
        builder = _Builder()
        _pick(rng, TEMPLATES)(rng, builder)
        corpus.append(builder.build(str(ii + 1)))
    return corpus


def random_tree(n, rng):
    """Heads of a uniformly attached random tree over ``n`` tokens: tokens
    are visited in random order and each one after the first attaches to
    an already visited token."""

    order = rng.permutation(np.arange(1, n + 1))
    heads = [0] * n
    for k in range(1, n):
        heads[order[k] - 1] = int(order[rng.integers(k)])
    return heads


def random_sentence(n, rng, relations=RELATIONS, labeled=True, sent_id="1"):
    """A sentence with a random tree, relations and (optionally) labels."""

    words = SINGLE_ASPECTS + ADJECTIVES + VERBS
    heads = random_tree(n, rng)
    tokens = []
    for ii, head in enumerate(heads, start=1):
        tokens.append(
            Token(
                ii,
                _pick(rng, words),
                head,
                "root" if head == 0 else _pick(rng, relations),
                _pick(rng, LABELS) if labeled else None,
            )
        )
    return LabeledSentence(tree=DepTree(tokens), sent_id=sent_id)


def gradcheck_sentence():
    """Five tokens with a branching tree of depth 3, used by the gradient
    check command and tests."""

    rows = [
        ("Keyboard", 2, "nsubj", "B-AP"),
        ("responds", 0, "root", "O"),
        ("well", 2, "advmod", "O"),
        ("to", 5, "case", "O"),
        ("presses", 2, "nmod", "O"),
    ]
    tokens = [
        Token(ii, surface, head, relation, label)
        for ii, (surface, head, relation, label) in enumerate(rows, start=1)
    ]
    return LabeledSentence(tree=DepTree(tokens), sent_id="gradcheck")
