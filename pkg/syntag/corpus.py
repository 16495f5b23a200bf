"""Reading, validating and indexing dependency-parsed, BIO-labelled corpora
and pretrained word vectors.

Corpus files are UTF-8 text with one token per line and TAB-separated
columns ``INDEX SURFACE HEAD RELATION [LABEL]``. A blank line ends a
sentence and lines starting with ``#`` are comments; a comment of the form
``# sent_id = X`` names the sentence that follows it. HEAD is 0 for the
root token.

Embedding files use the word2vec text format: a ``<count> <dim>`` header
followed by ``<word> <f1> ... <fd>`` lines.
"""

import re
from io import StringIO
from pathlib import Path

import numpy as np
from attrs import define, field, frozen
from attrs.validators import ge, instance_of, optional

from syntag.logger import logger

LABELS = ("B-AP", "I-AP", "O")
LABEL_IDS = {label: ii for ii, label in enumerate(LABELS)}
B_AP, I_AP, O = 0, 1, 2

INVERSE_PREFIX = "I-"
UNK = "<unk>"
ROOT_INVERSE = "I-root"

SENT_ID_PATTERN = re.compile(r"^#\s*sent_id\s*=\s*(.*?)\s*$")


class CorpusError(ValueError):
    """A problem in a corpus (or embedding) file, tied to a line."""

    def __init__(self, message, line=None, source="<stream>"):
        self.message = message
        self.line = line
        self.source = source
        where = source if line is None else f"{source}:{line}"
        super().__init__(f"{where}: {message}")


class EmbeddingError(CorpusError):
    pass


class TreeError(ValueError):
    """A dependency tree violating the single-rooted tree invariants.

    Attributes
    ----------
    kind : str
        One of ``head-range``, ``self-loop``, ``no-root``, ``multi-root``,
        ``cycle`` or ``unreachable``.
    indices : tuple of int
        The offending 1-based token indices.
    """

    def __init__(self, kind, indices, message=None):
        self.kind = kind
        self.indices = tuple(int(ii) for ii in indices)
        if message is None:
            message = f"{kind} at token(s) {list(self.indices)}"
        super().__init__(message)


def _label_validator(instance, attribute, value):
    if value is not None and value not in LABEL_IDS:
        raise ValueError(f"label must be one of {LABELS} or None, got {value}")


@frozen
class Token:
    index = field(validator=[instance_of(int), ge(1)])
    surface = field(validator=instance_of(str))
    head = field(validator=[instance_of(int), ge(0)])
    relation = field(validator=instance_of(str))
    label = field(default=None, validator=_label_validator)


@frozen
class DepTree:
    """A dependency tree over the tokens of one sentence.

    ``children[p]`` lists the dependents of token ``p`` (``p = 0`` is the
    virtual ROOT) as ``(child index, relation)`` pairs in ascending child
    order. Construction does not validate; see :func:`validate_tree`.
    """

    tokens = field(converter=tuple)
    children = field(init=False, eq=False, repr=False)

    def __attrs_post_init__(self):
        n = len(self.tokens)
        children = [[] for _ in range(n + 1)]
        for token in self.tokens:
            if 0 <= token.head <= n:
                children[token.head].append((token.index, token.relation))
        children = tuple(tuple(sorted(c)) for c in children)
        object.__setattr__(self, "children", children)

    @property
    def n(self):
        return len(self.tokens)

    @property
    def root(self):
        """Index of the first token attached to ROOT (None if there is
        none)."""

        roots = self.children[0]
        return roots[0][0] if roots else None

    def token(self, index):
        return self.tokens[index - 1]

    def head(self, index):
        return self.tokens[index - 1].head

    def dependents(self, index):
        return self.children[index]

    def depth(self):
        """Number of nodes on the longest root-to-leaf path."""

        depth = {}
        for node in top_down_order(self):
            head = self.head(node)
            depth[node] = 1 if head == 0 else depth[head] + 1
        return max(depth.values(), default=0)


@frozen
class LabeledSentence:
    tree = field(validator=instance_of(DepTree))
    sent_id = field(default="1", converter=str)

    @property
    def tokens(self):
        return self.tree.tokens

    @property
    def words(self):
        return [t.surface for t in self.tree.tokens]

    @property
    def is_labeled(self):
        return all(t.label is not None for t in self.tree.tokens)

    @property
    def labels(self):
        """Gold label strings, or None for unlabeled sentences."""

        if not self.is_labeled:
            return None
        return [t.label for t in self.tree.tokens]

    @property
    def label_ids(self):
        if not self.is_labeled:
            return None
        return [LABEL_IDS[t.label] for t in self.tree.tokens]

    def __len__(self):
        return self.tree.n


def validate_tree(tree):
    """Checks that ``tree`` is a single-rooted tree over its tokens.

    Returns None when every invariant holds and raises :class:`TreeError`
    naming the offending indices otherwise.
    """

    n = tree.n
    for token in tree.tokens:
        if not 0 <= token.head <= n:
            raise TreeError(
                "head-range",
                [token.index],
                f"head {token.head} of token {token.index} outside [0, {n}]",
            )
        if token.head == token.index:
            raise TreeError("self-loop", [token.index])

    roots = [idx for idx, _ in tree.children[0]]
    if len(roots) > 1:
        raise TreeError("multi-root", roots)

    reached = set()
    stack = list(roots)
    while stack:
        node = stack.pop()
        reached.add(node)
        stack.extend(child for child, _ in tree.children[node])

    unreached = sorted(set(range(1, n + 1)) - reached)
    if unreached:
        cycle = _find_cycle(tree, unreached[0])
        if cycle:
            raise TreeError("cycle", sorted(cycle))
        raise TreeError("unreachable", unreached)

    if not roots:
        raise TreeError("no-root", [])


def _find_cycle(tree, start):
    """Follows head links from ``start`` and returns the set of nodes on
    the cycle it runs into, or an empty set if it reaches ROOT."""

    position = {}
    path = []
    node = start
    while node != 0 and node not in position:
        position[node] = len(path)
        path.append(node)
        node = tree.head(node)
    if node == 0:
        return set()
    return set(path[position[node] :])


def bottom_up_order(tree):
    """Post-order over a valid tree: children in ascending index before
    their head, the root last."""

    order = []
    stack = [(tree.root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        stack.append((node, True))
        for child, _ in reversed(tree.children[node]):
            stack.append((child, False))
    return order


def top_down_order(tree):
    """Pre-order over a valid tree: the root first, every node before its
    dependents, siblings in ascending index."""

    order = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        order.append(node)
        for child, _ in reversed(tree.children[node]):
            stack.append(child)
    return order


def inverse_relation(rel):
    """Name of the top-down (head-to-dependent reversed) relation."""

    return INVERSE_PREFIX + rel


def _build_sentence(rows, sent_id, source):
    """Turns a block of ``(line number, columns)`` rows into a validated
    sentence, raising :class:`CorpusError` at the first bad line."""

    width = None
    parsed = []
    for position, (line_no, cols) in enumerate(rows, start=1):
        if len(cols) not in (4, 5):
            raise CorpusError(
                f"expected 4 or 5 tab-separated columns, found {len(cols)}",
                line_no,
                source,
            )
        if width is None:
            width = len(cols)
        elif len(cols) != width:
            raise CorpusError(
                "label column present on some tokens of the sentence only",
                line_no,
                source,
            )

        try:
            index = int(cols[0])
            head = int(cols[2])
        except ValueError:
            raise CorpusError(
                f"INDEX and HEAD must be integers, got {cols[0]!r} and "
                f"{cols[2]!r}",
                line_no,
                source,
            )
        if index != position:
            raise CorpusError(
                f"token index {index} out of sequence, expected {position}",
                line_no,
                source,
            )

        surface, relation = cols[1], cols[3]
        if not surface:
            raise CorpusError("empty SURFACE column", line_no, source)
        if not relation:
            raise CorpusError("empty RELATION column", line_no, source)
        if relation.startswith(INVERSE_PREFIX):
            raise CorpusError(
                f"relation {relation!r} uses the reserved prefix "
                f"{INVERSE_PREFIX!r}",
                line_no,
                source,
            )

        label = None
        if width == 5:
            label = cols[4]
            if label not in LABEL_IDS:
                raise CorpusError(
                    f"invalid label {label!r}, expected one of {LABELS}",
                    line_no,
                    source,
                )
        parsed.append((line_no, index, surface, head, relation, label))

    n = len(parsed)
    for line_no, index, _, head, _, _ in parsed:
        if not 0 <= head <= n:
            raise CorpusError(
                f"head {head} out of range [0, {n}]", line_no, source
            )
        if head == index:
            raise CorpusError(
                f"self-loop: token {index} is its own head", line_no, source
            )

    tokens = [Token(ii, s, h, r, lab) for _, ii, s, h, r, lab in parsed]
    tree = DepTree(tokens)
    try:
        validate_tree(tree)
    except TreeError as err:
        first = err.indices[0] if err.indices else 1
        raise CorpusError(
            f"{err.kind} at token(s) {list(err.indices)}",
            parsed[first - 1][0],
            source,
        ) from err
    return LabeledSentence(tree=tree, sent_id=sent_id)


def parse_corpus(stream, source="<stream>"):
    """Parses a corpus from a text stream (any iterable of lines).

    Parameters
    ----------
    stream : Iterable[str]
        An open text file, a ``StringIO`` or a list of lines.
    source : str, optional
        Name used in error messages.

    Returns
    -------
    list of LabeledSentence

    Raises
    ------
    CorpusError
        On malformed lines and invalid trees, with the line number.
    """

    if isinstance(stream, str):
        stream = StringIO(stream)

    sentences = []
    rows = []
    sent_id = None

    def flush():
        nonlocal rows, sent_id
        name = sent_id if sent_id is not None else str(len(sentences) + 1)
        sentences.append(_build_sentence(rows, name, source))
        rows = []
        sent_id = None

    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if line.startswith("#"):
            match = SENT_ID_PATTERN.match(line)
            if match and not rows:
                sent_id = match.group(1)
            continue
        if not line.strip():
            if rows:
                flush()
            continue
        rows.append((line_no, line.split("\t")))

    if rows:
        flush()

    logger.debug(f"Parsed {len(sentences)} sentences from {source}")
    return sentences


def decoded_lines(f, source, error=CorpusError):
    """Decodes the lines of a binary file as UTF-8, raising ``error`` with
    the line number on the first invalid one."""

    for line_no, raw in enumerate(f, start=1):
        try:
            yield raw.decode("utf-8")
        except UnicodeDecodeError as err:
            raise error(
                f"invalid UTF-8 byte 0x{raw[err.start]:02x} at column "
                f"{err.start + 1}",
                line_no,
                source,
            ) from None


def read_corpus(path):
    """Reads a corpus file. See :func:`parse_corpus`."""

    with open(path, "rb") as f:
        return parse_corpus(decoded_lines(f, str(path)), source=str(path))


def serialize_corpus(sentences):
    """Writes sentences in the canonical corpus format, the inverse of
    :func:`parse_corpus`."""

    lines = []
    for sentence in sentences:
        lines.append(f"# sent_id = {sentence.sent_id}")
        for t in sentence.tokens:
            cols = [str(t.index), t.surface, str(t.head), t.relation]
            if t.label is not None:
                cols.append(t.label)
            lines.append("\t".join(cols))
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def write_corpus(sentences, path):
    Path(path).write_text(serialize_corpus(sentences), encoding="utf-8")


@frozen
class EncodedSentence:
    """Integer view of a sentence against a :class:`Vocabulary`.

    ``up_relations[i]`` is the forward relation id of the arc from token
    i+1 to its head; ``down_relations[i]`` is the inverse relation id used
    when token i+1 receives its head's top-down state (``I-root`` for the
    root token).
    """

    sentence = field()
    word_ids = field()
    up_relations = field(converter=tuple)
    down_relations = field(converter=tuple)
    labels = field(default=None)
    unknown_relations = field(factory=tuple, converter=tuple)

    @property
    def tree(self):
        return self.sentence.tree

    def __len__(self):
        return len(self.word_ids)


@define
class Vocabulary:
    """Dense word and relation indices.

    Word id 0 is the unknown word. Relation ids cover forward relations
    first (id 0 is the unknown forward relation) and then the inverse
    ``I-`` relations, starting with ``I-<unk>`` and ``I-root``, so that the
    two directions never share a row.
    """

    words = field(factory=dict)
    relations = field(factory=dict)
    n_forward = field(default=0)

    @classmethod
    def build(cls, *corpora):
        """Builds a vocabulary from one or more lists of sentences, in
        first-occurrence order."""

        words = {UNK: 0}
        forward = [UNK]
        seen = {UNK}
        for corpus in corpora:
            for sentence in corpus:
                for token in sentence.tokens:
                    words.setdefault(token.surface, len(words))
                    if token.relation not in seen:
                        seen.add(token.relation)
                        forward.append(token.relation)

        inverse = [inverse_relation(UNK), ROOT_INVERSE]
        for rel in forward[1:]:
            inv = inverse_relation(rel)
            if inv not in inverse:
                inverse.append(inv)

        relations = {rel: ii for ii, rel in enumerate(forward + inverse)}
        return cls(words=words, relations=relations, n_forward=len(forward))

    @property
    def n_words(self):
        return len(self.words)

    @property
    def n_relations(self):
        return len(self.relations)

    @property
    def forward_ids(self):
        return list(range(self.n_forward))

    @property
    def inverse_ids(self):
        return list(range(self.n_forward, self.n_relations))

    @property
    def relation_names(self):
        names = [None] * len(self.relations)
        for rel, ii in self.relations.items():
            names[ii] = rel
        return names

    def word_id(self, word):
        return self.words.get(word, 0)

    def forward_id(self, rel):
        ii = self.relations.get(rel)
        if ii is None or ii >= self.n_forward:
            return 0
        return ii

    def inverse_id(self, rel):
        return self.relations.get(
            inverse_relation(rel), self.relations[inverse_relation(UNK)]
        )

    def encode(self, sentence):
        """Maps a sentence to ids; unknown words and relations fall back to
        the UNK entries and the unknown relation names are reported."""

        word_ids = np.array(
            [self.word_id(w) for w in sentence.words], dtype=np.int64
        )
        up, down, unknown = [], [], []
        for token in sentence.tokens:
            up.append(self.forward_id(token.relation))
            if token.head == 0:
                down.append(self.relations[ROOT_INVERSE])
                continue
            if token.relation not in self.relations:
                unknown.append(token.relation)
            down.append(self.inverse_id(token.relation))
        return EncodedSentence(
            sentence=sentence,
            word_ids=word_ids,
            up_relations=up,
            down_relations=down,
            labels=sentence.label_ids,
            unknown_relations=unknown,
        )


@define
class EmbeddingTable:
    """Word vectors, one row per vocabulary id.

    ``oov_mask[i]`` flags vocabulary words that were absent from the
    embedding file and got a random row. The UNK row is random as well but
    is not counted as out of vocabulary.
    """

    matrix = field(validator=instance_of(np.ndarray))
    oov_mask = field(default=None, validator=optional(instance_of(np.ndarray)))

    def __attrs_post_init__(self):
        if self.oov_mask is None:
            self.oov_mask = np.zeros(self.matrix.shape[0], dtype=bool)

    @property
    def d(self):
        return self.matrix.shape[1]

    @property
    def oov_count(self):
        return int(self.oov_mask.sum())


def oov_bound(d):
    return 0.25 / np.sqrt(d)


def random_embeddings(vocabulary, d, rng):
    """Embeddings for runs without a pretrained file: every row uniform in
    +/- sqrt(3/d), i.e. roughly unit norm."""

    a = np.sqrt(3.0 / d)
    matrix = rng.uniform(-a, a, size=(vocabulary.n_words, d))
    return EmbeddingTable(matrix=matrix)


def load_embeddings(stream, vocabulary, d, rng, source="<stream>"):
    """Loads word vectors for the words of ``vocabulary``.

    Words of the file absent from the vocabulary are skipped. Vocabulary
    words absent from the file get a row drawn uniformly from
    [-0.25/sqrt(d), 0.25/sqrt(d)].

    Parameters
    ----------
    stream : Iterable[str]
        Lines of a word2vec text file.
    vocabulary : Vocabulary
    d : int
        Expected dimension; must equal the dimension in the header.
    rng : numpy.random.Generator
    source : str, optional

    Returns
    -------
    EmbeddingTable

    Raises
    ------
    EmbeddingError
    """

    if isinstance(stream, str):
        stream = StringIO(stream)
    lines = iter(stream)

    header = next(lines, "").split()
    try:
        count, dim = (int(x) for x in header)
    except ValueError:
        raise EmbeddingError(
            f"expected a '<count> <dim>' header, got {' '.join(header)!r}",
            1,
            source,
        )
    if dim != d:
        raise EmbeddingError(
            f"dimension mismatch: file has {dim}, expected {d}", 1, source
        )

    a = oov_bound(d)
    matrix = rng.uniform(-a, a, size=(vocabulary.n_words, d))
    found = np.zeros(vocabulary.n_words, dtype=bool)

    rows = 0
    for line_no, raw in enumerate(lines, start=2):
        parts = raw.rstrip("\r\n").rstrip(" ").split(" ")
        if parts == [""]:
            continue
        word, values = parts[0], parts[1:]
        if len(values) != dim:
            problem = "truncated line" if len(values) < dim else "long line"
            raise EmbeddingError(
                f"{problem}: {len(values)} values for {word!r}, expected {dim}",
                line_no,
                source,
            )
        try:
            vector = np.array([float(v) for v in values])
        except ValueError:
            raise EmbeddingError(
                f"unparseable float in the vector of {word!r}", line_no, source
            )
        if not np.all(np.isfinite(vector)):
            raise EmbeddingError(
                f"non-finite value in the vector of {word!r}", line_no, source
            )
        rows += 1
        index = vocabulary.words.get(word)
        if index is not None:
            matrix[index] = vector
            found[index] = True

    if rows != count:
        logger.warning(f"{source}: header announces {count} rows, read {rows}")

    oov_mask = ~found
    oov_mask[0] = False
    table = EmbeddingTable(matrix=matrix, oov_mask=oov_mask)
    logger.info(
        f"Loaded {int(found.sum())} vectors from {source}, "
        f"{table.oov_count} vocabulary words randomly initialized"
    )
    return table


def read_embeddings(path, vocabulary, d, rng):
    source = str(path)
    with open(path, "rb") as f:
        lines = decoded_lines(f, source, EmbeddingError)
        return load_embeddings(lines, vocabulary, d, rng, source=source)
