"""Model assembly, loss, training, prediction and evaluation.

A model chains word embeddings, the tree encoder, the BiLSTM, the
projection to label scores and the CRF. The ablations remove or narrow
parts of that chain:

=============  ==========================================================
``full``       embeddings, both tree passes (2d), BiLSTM, projection, CRF
``dtree-up``   embeddings, bottom-up pass only (d), BiLSTM, projection, CRF
``dtree-down`` embeddings, top-down pass only (d), BiLSTM, projection, CRF
``bidtree-crf`` embeddings, both tree passes (2d), projection, CRF
``bilstm-crf`` embeddings, BiLSTM, projection, CRF
=============  ==========================================================

Training minimizes, per mini-batch, the summed negative log-likelihood of
the gold label sequences plus ``l2 / 2`` times the squared norm of every
non-bias parameter, word and relation embeddings included.
"""

from collections import Counter

import numpy as np
from attrs import define, field
from attrs.validators import ge, gt, in_, instance_of
from joblib import Parallel, delayed
from monty.json import MSONable
from tqdm import tqdm

from syntag.autodiff import (
    AdamState,
    NumericalError,
    Value,
    adam_step,
    add_n,
    backward,
    clip_global_norm,
    dropout,
    no_grad,
    parameter,
    scale,
    select,
    sumsq,
)
from syntag.corpus import (
    CorpusError,
    EncodedSentence,
    random_embeddings,
    read_embeddings,
    validate_tree,
)
from syntag.logger import logger
from syntag.models.bidtree import (
    DIRECTIONS,
    GATES,
    VARIANTS,
    bidtree_encode,
    init_bidtree,
    relation_specific,
)
from syntag.models.crf import init_crf, log_likelihood, viterbi
from syntag.models.sequence import bilstm, init_bilstm, init_projection, project
from syntag.spans import EvalReport, decode_spans, span_f1
from syntag.utils import Timer, make_rng

ABLATIONS = ("full", "dtree-up", "dtree-down", "bidtree-crf", "bilstm-crf")

TREE_DIRECTIONS = {
    "full": DIRECTIONS,
    "dtree-up": ("up",),
    "dtree-down": ("down",),
    "bidtree-crf": DIRECTIONS,
    "bilstm-crf": (),
}

# Independent random streams derived from the run seed
_INIT, _SHUFFLE, _DROPOUT, _EMBEDDINGS = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _unit_interval(instance, attribute, value):
    if not 0.0 <= value < 1.0:
        raise ConfigError(f"{attribute.name} must lie in [0, 1), got {value}")


# MSONable serializes positional-or-keyword init arguments only
@define
class ModelConfig(MSONable):
    """Architecture and training hyperparameters.

    Parameters
    ----------
    dim : int
        Word vector size d, also the hidden size of every LSTM.
    variant : int
        Sharing of relation-indexed tree matrices (1, 2 or 3).
    ablation : str
        One of :data:`ABLATIONS`.
    use_relation_terms : bool
        Whether relation embeddings enter the tree gate pre-activations.
    dropout : float
        Rate applied to the tree encoder output and to the BiLSTM output.
    l2 : float
        Weight of the squared-norm penalty.
    lr, beta1, beta2, eps : float
        Adam settings.
    batch_size : int
    clip_norm : float
        Global gradient norm threshold.
    patience : int
        Epochs without validation improvement before stopping.
    max_epochs : int
    seed : int
    max_length : int
        Training sentences with more tokens are skipped.
    """

    dim = field(default=300, validator=[instance_of(int), ge(1)])
    variant = field(default=3, validator=in_(VARIANTS))
    ablation = field(default="full", validator=in_(ABLATIONS))
    use_relation_terms = field(default=True, validator=instance_of(bool))
    dropout = field(default=0.5, converter=float, validator=_unit_interval)
    l2 = field(default=0.001, converter=float, validator=ge(0.0))
    lr = field(default=0.001, converter=float, validator=ge(0.0))
    batch_size = field(default=20, validator=[instance_of(int), ge(1)])
    clip_norm = field(default=5.0, converter=float, validator=gt(0.0))
    patience = field(default=5, validator=[instance_of(int), ge(1)])
    max_epochs = field(default=50, validator=[instance_of(int), ge(1)])
    seed = field(default=123, validator=instance_of(int))
    max_length = field(default=200, validator=[instance_of(int), ge(1)])
    beta1 = field(default=0.9, converter=float, validator=_unit_interval)
    beta2 = field(default=0.999, converter=float, validator=_unit_interval)
    eps = field(default=1e-8, converter=float, validator=gt(0.0))

    @property
    def tree_directions(self):
        return TREE_DIRECTIONS[self.ablation]

    @property
    def uses_bilstm(self):
        return self.ablation != "bidtree-crf"


@define
class TrainHistory(MSONable):
    epoch_loss = field(factory=list)
    val_f1 = field(factory=list)
    best_epoch = field(default=0)
    stop_reason = field(default="")

    @property
    def best_f1(self):
        return self.val_f1[self.best_epoch - 1] if self.best_epoch else None


@define(kw_only=True)
class Model:
    """All trainable parameters together with their configuration and
    vocabulary. ``tree`` and ``lstm`` are None when the ablation removes
    them."""

    config = field(validator=instance_of(ModelConfig))
    vocabulary = field()
    embeddings = field(validator=instance_of(Value))
    tree = field(default=None)
    lstm = field(default=None)
    projection = field()
    crf = field()

    def parameters(self):
        """Every trainable tensor by name, in a fixed order."""

        params = {self.embeddings.name: self.embeddings}
        for part in (self.tree, self.lstm, self.projection, self.crf):
            if part is not None:
                params.update(part.named_parameters())
        return params

    def biases(self):
        """The additive bias vectors of every component, by name."""

        biases = {}
        for part in (self.tree, self.lstm, self.projection, self.crf):
            if part is not None:
                biases.update((b.name, b) for b in part.biases())
        return biases

    def weight_parameters(self):
        """Everything the L2 penalty applies to."""

        bias_ids = {id(b) for b in self.biases().values()}
        return {
            k: p for k, p in self.parameters().items() if id(p) not in bias_ids
        }

    def snapshot(self):
        return {k: p.data.copy() for k, p in self.parameters().items()}

    def restore(self, snapshot):
        for k, p in self.parameters().items():
            p.data[...] = snapshot[k]


def initial_embeddings(config, vocabulary, path=None):
    """Word vectors to start training from: read from a word2vec text file
    when ``path`` is given, random otherwise. Both draw from the run seed."""

    rng = make_rng(config.seed, _EMBEDDINGS)
    if path is None:
        return random_embeddings(vocabulary, config.dim, rng)
    return read_embeddings(path, vocabulary, config.dim, rng)


def build_model(config, vocabulary, embeddings):
    """Initializes a model; the same seed always yields the same
    parameters.

    Parameters
    ----------
    config : ModelConfig
    vocabulary : syntag.corpus.Vocabulary
    embeddings : syntag.corpus.EmbeddingTable
        Initial word vectors; they are fine-tuned during training.

    Returns
    -------
    Model
    """

    d = config.dim
    if embeddings.matrix.shape != (vocabulary.n_words, d):
        raise ConfigError(
            f"embedding table {embeddings.matrix.shape} does not match "
            f"{vocabulary.n_words} words of dimension {d}"
        )

    rng = make_rng(config.seed, _INIT)
    directions = config.tree_directions
    tree = None
    features_dim = d
    if directions:
        tree = init_bidtree(
            vocabulary,
            d,
            rng,
            variant=config.variant,
            use_relation_terms=config.use_relation_terms,
            directions=directions,
        )
        features_dim = tree.output_dim

    lstm = None
    if config.uses_bilstm:
        lstm = init_bilstm(features_dim, d, rng)
        features_dim = lstm.output_dim

    model = Model(
        config=config,
        vocabulary=vocabulary,
        embeddings=parameter(embeddings.matrix, name="embeddings"),
        tree=tree,
        lstm=lstm,
        projection=init_projection(features_dim, rng),
        crf=init_crf(rng),
    )
    logger.debug(
        f"Built {config.ablation} model (variant {config.variant}, d={d}) "
        f"with {sum(count_parameters(config, vocabulary).values())} "
        "parameters"
    )
    return model


def count_parameters(config, vocabulary):
    """Closed-form parameter counts per component.

    With ``V`` words, ``R`` relations of which ``R_up`` forward and
    ``R_down`` inverse ones, and ``T = 3`` labels:

    * embeddings: ``V d``; relation table: ``R d`` (with relation terms),
    * each tree direction: ``4 d^2 + 4 d`` plus, for each gate, ``d^2``
      if its relation matrices are shared or ``R_dir d^2`` if not, once
      for the hidden path and once more for the relation path,
    * BiLSTM with input size ``n``: ``2 (4 d n + 4 d^2 + 4 d)``,
    * projection with input size ``n``: ``T n + T``,
    * CRF: ``(T + 1) T T + (T + 1) T``.

    Returns
    -------
    dict
        ``{component: count}``.
    """

    d = config.dim
    n_labels = 3
    counts = {"embeddings": vocabulary.n_words * d}
    per_direction = {
        "up": vocabulary.n_forward,
        "down": vocabulary.n_relations - vocabulary.n_forward,
    }
    paths = 2 if config.use_relation_terms else 1

    features_dim = d
    if config.tree_directions:
        tree = 0
        if config.use_relation_terms:
            tree += vocabulary.n_relations * d
        for direction in config.tree_directions:
            tree += 4 * d * d + 4 * d
            for gate in GATES:
                copies = (
                    per_direction[direction]
                    if relation_specific(config.variant, gate)
                    else 1
                )
                tree += paths * copies * d * d
        counts["tree"] = tree
        features_dim = d * len(config.tree_directions)

    if config.uses_bilstm:
        counts["lstm"] = 2 * (4 * d * features_dim + 4 * d * d + 4 * d)
        features_dim = 2 * d

    counts["projection"] = n_labels * features_dim + n_labels
    counts["crf"] = (n_labels + 1) * n_labels * n_labels + (
        n_labels + 1
    ) * n_labels
    return counts


def encode_corpus(vocabulary, corpus, max_length=None, require_labels=False):
    """Encodes sentences against ``vocabulary``.

    Sentences longer than ``max_length`` are dropped with a warning.
    Relations unknown to the vocabulary fall back to the UNK relations and
    are reported once per corpus.
    """

    encoded = []
    unknown = Counter()
    skipped = 0
    for sentence in corpus:
        if not isinstance(sentence, EncodedSentence):
            if require_labels and not sentence.is_labeled:
                raise CorpusError(f"sentence {sentence.sent_id} has no labels")
            validate_tree(sentence.tree)
            sentence = vocabulary.encode(sentence)
            unknown.update(sentence.unknown_relations)
        if max_length is not None and len(sentence) > max_length:
            skipped += 1
            continue
        encoded.append(sentence)

    if skipped:
        logger.warning(
            f"Skipped {skipped} sentences longer than {max_length} tokens"
        )
    if unknown:
        names = ", ".join(f"{k} ({v})" for k, v in sorted(unknown.items()))
        logger.warning(f"Unknown relations mapped to the UNK relation: {names}")
    return encoded


def sentence_features(model, sentence, rng=None):
    """Projected label scores of every token; ``rng`` enables dropout."""

    rate = model.config.dropout
    words = select(model.embeddings, np.asarray(sentence.word_ids))
    h = [select(words, ii) for ii in range(len(sentence))]
    if model.tree is not None:
        h = bidtree_encode(h, sentence, model.tree)
        h = [dropout(v, rate, rng) for v in h]
    if model.lstm is not None:
        h = bilstm(h, model.lstm)
        h = [dropout(v, rate, rng) for v in h]
    return [project(v, model.projection) for v in h]


def sentence_nll(model, sentence, rng=None):
    if sentence.labels is None:
        raise CorpusError(f"sentence {sentence.sentence.sent_id} has no labels")
    features = sentence_features(model, sentence, rng)
    return -log_likelihood(features, sentence.labels, model.crf)


def l2_penalty(model):
    weights = model.weight_parameters().values()
    return scale(add_n([sumsq(p) for p in weights]), model.config.l2 / 2.0)


def forward_loss(model, batch, rngs=None):
    """Summed negative log-likelihood of a batch plus the L2 penalty.

    Parameters
    ----------
    model : Model
    batch : Sequence[LabeledSentence or EncodedSentence]
    rngs : Sequence[numpy.random.Generator], optional
        One dropout generator per sentence; dropout is off when omitted.

    Returns
    -------
    Value
        A scalar.
    """

    batch = encode_corpus(model.vocabulary, batch, require_labels=True)
    rngs = [None] * len(batch) if rngs is None else rngs
    terms = [sentence_nll(model, s, rng) for s, rng in zip(batch, rngs)]
    return add_n([*terms, l2_penalty(model)])


def _sentence_gradients(model, params, sentence, rng):
    loss = sentence_nll(model, sentence, rng)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericalError(
            f"non-finite loss on sentence {sentence.sentence.sent_id}"
        )
    return value, backward(loss, params, dense=False)


def _batch_gradients(parallel, model, params, batch, epoch):
    seed = model.config.seed
    results = parallel(
        delayed(_sentence_gradients)(
            model, params, sentence, make_rng(seed, _DROPOUT, epoch, index)
        )
        for index, sentence in batch
    )

    penalty = l2_penalty(model)
    loss = penalty.item()
    grads = {name: np.zeros_like(p.data) for name, p in params.items()}
    for name, g in backward(penalty, params, dense=False).items():
        grads[name] += g
    # results arrive lazily and in sentence order
    for value, sentence_grads in results:
        loss += value
        for name, g in sentence_grads.items():
            grads[name] += g

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
    return loss, grads


def train(model, train_corpus, dev_corpus, workers=1, progress=False):
    """Trains ``model`` in place with mini-batch Adam and early stopping on
    validation span F1.

    Each epoch draws a permutation of the training sentences from the run
    seed and walks it in batches of ``batch_size`` (the last batch may be
    short). Sentences are differentiated independently, on ``workers``
    threads, and their gradients are summed in sentence order, so the
    result does not depend on the number of workers. After training the
    parameters of the best validation epoch are restored.

    Parameters
    ----------
    model : Model
    train_corpus, dev_corpus : list of LabeledSentence
    workers : int, optional
    progress : bool, optional
        Show a progress bar over batches.

    Returns
    -------
    tuple
        ``(model, history)``.

    Raises
    ------
    CorpusError
        For an empty training corpus or an unlabeled sentence.
    NumericalError
        When a loss or gradient is not finite.
    """

    config = model.config
    train_set = encode_corpus(
        model.vocabulary, train_corpus, config.max_length, require_labels=True
    )
    if not train_set:
        raise CorpusError("empty training corpus")
    dev_set = encode_corpus(model.vocabulary, dev_corpus, require_labels=True)
    if not dev_set:
        logger.warning(
            "No validation sentences, early stopping on the training corpus"
        )
        dev_set = train_set

    params = model.parameters()
    state = AdamState()
    history = TrainHistory()
    best_f1, best_snapshot, waited = -np.inf, model.snapshot(), 0
    n = len(train_set)

    parallel = Parallel(
        n_jobs=workers, backend="threading", return_as="generator"
    )
    with Timer() as timer, parallel:
        for epoch in range(1, config.max_epochs + 1):
            order = make_rng(config.seed, _SHUFFLE, epoch).permutation(n)
            starts = range(0, n, config.batch_size)
            epoch_loss = 0.0
            for start in tqdm(starts, disable=not progress, leave=False):
                indices = order[start : start + config.batch_size]
                batch = [(int(ii), train_set[ii]) for ii in indices]
                loss, grads = _batch_gradients(
                    parallel, model, params, batch, epoch
                )
                grads = clip_global_norm(grads, config.clip_norm)
                adam_step(
                    params,
                    grads,
                    state,
                    lr=config.lr,
                    beta1=config.beta1,
                    beta2=config.beta2,
                    eps=config.eps,
                )
                epoch_loss += loss
                logger.debug(f"epoch {epoch} batch {start}: loss {loss:.4f}")

            f1 = evaluate(model, dev_set).f1
            history.epoch_loss.append(epoch_loss)
            history.val_f1.append(f1)
            if f1 > best_f1:
                best_f1, best_snapshot, waited = f1, model.snapshot(), 0
                history.best_epoch = epoch
            else:
                waited += 1
            logger.info(
                f"epoch {epoch}: loss {epoch_loss:.4f}, validation F1 "
                f"{f1:.4f} (best {best_f1:.4f} at {history.best_epoch})"
            )
            if waited >= config.patience:
                history.stop_reason = "patience"
                break
        else:
            history.stop_reason = "max_epochs"

    model.restore(best_snapshot)
    logger.success(
        f"Training stopped ({history.stop_reason}) after "
        f"{len(history.epoch_loss)} epochs in {timer.dt:.1f} s, best "
        f"validation F1 {best_f1:.4f} at epoch {history.best_epoch}"
    )
    return model, history


def predict_labels(model, sentence):
    with no_grad():
        features = sentence_features(model, sentence)
        labels, _ = viterbi(features, model.crf)
    return labels


def predict(model, corpus):
    """Aspect spans of every sentence: Viterbi labels decoded into spans,
    with dropout off."""

    encoded = encode_corpus(model.vocabulary, corpus)
    return [
        decode_spans(predict_labels(model, s), s.sentence.words)
        for s in encoded
    ]


def evaluate(model, corpus):
    """Span scores with counts pooled over all sentences.

    Raises
    ------
    CorpusError
        When a sentence has no gold labels.
    """

    encoded = encode_corpus(model.vocabulary, corpus, require_labels=True)
    report = EvalReport()
    for s in encoded:
        words = s.sentence.words
        gold = decode_spans(s.labels, words)
        predicted = decode_spans(predict_labels(model, s), words)
        report = report + span_f1(gold, predicted)
    return report
