"""Sequential BiLSTM over per-word features and the affine projection to
label scores."""

from attrs import define, field
from attrs.validators import instance_of

from syntag.autodiff import (
    ShapeError,
    Value,
    concat,
    constant,
    select,
    sigmoid,
    tanh_,
)
from syntag.corpus import LABELS
from syntag.models.initializers import glorot_uniform, zeros


@define(kw_only=True)
class LstmDirectionParams:
    """One direction of the BiLSTM. Gates i, o, f, u are stacked: ``W`` is
    ``4d x input_dim``, ``U`` is ``4d x d`` and ``b`` has ``4d`` entries.
    No peephole connections."""

    W = field(validator=instance_of(Value))
    U = field(validator=instance_of(Value))
    b = field(validator=instance_of(Value))

    @property
    def d(self):
        return self.U.shape[1]

    @property
    def input_dim(self):
        return self.W.shape[1]

    def named_parameters(self):
        return {p.name: p for p in (self.W, self.U, self.b)}

    def biases(self):
        return [self.b]


def init_lstm_direction(prefix, input_dim, d, rng):
    return LstmDirectionParams(
        W=glorot_uniform(rng, d, input_dim, blocks=4, name=f"{prefix}.W"),
        U=glorot_uniform(rng, d, d, blocks=4, name=f"{prefix}.U"),
        b=zeros(4 * d, name=f"{prefix}.b"),
    )


@define(kw_only=True)
class SeqLstmParams:
    fwd = field(validator=instance_of(LstmDirectionParams))
    bwd = field(validator=instance_of(LstmDirectionParams))

    @property
    def d(self):
        return self.fwd.d

    @property
    def input_dim(self):
        return self.fwd.input_dim

    @property
    def output_dim(self):
        return 2 * self.d

    def named_parameters(self):
        return {**self.fwd.named_parameters(), **self.bwd.named_parameters()}

    def biases(self):
        return [self.fwd.b, self.bwd.b]


def init_bilstm(input_dim, d, rng):
    return SeqLstmParams(
        fwd=init_lstm_direction("lstm.fwd", input_dim, d, rng),
        bwd=init_lstm_direction("lstm.bwd", input_dim, d, rng),
    )


@define(kw_only=True)
class ProjectionParams:
    M = field(validator=instance_of(Value))
    b = field(validator=instance_of(Value))

    @property
    def input_dim(self):
        return self.M.shape[1]

    def named_parameters(self):
        return {self.M.name: self.M, self.b.name: self.b}

    def biases(self):
        return [self.b]


def init_projection(input_dim, rng, n_labels=len(LABELS)):
    return ProjectionParams(
        M=glorot_uniform(rng, n_labels, input_dim, name="projection.M"),
        b=zeros(n_labels, name="projection.b"),
    )


def lstm_step(x, h_prev, c_prev, params):
    """One LSTM transition.

    Returns
    -------
    tuple of Value
        ``(h, c)``.
    """

    if x.shape != (params.input_dim,):
        raise ShapeError(
            f"lstm_step: input {x.shape}, expected {(params.input_dim,)}"
        )
    d = params.d
    pre = params.W @ x + params.U @ h_prev + params.b
    i = sigmoid(select(pre, slice(0, d)))
    o = sigmoid(select(pre, slice(d, 2 * d)))
    f = sigmoid(select(pre, slice(2 * d, 3 * d)))
    u = tanh_(select(pre, slice(3 * d, 4 * d)))
    c = i * u + f * c_prev
    return o * tanh_(c), c


def run_lstm(features, params):
    """Hidden states of a left-to-right pass from zero initial states."""

    h = c = constant([0.0] * params.d)
    hs = []
    for x in features:
        h, c = lstm_step(x, h, c, params)
        hs.append(h)
    return hs


def bilstm(features, params):
    """``[h_fwd ; h_bwd]`` for every position.

    Raises
    ------
    ValueError
        For an empty sequence.
    """

    if not features:
        raise ValueError("bilstm: empty sequence")
    forward = run_lstm(features, params.fwd)
    backward = run_lstm(features[::-1], params.bwd)[::-1]
    return [concat(hf, hb) for hf, hb in zip(forward, backward)]


def project(g, params):
    """Affine map of a feature vector to one score per label."""

    if g.shape != (params.input_dim,):
        raise ShapeError(
            f"project: input {g.shape}, expected {(params.input_dim,)}"
        )
    return params.M @ g + params.b
