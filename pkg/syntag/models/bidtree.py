"""Bidirectional dependency-tree LSTM.

Every word is encoded twice: by a bottom-up pass in which a node receives
the states of its dependents, and by a top-down pass in which it receives
the state of its head only. Arcs are typed: the relation embedding of the
arc and relation-indexed matrices enter every gate pre-activation, and each
dependent gets its own forget gate. Top-down arcs use the inverse ``I-``
relations, and the root receives a zero state under ``I-root``.

How relation-indexed matrices are shared depends on the variant:

* ``1``: one matrix per gate, common to all relations,
* ``2``: as 1, except that the forget gate matrices are per relation,
* ``3``: every gate has per-relation matrices.

Shared matrices are one :class:`~syntag.autodiff.Value` object referenced
from every relation slot, never copies.
"""

from attrs import define, field, frozen
from attrs.validators import in_, instance_of

from syntag.autodiff import (
    ShapeError,
    Value,
    add_n,
    concat,
    constant,
    select,
    sigmoid,
    tanh_,
)
from syntag.corpus import bottom_up_order, top_down_order
from syntag.models.initializers import glorot_uniform, small_uniform, zeros

GATES = ("i", "o", "f", "u")
DIRECTIONS = ("up", "down")
VARIANTS = (1, 2, 3)


def relation_specific(variant, gate):
    """Whether ``gate`` has one matrix pair per relation under
    ``variant``."""

    if variant == 1:
        return False
    if variant == 2:
        return gate == "f"
    return True


@frozen
class NodeState:
    s = field(validator=instance_of(Value))
    h = field(validator=instance_of(Value))


def zero_state(d):
    return NodeState(s=constant([0.0] * d), h=constant([0.0] * d))


def _pick(bank, rel):
    if bank is None or isinstance(bank, Value):
        return bank
    try:
        return bank[rel]
    except KeyError:
        raise ValueError(f"unknown relation id {rel}")


@define(kw_only=True)
class TreeGateParams:
    """The parameter bank of one direction.

    ``W`` stacks the word-input matrices of the gates i, o, f, u into a
    ``4d x d`` matrix and ``b`` the biases. ``W_rel[gate]`` and
    ``U_rel[gate]`` hold either a single ``d x d`` matrix or a mapping
    from relation id to one. ``W_rel`` is empty when relation terms are
    disabled.
    """

    direction = field(validator=in_(DIRECTIONS))
    W = field(validator=instance_of(Value))
    b = field(validator=instance_of(Value))
    W_rel = field(factory=dict)
    U_rel = field(factory=dict)
    relation_ids = field(factory=tuple, converter=tuple)

    @property
    def d(self):
        return self.b.shape[0] // 4

    def resolve(self, gate, rel):
        return _pick(self.W_rel.get(gate), rel), _pick(self.U_rel[gate], rel)

    def named_parameters(self):
        params = {self.W.name: self.W, self.b.name: self.b}
        for bank in (self.W_rel, self.U_rel):
            for gate in GATES:
                entry = bank.get(gate)
                if entry is None:
                    continue
                values = [entry] if isinstance(entry, Value) else entry.values()
                for p in values:
                    params[p.name] = p
        return params

    def biases(self):
        return [self.b]


def init_tree_gates(
    direction, d, variant, relation_ids, relation_names, use_relation_terms, rng
):
    prefix = f"tree.{direction}"
    W = glorot_uniform(rng, d, d, blocks=4, name=f"{prefix}.W")
    b = zeros(4 * d, name=f"{prefix}.b")

    banks = {"W_rel": {}, "U_rel": {}}
    kinds = ("W_rel", "U_rel") if use_relation_terms else ("U_rel",)
    for gate in GATES:
        for kind in kinds:
            name = f"{prefix}.{kind}.{gate}"
            if relation_specific(variant, gate):
                banks[kind][gate] = {
                    rel: glorot_uniform(
                        rng, d, d, name=f"{name}.{relation_names[rel]}"
                    )
                    for rel in relation_ids
                }
            else:
                banks[kind][gate] = glorot_uniform(rng, d, d, name=name)

    return TreeGateParams(
        direction=direction,
        W=W,
        b=b,
        W_rel=banks["W_rel"],
        U_rel=banks["U_rel"],
        relation_ids=relation_ids,
    )


@define(kw_only=True)
class BiDTreeParams:
    """Parameters of the tree encoder.

    ``up`` or ``down`` is None for the single-direction ablations.
    ``relations`` is the relation embedding table (forward and inverse
    relations on disjoint rows), None when relation terms are disabled.
    """

    up = field(default=None)
    down = field(default=None)
    relations = field(default=None)
    variant = field(default=3, validator=in_(VARIANTS))
    use_relation_terms = field(default=True, validator=instance_of(bool))

    @property
    def directions(self):
        return tuple(
            direction
            for direction in DIRECTIONS
            if getattr(self, direction) is not None
        )

    @property
    def d(self):
        return getattr(self, self.directions[0]).d

    @property
    def output_dim(self):
        return self.d * len(self.directions)

    def bank(self, direction):
        bank = getattr(self, direction)
        if bank is None:
            raise ValueError(f"no {direction} parameters in this encoder")
        return bank

    def resolve_matrices(self, direction, gate, rel):
        """``(W_rel, U_rel)`` used by ``gate`` for an arc of relation id
        ``rel`` in ``direction``; ``W_rel`` is None without relation
        terms."""

        return self.bank(direction).resolve(gate, rel)

    def named_parameters(self):
        params = {}
        if self.relations is not None:
            params[self.relations.name] = self.relations
        for direction in self.directions:
            params.update(self.bank(direction).named_parameters())
        return params

    def biases(self):
        return [self.bank(direction).b for direction in self.directions]


def init_bidtree(
    vocabulary,
    d,
    rng,
    variant=3,
    use_relation_terms=True,
    directions=DIRECTIONS,
):
    """Initializes a tree encoder over the relations of ``vocabulary``.

    Matrices are Glorot-uniform, biases zero, relation embeddings uniform in
    [-0.01, 0.01].
    """

    names = vocabulary.relation_names
    relations = None
    if use_relation_terms:
        relations = small_uniform(
            rng, (vocabulary.n_relations, d), 0.01, name="relations"
        )
    ids = {"up": vocabulary.forward_ids, "down": vocabulary.inverse_ids}
    banks = {
        direction: init_tree_gates(
            direction,
            d,
            variant,
            ids[direction],
            names,
            use_relation_terms,
            rng,
        )
        for direction in directions
    }
    return BiDTreeParams(
        relations=relations,
        variant=variant,
        use_relation_terms=use_relation_terms,
        **banks,
    )


def tree_cell(x, dependents, params, direction):
    """One typed tree-LSTM transition.

    Parameters
    ----------
    x : Value
        The word vector of the governor, length d.
    dependents : list of (NodeState, int)
        States flowing into the node with the relation id of their arc.
    params : BiDTreeParams
    direction : {"up", "down"}

    Returns
    -------
    NodeState
    """

    bank = params.bank(direction)
    d = bank.d
    if x.shape != (d,):
        raise ShapeError(f"tree_cell: word vector {x.shape}, expected {(d,)}")

    pre = bank.W @ x + bank.b
    gate_pre = {
        gate: select(pre, slice(k * d, (k + 1) * d))
        for k, gate in enumerate(GATES)
    }

    terms = {"i": [], "o": [], "u": []}
    forgets = []
    for state, rel in dependents:
        if state.h.shape != (d,):
            raise ShapeError(
                f"tree_cell: dependent state {state.h.shape}, expected {(d,)}"
            )
        r = select(params.relations, rel) if params.use_relation_terms else None
        for gate in GATES:
            W_rel, U_rel = bank.resolve(gate, rel)
            parts = [U_rel @ state.h]
            if r is not None:
                parts.append(W_rel @ r)
            if gate == "f":
                f = sigmoid(add_n([gate_pre["f"], *parts]))
                forgets.append(f * state.s)
            else:
                terms[gate].extend(parts)

    i = sigmoid(add_n([gate_pre["i"], *terms["i"]]))
    o = sigmoid(add_n([gate_pre["o"], *terms["o"]]))
    u = tanh_(add_n([gate_pre["u"], *terms["u"]]))
    s = add_n([i * u, *forgets])
    return NodeState(s=s, h=o * tanh_(s))


def bottom_up_pass(x, sentence, params):
    """Bottom-up states of every word, in token order.

    Parameters
    ----------
    x : list of Value
        Word vectors in token order.
    sentence : syntag.corpus.EncodedSentence
    params : BiDTreeParams
    """

    tree = sentence.tree
    states = {}
    for node in bottom_up_order(tree):
        dependents = [
            (states[child], sentence.up_relations[child - 1])
            for child, _ in tree.dependents(node)
        ]
        states[node] = tree_cell(x[node - 1], dependents, params, "up")
    return [states[ii] for ii in range(1, tree.n + 1)]


def top_down_pass(x, sentence, params):
    """Top-down states of every word, in token order. Each node's single
    dependent is its head's state under the inverse relation of the arc."""

    tree = sentence.tree
    root_state = zero_state(params.bank("down").d)
    states = {}
    for node in top_down_order(tree):
        head = tree.head(node)
        incoming = root_state if head == 0 else states[head]
        dependents = [(incoming, sentence.down_relations[node - 1])]
        states[node] = tree_cell(x[node - 1], dependents, params, "down")
    return [states[ii] for ii in range(1, tree.n + 1)]


def bidtree_encode(x, sentence, params):
    """Per-word tree representations: ``[h_up ; h_down]`` (2d entries) for
    the bidirectional encoder, the single direction's ``h`` otherwise."""

    passes = {"up": bottom_up_pass, "down": top_down_pass}
    outputs = [
        [state.h for state in passes[direction](x, sentence, params)]
        for direction in params.directions
    ]
    if len(outputs) == 1:
        return outputs[0]
    return [concat(*hs) for hs in zip(*outputs)]
