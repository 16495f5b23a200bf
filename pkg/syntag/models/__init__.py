from syntag.models.bidtree import (
    BiDTreeParams,
    NodeState,
    TreeGateParams,
    bidtree_encode,
    bottom_up_pass,
    init_bidtree,
    top_down_pass,
    tree_cell,
)
from syntag.models.crf import (
    CrfParams,
    init_crf,
    log_likelihood,
    log_partition,
    viterbi,
)
from syntag.models.sequence import (
    ProjectionParams,
    SeqLstmParams,
    bilstm,
    init_bilstm,
    init_projection,
    lstm_step,
    project,
)

__all__ = [
    "BiDTreeParams",
    "NodeState",
    "TreeGateParams",
    "bidtree_encode",
    "bottom_up_pass",
    "init_bidtree",
    "top_down_pass",
    "tree_cell",
    "CrfParams",
    "init_crf",
    "log_likelihood",
    "log_partition",
    "viterbi",
    "ProjectionParams",
    "SeqLstmParams",
    "bilstm",
    "init_bilstm",
    "init_projection",
    "lstm_step",
    "project",
]
