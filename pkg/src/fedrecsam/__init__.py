"""Federated recommendation with hierarchical sharpness-aware minimization."""

from .data import (
    InteractionLog,
    LogFormat,
    SplitDataset,
    filter_and_split,
    parse_log,
    sample_train_negatives,
)
from .federation import (
    METHOD_BASELINE,
    METHOD_FEDRECGEL,
    METHOD_NO_NONSHARED,
    METHOD_NO_SHARED,
    METHODS,
    RoundResult,
    TrainConfig,
    TrainResult,
    aggregate,
    client_update,
    run_training,
)
from .metrics import EvalReport, compute_metrics, evaluate, rank_candidates
from .model import (
    ClientState,
    GlobalParams,
    ScoreFn,
    batch_gradients,
    batch_loss,
    init_clients,
    init_global,
    score,
)
from .sam import (
    NormRegConfig,
    SamConfig,
    norm_reg_gradient,
    sam_grad_nonshared,
    sam_grad_shared,
    worst_case_perturbation,
)
from .vectors import SharedVec, axpy, flat_norm

__version__ = "0.1.0"
