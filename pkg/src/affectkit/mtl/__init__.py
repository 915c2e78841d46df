"""From-scratch multi-task network: shared trunk, three task heads."""

from .config import HEADS, HEAD_DIMS, ModelSpec, Plateau, TrainConfig
from .gradcheck import max_relative_error, numerical_gradient
from .losses import (
    AllMasksEmpty,
    BatchLabels,
    BatchMasks,
    CombinedLoss,
    combined_loss,
    mse_loss,
    sigmoid_mse,
    softmax_cross_entropy,
    weighted_bce_with_logits,
)
from .network import (
    BatchTooSmall,
    HeadGrads,
    ModelParams,
    ShapeMismatch,
    StaleCache,
    TaskOutputs,
    backward,
    forward,
    init_params,
    update_running_stats,
)
from .optim import (
    AdamState,
    PlateauState,
    SgdState,
    adam_step,
    init_optimizer_state,
    optimizer_step,
    scheduler_step,
    sgd_step,
)
