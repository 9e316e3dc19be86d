from dagflow.align.batch import TransitionBatch
from dagflow.align.flow import FlowNet, TabularFlow
from dagflow.align.losses import (
    advantage_b,
    clipped_surrogate,
    dag_kl_policy_loss,
    db_residual,
    ddpo_loss,
    fl_db_loss,
    fl_db_residual,
    fl_residual,
    kl_regularizer,
    log_db_residual,
    whitened_advantages,
)
from dagflow.align.trainer import (
    ALGORITHMS,
    AlignConfig,
    AlignState,
    align_epoch,
    attach_rewards,
)

__all__ = [
    "ALGORITHMS", "AlignConfig", "AlignState", "FlowNet", "TabularFlow", "TransitionBatch",
    "advantage_b", "align_epoch", "clipped_surrogate", "attach_rewards", "dag_kl_policy_loss", "db_residual",
    "ddpo_loss", "fl_db_loss", "fl_db_residual", "fl_residual", "kl_regularizer",
    "log_db_residual", "whitened_advantages",
]
