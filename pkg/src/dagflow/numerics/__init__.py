from dagflow.numerics.autodiff import (
    ParamSet,
    Tape,
    Tensor,
    as_tensor,
    grad,
    stop_gradient,
    value_and_grad,
)
from dagflow.numerics.nn import MLPSpec, NetSpec, init_mlp, mlp_apply, timestep_embedding
from dagflow.numerics.optim import (
    OptimizerState,
    adamw_init,
    adamw_step,
    clip_global_norm,
    global_norm,
)

__all__ = [
    "MLPSpec", "NetSpec", "OptimizerState", "ParamSet", "Tape", "Tensor", "adamw_init",
    "adamw_step", "as_tensor", "clip_global_norm", "global_norm", "grad", "init_mlp",
    "mlp_apply", "stop_gradient", "timestep_embedding", "value_and_grad",
]
