from __future__ import annotations

import numpy as np

from dagflow.diffusion.gaussian import GaussianChain, denoising_loss, sample_denoising_inputs
from dagflow.errors import ContractError
from dagflow.numerics.autodiff import ParamSet, value_and_grad
from dagflow.numerics.optim import OptimizerState, adamw_step, clip_global_norm


def denoising_pretrain_step(chain: GaussianChain, params: ParamSet, opt: OptimizerState,
                            x0: np.ndarray, rng: np.random.Generator, conditions=None,
                            max_grad_norm: float | None = None):
    """One optimizer step on the denoising objective; returns (loss, params, opt)."""
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape[0] == 0:
        raise ContractError("pretraining batch is empty")
    t, noise = sample_denoising_inputs(chain, x0.shape[0], rng)
    loss, g = value_and_grad(lambda p: denoising_loss(chain, p, x0, t, noise, conditions), params)
    if max_grad_norm is not None:
        g = clip_global_norm(g, max_grad_norm)
    params, opt = adamw_step(params, g, opt)
    return loss, params, opt
