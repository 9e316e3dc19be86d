"""Learnable log-flow correction log F~_phi(x_t, t), pinned to 0 at t = 0."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from dagflow.errors import ContractError
from dagflow.numerics import autodiff as ad
from dagflow.numerics.autodiff import ParamSet, Tensor
from dagflow.numerics.nn import NetSpec, conditional_net_apply, init_conditional_net

PREFIX = "phi"
TABLE = "phi.log_flow"


class FlowNet:
    """MLP log-flow over (x_t, time embedding, condition). The final layer starts at
    zero so the flow initially equals its reward-shaping prior.

    ``output_scale`` multiplies the raw MLP output. Log-flows of tempered rewards
    reach the hundreds, which a unit-scale head cannot reach in a few hundred
    Adam steps.
    """

    def __init__(self, spec: NetSpec, output_scale: float = 1.0):
        if spec.out_dim != 1:
            raise ContractError("flow network must output a scalar")
        if output_scale <= 0:
            raise ContractError("output_scale must be positive")
        self.spec = spec
        self.output_scale = float(output_scale)

    def init(self, rng: np.random.Generator) -> ParamSet:
        return init_conditional_net(self.spec, rng, PREFIX, zero_last=True)

    def __call__(self, params: Mapping, x, t, c=None) -> Tensor:
        x = np.asarray(x, dtype=np.float64)
        t = np.broadcast_to(np.asarray(t), (x.shape[0],))
        out = conditional_net_apply(self.spec, params, x, t, c, PREFIX)[:, 0]
        # structural terminal constraint: log F~(x_0, 0) = 0 whatever phi is
        return out * (self.output_scale * (t > 0).astype(np.float64))


class TabularFlow:
    """One free log-flow value per (t, state) for t = 1..T on a discrete chain."""

    def __init__(self, S: int, T: int):
        self.S, self.T = S, T

    def init(self, rng: np.random.Generator | None = None) -> ParamSet:
        return {TABLE: np.zeros((self.T, self.S))}

    def __call__(self, params: Mapping, x, t, c=None) -> Tensor:
        x = np.asarray(x)
        t = np.broadcast_to(np.asarray(t), x.shape)
        live = t > 0
        vals = ad.index(ad.as_tensor(params[TABLE]), (np.where(live, t - 1, 0), x))
        return vals * live.astype(np.float64)
