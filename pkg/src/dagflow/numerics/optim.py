"""AdamW with decoupled weight decay, and global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from dagflow.errors import ContractError
from dagflow.numerics.autodiff import ParamSet


@dataclass(frozen=True)
class OptimizerState:
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: ParamSet = field(default_factory=dict)
    v: ParamSet = field(default_factory=dict)


def adamw_init(params: ParamSet, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.0) -> OptimizerState:
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    zeros = {k: np.zeros_like(v) for k, v in params.items()}
    return OptimizerState(lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay,
                          m=zeros, v={k: z.copy() for k, z in zeros.items()})


def adamw_step(params: ParamSet, grads: ParamSet,
               state: OptimizerState) -> tuple[ParamSet, OptimizerState]:
    """One bias-corrected AdamW update; returns fresh dicts, inputs are untouched."""
    if state.lr <= 0:
        raise ContractError(f"learning rate must be positive, got {state.lr}")
    if params.keys() != grads.keys() or params.keys() != state.m.keys():
        raise ContractError("parameter, gradient and optimizer-state names differ")
    b1, b2 = state.betas
    k = state.step + 1
    c1, c2 = 1.0 - b1**k, 1.0 - b2**k
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        decayed = p - state.lr * state.weight_decay * p if state.weight_decay else p
        new_p[name] = decayed - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[name], new_v[name] = m, v
    return new_p, replace(state, step=k, m=new_m, v=new_v)


def global_norm(grads: ParamSet) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_global_norm(grads: ParamSet, max_norm: float) -> ParamSet:
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads)
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}
