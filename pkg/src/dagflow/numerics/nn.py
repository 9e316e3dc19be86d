"""Multilayer perceptrons and the time/condition input encoding."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from dagflow.errors import ContractError
from dagflow.numerics import autodiff as ad
from dagflow.numerics.autodiff import ParamSet, Tensor


@dataclass(frozen=True)
class MLPSpec:
    sizes: tuple[int, ...]
    activation: str = "tanh"

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1


_ACTIVATIONS = {"tanh": ad.tanh}


def init_mlp(spec: MLPSpec, rng: np.random.Generator, prefix: str,
             zero_last: bool = False) -> ParamSet:
    """Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    params: ParamSet = {}
    for i, (fan_in, fan_out) in enumerate(zip(spec.sizes[:-1], spec.sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        last = i == spec.n_layers - 1
        if last and zero_last:
            w, b = np.zeros((fan_in, fan_out)), np.zeros(fan_out)
        else:
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=fan_out)
        params[f"{prefix}.l{i}.w"] = w
        params[f"{prefix}.l{i}.b"] = b
    return params


def mlp_apply(spec: MLPSpec, params: Mapping, x, prefix: str) -> Tensor:
    x = ad.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != spec.sizes[0]:
        raise ContractError(f"{prefix}: expected input width {spec.sizes[0]}, got shape {x.shape}")
    act = _ACTIVATIONS[spec.activation]
    h = x
    for i in range(spec.n_layers):
        h = ad.matmul(h, params[f"{prefix}.l{i}.w"]) + params[f"{prefix}.l{i}.b"]
        if i < spec.n_layers - 1:
            h = act(h)
    return h


def timestep_embedding(t, dim: int, horizon: int) -> np.ndarray:
    """Sinusoidal features of t/horizon; shape (len(t), dim)."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if dim == 0:
        return np.zeros((t.size, 0))
    half = dim // 2
    freqs = np.exp(-np.log(100.0) * np.arange(half) / max(half - 1, 1))
    arg = (t / horizon)[:, None] * np.pi * 10.0 * freqs[None, :]
    emb = np.concatenate([np.sin(arg), np.cos(arg)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, (t / horizon)[:, None]], axis=1)
    return emb


@dataclass(frozen=True)
class NetSpec:
    """Architecture of an MLP fed with (x, time embedding, condition embedding)."""

    data_dim: int
    out_dim: int
    horizon: int
    hidden: int = 64
    depth: int = 3
    time_dim: int = 16
    n_conditions: int = 0
    cond_dim: int = 8

    @property
    def mlp(self) -> MLPSpec:
        width_in = self.data_dim + self.time_dim + (self.cond_dim if self.n_conditions else 0)
        return MLPSpec((width_in,) + (self.hidden,) * self.depth + (self.out_dim,))

    def to_dict(self) -> dict:
        return asdict(self)


def init_conditional_net(spec: NetSpec, rng: np.random.Generator, prefix: str,
                         zero_last: bool = False) -> ParamSet:
    params = init_mlp(spec.mlp, rng, prefix, zero_last=zero_last)
    if spec.n_conditions:
        params[f"{prefix}.cond"] = rng.normal(0.0, 1.0, size=(spec.n_conditions, spec.cond_dim))
    return params


def conditional_net_apply(spec: NetSpec, params: Mapping, x, t, c, prefix: str) -> Tensor:
    x = ad.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != spec.data_dim:
        raise ContractError(f"{prefix}: expected data width {spec.data_dim}, got shape {x.shape}")
    t = np.broadcast_to(np.asarray(t), (x.shape[0],))
    parts = [x, timestep_embedding(t, spec.time_dim, spec.horizon)]
    if spec.n_conditions:
        if c is None:
            raise ContractError(f"{prefix}: network is conditional but no condition was given")
        c = np.broadcast_to(np.asarray(c, dtype=np.int64), (x.shape[0],))
        parts.append(ad.index(ad.as_tensor(params[f"{prefix}.cond"]), c))
    return mlp_apply(spec.mlp, params, ad.concat(parts, axis=1), prefix)
