"""Black-box terminal rewards and the tempered log-reward convention.

Rewards are plain numpy functions of samples: callers receive values only,
never a differentiable handle. The GFlowNet reward is exp(beta * r_raw) and is
only ever handled through its logarithm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import log_softmax, logsumexp

from dagflow.errors import ContractError

RewardFn = Callable[[dict, np.ndarray, np.ndarray | None], np.ndarray]
_REGISTRY: dict[str, tuple[RewardFn, dict]] = {}


class UnknownRewardError(ContractError):
    pass


def register(name: str, defaults: dict):
    def deco(fn: RewardFn) -> RewardFn:
        _REGISTRY[name] = (fn, defaults)
        return fn
    return deco


def reward_ids() -> list[str]:
    return sorted(_REGISTRY)


def reward_defaults(reward_id: str) -> dict:
    if reward_id not in _REGISTRY:
        raise UnknownRewardError(f"unknown reward id {reward_id!r}; known: {reward_ids()}")
    return dict(_REGISTRY[reward_id][1])


@dataclass(frozen=True)
class RewardSpec:
    id: str
    params: dict = field(default_factory=dict)
    beta_max: float = 20.0
    anneal_fraction: float = 0.5

    def __post_init__(self):
        merged = reward_defaults(self.id)
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ContractError(f"reward {self.id!r} has no parameter(s) {sorted(unknown)}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        if self.beta_max < 0:
            raise ContractError("beta_max must be >= 0")
        if not 0.0 < self.anneal_fraction <= 1.0:
            raise ContractError("anneal_fraction must be in (0, 1]")


def eval_raw_reward(spec: RewardSpec, x0, c=None) -> np.ndarray:
    """r_raw for a batch of terminal samples (rows, or integer states for tables)."""
    fn, _ = _REGISTRY[spec.id]
    out = np.asarray(fn(spec.params, np.asarray(x0), None if c is None else np.asarray(c)),
                     dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ContractError(f"reward {spec.id!r} is not finite on the given samples")
    return out


def beta_at(spec: RewardSpec, step: float, total_steps: float) -> float:
    """beta_max * min(1, step / (anneal_fraction * total_steps))."""
    if step < 0 or step > total_steps:
        raise ContractError(f"step {step} outside [0, {total_steps}]")
    horizon = spec.anneal_fraction * total_steps
    if horizon <= 0:
        return float(spec.beta_max)
    return float(spec.beta_max * min(1.0, step / horizon))


def log_reward(spec: RewardSpec, x0, c=None, step: float = 0, total_steps: float = 0) -> np.ndarray:
    return beta_at(spec, step, total_steps) * eval_raw_reward(spec, x0, c)


# -- built-in rewards ---------------------------------------------------------

def default_discrete_table(S: int, dynamic_range: float = 10.0) -> list[float]:
    """log of a permuted ramp from 1 to ``dynamic_range`` (so R spans that factor at beta=1)."""
    ramp = np.linspace(1.0, dynamic_range, S)
    perm = (np.arange(S) * 7) % S if np.gcd(7, S) == 1 else np.arange(S)
    return [float(v) for v in np.log(ramp[perm])]


def _as_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def _squeeze_like(out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return out[0] if np.asarray(x).ndim == 1 else out


def _gmm_logpdf(x, centers, weights, std) -> np.ndarray:
    centers = np.asarray(centers, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    d = x.shape[1]
    sq = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
    comp = -0.5 * sq / std**2 - 0.5 * d * np.log(2.0 * np.pi * std**2)
    return logsumexp(comp + np.log(w), axis=1)


def _ring_centers(k: int, radius: float) -> list[list[float]]:
    ang = np.arange(k) * 2.0 * np.pi / k
    return np.round(radius * np.stack([np.cos(ang), np.sin(ang)], 1), 12).tolist()


@register("gmm", {"centers": _ring_centers(4, 4.0), "weights": [1.0] * 4, "std": 1.0})
def gmm_reward(params, x, c):
    """Log-density of an isotropic Gaussian mixture."""
    rows = _as_rows(x)
    return _squeeze_like(_gmm_logpdf(rows, params["centers"], params["weights"], params["std"]), x)


@register("ring", {"radius": 6.0})
def ring_reward(params, x, c):
    """-(||x|| - radius)^2, maximal (zero) on the circle."""
    rows = _as_rows(x)
    return _squeeze_like(-(np.linalg.norm(rows, axis=1) - params["radius"]) ** 2, x)


@register("quadrant", {"quadrant": 1})
def quadrant_reward(params, x, c):
    """Zero inside the chosen open quadrant, minus the squared distance to it outside."""
    q = int(params["quadrant"])
    if q not in (1, 2, 3, 4):
        raise ContractError("quadrant must be 1..4")
    signs = np.array({1: (1, 1), 2: (-1, 1), 3: (-1, -1), 4: (1, -1)}[q], dtype=np.float64)
    rows = _as_rows(x)
    gap = np.maximum(0.0, -rows * signs)
    return _squeeze_like(-(gap**2).sum(axis=1), x)


@register("table", {"table": default_discrete_table(16)})
def table_reward(params, x, c):
    """Lookup of r_raw by integer state."""
    table = np.asarray(params["table"], dtype=np.float64)
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.integer) or np.any(x < 0) or np.any(x >= len(table)):
        raise ContractError(f"table reward needs integer states in [0, {len(table)})")
    return table[x]


@register("classifier", {"centers": _ring_centers(4, 4.0), "std": 1.0, "targets": [0, 1]})
def classifier_reward(params, x, c):
    """log p(class | x) of a fixed linear-logit classifier over Gaussian blobs.

    With a condition c the class is c; unconditionally it is the log-probability
    of landing in any of ``targets``.
    """
    centers = np.asarray(params["centers"], dtype=np.float64)
    s2 = params["std"] ** 2
    rows = _as_rows(x)
    logits = rows @ centers.T / s2 - 0.5 * (centers**2).sum(1) / s2
    logp = log_softmax(logits, axis=1)
    if c is None:
        out = logsumexp(logp[:, list(params["targets"])], axis=1)
    else:
        cls = np.broadcast_to(np.asarray(c, dtype=np.int64), (rows.shape[0],))
        if np.any(cls < 0) or np.any(cls >= len(centers)):
            raise ContractError(f"condition must be a class id in [0, {len(centers)})")
        out = logp[np.arange(rows.shape[0]), cls]
    return _squeeze_like(out, x)
