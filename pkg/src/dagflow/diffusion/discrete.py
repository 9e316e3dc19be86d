"""Small finite-alphabet chains on which every quantity can be enumerated exactly."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from dagflow.diffusion.trajectory import Trajectory, per_trajectory_rng
from dagflow.errors import ContractError
from dagflow.numerics import autodiff as ad
from dagflow.numerics.autodiff import ParamSet, Tensor

LOGITS = "theta.logits"


@dataclass(frozen=True, eq=False)
class DiscreteChainSpec:
    """``Q[t-1][i, j] = q(x_t = j | x_{t-1} = i)``; ``source[i] = p(x_T = i)``."""

    S: int
    T: int
    Q: np.ndarray
    source: np.ndarray

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        src = np.asarray(self.source, dtype=np.float64)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "source", src)
        if Q.shape != (self.T, self.S, self.S):
            raise ContractError(f"Q must have shape (T, S, S) = {(self.T, self.S, self.S)}, got {Q.shape}")
        if np.any(Q < 0) or np.max(np.abs(Q.sum(axis=2) - 1.0)) > 1e-12:
            raise ContractError("every forward kernel row must be a probability vector")
        if src.shape != (self.S,) or np.any(src < 0) or abs(src.sum() - 1.0) > 1e-12:
            raise ContractError("source must be a probability vector over the alphabet")

    @property
    def log_Q(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.Q)

    def check_states(self, *xs) -> None:
        for x in xs:
            x = np.asarray(x)
            if np.any(x < 0) or np.any(x >= self.S) or not np.issubdtype(x.dtype, np.integer):
                raise ContractError(f"states must be integers in [0, {self.S})")

    def to_dict(self) -> dict:
        return {"S": self.S, "T": self.T}


def lazy_uniform_chain(S: int = 16, T: int = 5, stay: float = 0.3, source=None) -> DiscreteChainSpec:
    """Stay put with probability ``stay``, otherwise jump uniformly (self included)."""
    if S < 1 or T < 1 or not 0.0 <= stay <= 1.0:
        raise ContractError("need S >= 1, T >= 1 and stay in [0, 1]")
    Q = stay * np.eye(S) + (1.0 - stay) / S * np.ones((S, S))
    src = np.full(S, 1.0 / S) if source is None else np.asarray(source, dtype=np.float64)
    return DiscreteChainSpec(S, T, np.broadcast_to(Q, (T, S, S)).copy(), src)


def discrete_reverse_logpmf(spec: DiscreteChainSpec, logits, x_t, x_prev, t) -> np.ndarray:
    """log p(x_{t-1} | x_t) under a (T, S, S) logit table ``logits[t-1, x_t, x_{t-1}]``."""
    spec.check_states(np.asarray(x_t), np.asarray(x_prev))
    t = np.asarray(t)
    if np.any(t < 1) or np.any(t > spec.T):
        raise ContractError(f"t must be in [1, {spec.T}]")
    rows = np.asarray(logits, dtype=np.float64)[t - 1, x_t]
    m = rows.max(axis=-1, keepdims=True)
    lsm = rows - m - np.log(np.exp(rows - m).sum(axis=-1, keepdims=True))
    return np.take_along_axis(lsm, np.asarray(x_prev)[..., None], axis=-1)[..., 0]


def policy_tables(logits) -> np.ndarray:
    """Row-normalized probabilities P[t-1, x_t, x_{t-1}] from a logit table."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


class DiscreteChain:
    """Tabular reverse policy over a finite alphabet.

    The data prediction at x_t is x_t itself, so the forward-looking reward
    term reduces to R(x_t).
    """

    discrete = True

    def __init__(self, spec: DiscreteChainSpec):
        self.spec = spec

    @property
    def T(self) -> int:
        return self.spec.T

    def init_params(self, rng: np.random.Generator | None = None) -> ParamSet:
        return {LOGITS: np.zeros((self.spec.T, self.spec.S, self.spec.S))}

    def predict_x0(self, params, x_t, t, c=None) -> np.ndarray:
        return np.asarray(x_t)

    def _log_rows(self, params, x_t, t) -> Tensor:
        x_t, t = np.asarray(x_t), np.asarray(t)
        t = np.broadcast_to(t, x_t.shape)
        return ad.log_softmax(ad.index(ad.as_tensor(params[LOGITS]), (t - 1, x_t)), axis=-1)

    def log_prob(self, params, x_t, x_prev, t, c=None) -> Tensor:
        self.spec.check_states(x_t, x_prev)
        rows = self._log_rows(params, x_t, t)
        return ad.index(rows, (np.arange(len(x_prev)), np.asarray(x_prev)))

    def reverse_mean(self, params, x_t, t, c=None) -> Tensor:
        """Expected one-hot of x_{t-1}, i.e. the probability row."""
        return ad.exp(self._log_rows(params, x_t, t))

    def forward_logpdf(self, x_t, x_prev, t) -> np.ndarray:
        return self.spec.log_Q[np.asarray(t) - 1, np.asarray(x_prev), np.asarray(x_t)]

    def rollout(self, params: Mapping, n: int, conditions=None, key=(0,),
                version: int = 0) -> list[Trajectory]:
        if n < 1:
            raise ContractError(f"rollout count must be >= 1, got {n}")
        S, T = self.spec.S, self.spec.T
        u = np.stack([per_trajectory_rng(key, i).random(T + 1) for i in range(n)])
        probs = policy_tables(params[LOGITS])
        states = np.empty((n, T + 1), dtype=np.int64)
        logp = np.empty((n, T))
        states[:, T] = _inverse_cdf(np.broadcast_to(self.spec.source, (n, S)), u[:, T])
        for t in range(T, 0, -1):
            rows = probs[t - 1, states[:, t]]
            states[:, t - 1] = _inverse_cdf(rows, u[:, t - 1])
        for t in range(T, 0, -1):
            logp[:, t - 1] = discrete_reverse_logpmf(self.spec, params[LOGITS], states[:, t],
                                                     states[:, t - 1], t)
        return [
            Trajectory(states=states[i], logp=logp[i], xhat=states[i].copy(), version=version,
                       condition=None if conditions is None else int(conditions[i]))
            for i in range(n)
        ]

    def sample(self, params, n: int, conditions=None, key=(0,)) -> np.ndarray:
        return np.array([tr.x0 for tr in self.rollout(params, n, conditions, key)])


def _inverse_cdf(rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(rows, axis=1)
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, rows.shape[1] - 1)
