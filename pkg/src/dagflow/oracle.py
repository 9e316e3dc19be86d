"""Exact references: DP flows and terminal distributions on discrete chains,
the score-function identity for the per-transition KL, and finite differences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.special import logsumexp

from dagflow.diffusion.discrete import DiscreteChainSpec, policy_tables
from dagflow.errors import ContractError
from dagflow.numerics import autodiff as ad

MAX_STATES = 64
MAX_HORIZON = 12


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """``log_flows[t, x]`` for t = 0..T; ``policy[t-1, x_t, x_{t-1}]`` is the DB-optimal
    reverse policy; ``terminal`` is what that policy produces from the chain's source."""

    log_flows: np.ndarray
    policy: np.ndarray
    log_Z: float
    terminal: np.ndarray
    target: np.ndarray

    @property
    def floor(self) -> float:
        return total_variation(self.terminal, self.target)

    @property
    def log_policy(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.policy)


def _check_size(spec: DiscreteChainSpec) -> None:
    if spec.S > MAX_STATES or spec.T > MAX_HORIZON:
        raise ContractError(f"enumeration limited to S <= {MAX_STATES}, T <= {MAX_HORIZON}")


def exact_flows(spec: DiscreteChainSpec, log_reward) -> ExactSolution:
    """Forward recursion F(x_t, t) = sum_{x'} F(x', t-1) q(x_t | x'), from F(., 0) = R.

    ``log_reward`` is log R per state (finite, i.e. R > 0).
    """
    _check_size(spec)
    log_r = np.asarray(log_reward, dtype=np.float64)
    if log_r.shape != (spec.S,) or not np.all(np.isfinite(log_r)):
        raise ContractError("rewards must be strictly positive (finite log-reward per state)")
    log_q = spec.log_Q
    log_f = np.empty((spec.T + 1, spec.S))
    log_f[0] = log_r
    for t in range(1, spec.T + 1):
        log_f[t] = logsumexp(log_f[t - 1][:, None] + log_q[t - 1], axis=0)
    # p*(x'|x_t) = F(x', t-1) q(x_t|x') / F(x_t, t), indexed [t-1, x_t, x']
    log_pol = log_f[:-1, None, :] + np.swapaxes(log_q, 1, 2) - log_f[1:, :, None]
    policy = np.exp(log_pol)
    log_z = float(logsumexp(log_r))
    return ExactSolution(log_flows=log_f, policy=policy, log_Z=log_z,
                         terminal=terminal_distribution(spec, policy),
                         target=np.exp(log_r - log_z))


def terminal_distribution(spec: DiscreteChainSpec, policy) -> np.ndarray:
    """Marginal of x_0 when x_T ~ source and x_{t-1} ~ policy[t-1, x_t, :]."""
    _check_size(spec)
    policy = np.asarray(policy, dtype=np.float64)
    p = spec.source.copy()
    for t in range(spec.T, 0, -1):
        p = p @ policy[t - 1]
    return p


def terminal_distribution_from_logits(spec: DiscreteChainSpec, logits) -> np.ndarray:
    return terminal_distribution(spec, policy_tables(logits))


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def kl_divergence(p, q) -> float:
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    m = p > 0
    return float(np.sum(p[m] * (np.log(p[m]) - np.log(q[m]))))


def optimal_floor(spec: DiscreteChainSpec, log_reward) -> float:
    """TV between the best terminal distribution reachable from the fixed source and R/Z."""
    return exact_flows(spec, log_reward).floor


def consistent_source(spec: DiscreteChainSpec, log_reward) -> DiscreteChainSpec:
    """Same chain with p(x_T) proportional to the exact flow F(x_T, T)."""
    sol = exact_flows(spec, log_reward)
    src = np.exp(sol.log_flows[-1] - logsumexp(sol.log_flows[-1]))
    return DiscreteChainSpec(spec.S, spec.T, spec.Q, src)


def db_identity_residual(spec: DiscreteChainSpec, sol: ExactSolution) -> float:
    """max |log F(x_t) + log p*(x'|x_t) - log F(x', t-1) - log q(x_t|x')| over all edges."""
    log_q = np.swapaxes(spec.log_Q, 1, 2)  # [t-1, x_t, x']
    lhs = sol.log_flows[1:, :, None] + sol.log_policy
    rhs = sol.log_flows[:-1, None, :] + log_q
    live = np.isfinite(log_q)
    return float(np.max(np.abs(lhs - rhs)[live]))


# -- per-transition KL and its score-function gradient -------------------------

def transition_kl(logits, log_target) -> ad.Tensor:
    """KL(softmax(logits) || target) with an unnormalized log-target, by enumeration."""
    log_p = ad.log_softmax(logits)
    return ad.sum_(ad.exp(log_p) * (log_p - log_target))


def reinforce_gradient(logits, log_target) -> np.ndarray:
    """sum_j p_j b_j grad log p_j with b_j = log p_j - log target_j and the softmax score e_j - p."""
    logits = np.asarray(logits, dtype=np.float64)
    log_p = logits - logsumexp(logits)
    p = np.exp(log_p)
    b = log_p - np.asarray(log_target, dtype=np.float64)
    score = np.eye(len(p)) - p[None, :]  # row j: grad_logits log p_j
    return (p * b) @ score


def score_identity_gap(logits, log_target) -> float:
    """max |d KL / d logits - E_p[b grad log p]| for one enumerable transition.

    ``log_target[j]`` is log F(x_{t-1}=j) + log q(x_t | j) - log F(x_t).
    """
    exact = ad.grad(lambda p: transition_kl(p["logits"], log_target),
                    {"logits": np.asarray(logits, dtype=np.float64)})["logits"]
    return float(np.max(np.abs(exact - reinforce_gradient(logits, log_target))))


def random_score_identity_instance(rng: np.random.Generator, max_states: int = 8):
    """Random logits plus a target built from random positive flows and a random kernel column."""
    S = int(rng.integers(2, max_states + 1))
    logits = rng.normal(0.0, 2.0, size=S)
    log_f_child = np.log(rng.uniform(0.1, 10.0, size=S))
    log_q = np.log(rng.dirichlet(np.ones(S)))
    log_f_parent = float(np.log(rng.uniform(0.1, 10.0)))
    return logits, log_f_child + log_q - log_f_parent


def gaussian_kl_gradient(mu, log_s, m, v) -> np.ndarray:
    """d/d(mu, log s) of KL(N(mu, s^2) || N(m, v))."""
    s2 = np.exp(2.0 * log_s)
    return np.array([(mu - m) / v, s2 / v - 1.0])


def gaussian_reinforce_samples(mu, log_s, m, v, n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-draw b * grad log p for x ~ N(mu, s^2); their mean estimates the KL gradient."""
    s = np.exp(log_s)
    x = mu + s * rng.standard_normal(n)
    log_p = -0.5 * ((x - mu) / s) ** 2 - log_s - 0.5 * np.log(2 * np.pi)
    log_g = -0.5 * (x - m) ** 2 / v - 0.5 * np.log(2 * np.pi * v)
    b = log_p - log_g
    score = np.stack([(x - mu) / s**2, ((x - mu) / s) ** 2 - 1.0], axis=1)
    return b[:, None] * score


# -- finite differences ---------------------------------------------------------

def finite_diff(loss: Callable[[Mapping[str, np.ndarray]], float],
                params: Mapping[str, np.ndarray], step: float = 1e-5,
                names=None) -> dict[str, np.ndarray]:
    """Central differences per coordinate with step ``step * max(1, |theta_i|)``."""
    out = {}
    for name in (names or params):
        base = np.asarray(params[name], dtype=np.float64)
        g = np.zeros_like(base)
        flat = g.reshape(-1)
        for i in range(base.size):
            h = step * max(1.0, abs(base.flat[i]))
            plus, minus = base.copy(), base.copy()
            plus.flat[i] += h
            minus.flat[i] -= h
            f_plus = loss({**params, name: plus})
            f_minus = loss({**params, name: minus})
            flat[i] = (f_plus - f_minus) / (2.0 * h)
        out[name] = g
    return out


def max_relative_error(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray],
                       floor: float = 1e-6) -> float:
    """max_i |a_i - b_i| / max(|a_i|, |b_i|, floor) across all tensors."""
    worst = 0.0
    for k in a:
        x, y = np.asarray(a[k]), np.asarray(b[k])
        den = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        if x.size:
            worst = max(worst, float(np.max(np.abs(x - y) / den)))
    return worst
