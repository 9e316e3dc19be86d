"""Per-transition training objectives.

All losses take the policy parameters ``theta`` and flow parameters ``phi`` as
mappings of arrays or tape leaves, so the same code serves evaluation and
differentiation. Reward values are read from the batch caches and therefore
never carry gradient.
"""

from __future__ import annotations

import numpy as np

from dagflow.align.batch import TransitionBatch
from dagflow.errors import ContractError
from dagflow.numerics import autodiff as ad
from dagflow.numerics.autodiff import Tensor


def log_db_residual(log_f_parent, log_p, log_f_child, log_q):
    """log F(x_t) + log p(x_{t-1}|x_t) - log F(x_{t-1}) - log q(x_t|x_{t-1})."""
    return log_f_parent + log_p - log_f_child - log_q


def fl_residual(log_ft_parent, log_r_parent, log_p, log_ft_child, log_r_child, log_q):
    """Residual with forward-looking flows log F = log F~ + log R(x_hat)."""
    return log_db_residual(log_ft_parent + log_r_parent, log_p, log_ft_child + log_r_child, log_q)


def _cond(batch: TransitionBatch):
    return batch.c


def db_residual(chain, flow, batch: TransitionBatch, theta, phi, expected_version=None) -> Tensor:
    """Plain detailed-balance residual; ``flow`` models log F itself and the
    terminal flow is pinned to beta * r_raw(x_0)."""
    batch.check_version(expected_version)
    log_f_parent = flow(phi, batch.x_t, batch.t, _cond(batch))
    terminal = (batch.t == 1) * batch.beta * batch.fl_child
    log_f_child = flow(phi, batch.x_prev, batch.t - 1, _cond(batch)) + terminal
    log_p = chain.log_prob(theta, batch.x_t, batch.x_prev, batch.t, _cond(batch))
    log_q = chain.forward_logpdf(batch.x_t, batch.x_prev, batch.t)
    return log_db_residual(log_f_parent, log_p, log_f_child, log_q)


def fl_db_residual(chain, flow, batch: TransitionBatch, theta, phi, expected_version=None) -> Tensor:
    batch.check_version(expected_version)
    c = _cond(batch)
    return fl_residual(
        flow(phi, batch.x_t, batch.t, c),
        batch.beta * batch.fl_parent,
        chain.log_prob(theta, batch.x_t, batch.x_prev, batch.t, c),
        flow(phi, batch.x_prev, batch.t - 1, c),
        batch.beta * batch.fl_child,
        chain.forward_logpdf(batch.x_t, batch.x_prev, batch.t),
    )


def fl_db_loss(chain, flow, batch, theta, phi, expected_version=None) -> Tensor:
    """Mean squared forward-looking DB residual over the batch."""
    return ad.mean(ad.square(fl_db_residual(chain, flow, batch, theta, phi, expected_version)))


def advantage_b(chain, flow, batch, theta, phi) -> np.ndarray:
    """Gradient-free b(x_t, x_{t-1}): the forward-looking DB residual under current theta, phi."""
    return ad.stop_gradient(fl_db_residual(chain, flow, batch, theta, phi)).data


def dag_kl_policy_loss(chain, flow, batch: TransitionBatch, theta, phi, clip_eps: float,
                       scale: float = 1.0, expected_version=None, b=None) -> Tensor:
    """mean(scale * b * clip(p_theta / p_theta_old, 1 - eps, 1 + eps)).

    The ratio's denominator is the cached rollout log-probability, so gradient
    reaches theta only through the numerator, and only while the ratio is
    strictly inside the clip interval. A precomputed ``b`` may be passed to hold
    the advantage fixed (finite-difference checks perturb theta around it).
    """
    if clip_eps <= 0:
        raise ContractError("clip epsilon must be positive")
    batch.check_version(expected_version)
    if b is None:
        b = ad.stop_gradient(fl_db_residual(chain, flow, batch, theta, phi))
    log_p = chain.log_prob(theta, batch.x_t, batch.x_prev, batch.t, _cond(batch))
    ratio = ad.exp(log_p - batch.logp_old)
    return ad.mean(scale * b * ad.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps))


def kl_regularizer(chain, batch: TransitionBatch, theta, theta_old, coef: float = 1.0) -> Tensor:
    """coef * mean ||mean_theta(x_t, t) - mean_theta_old(x_t, t)||^2 over the batch."""
    c = _cond(batch)
    cur = chain.reverse_mean(theta, batch.x_t, batch.t, c)
    old = chain.reverse_mean(theta_old, batch.x_t, batch.t, c).data
    return coef * ad.mean(ad.sum_(ad.square(cur - old), axis=1))


def whitened_advantages(batch: TransitionBatch) -> np.ndarray:
    """(beta r_raw - mean) / (std + 1e-8) within the batch, separately per condition."""
    if len(batch) < 2:
        raise ContractError("advantage whitening needs at least two transitions")
    scores = batch.beta * batch.r_raw
    adv = np.empty_like(scores)
    groups = np.zeros(len(batch), dtype=np.int64) if batch.c is None else batch.c
    for g in np.unique(groups):
        m = groups == g
        if np.all(scores[m] == scores[m][0]):
            adv[m] = 0.0  # no signal; avoid rounding noise from the mean
        else:
            adv[m] = (scores[m] - scores[m].mean()) / (scores[m].std() + 1e-8)
    return adv


def clipped_surrogate(ratio, adv, clip_eps: float) -> Tensor:
    """-mean(min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A))."""
    if clip_eps <= 0:
        raise ContractError("clip epsilon must be positive")
    ratio = ad.as_tensor(ratio)
    clipped = ad.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    return -ad.mean(ad.minimum(ratio * adv, clipped))


def ddpo_loss(chain, batch: TransitionBatch, theta, clip_eps: float, expected_version=None) -> Tensor:
    """Clipped policy-gradient surrogate with a terminal-reward advantage on every step."""
    batch.check_version(expected_version)
    adv = whitened_advantages(batch)
    log_p = chain.log_prob(theta, batch.x_t, batch.x_prev, batch.t, _cond(batch))
    return clipped_surrogate(ad.exp(log_p - batch.logp_old), adv, clip_eps)
