"""Continuous Gaussian denoising chain with a data-prediction network."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from dagflow.diffusion.schedule import LOG_2PI, NoiseSchedule, gaussian_logpdf, q_transition_logpdf
from dagflow.diffusion.trajectory import Trajectory, per_trajectory_rng
from dagflow.errors import ContractError, NumericalError, RolloutDivergenceError
from dagflow.numerics import autodiff as ad
from dagflow.numerics.autodiff import ParamSet, Tensor
from dagflow.numerics.nn import NetSpec, conditional_net_apply, init_conditional_net

PREFIX = "theta"


class DataPredictionNet:
    """x_hat_theta(x_t, t, c): predicts the clean sample from a noisy one."""

    def __init__(self, spec: NetSpec):
        if spec.out_dim != spec.data_dim:
            raise ContractError("data-prediction output width must equal the data dimension")
        self.spec = spec

    def init(self, rng: np.random.Generator) -> ParamSet:
        return init_conditional_net(self.spec, rng, PREFIX)

    def __call__(self, params: Mapping, x_t, t, c=None) -> Tensor:
        return conditional_net_apply(self.spec, params, x_t, t, c, PREFIX)


def posterior_coefficients(schedule: NoiseSchedule, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(coef on x_t, coef on x_hat, variance) of p_theta(x_{t-1} | x_t)."""
    t = np.asarray(t)
    var = schedule.kernel_variance(t)
    a_t, a_p = schedule.alphas[t], schedule.alphas[t - 1]
    s_t2, s_p2 = schedule.sigmas[t] ** 2, schedule.sigmas[t - 1] ** 2
    c_x = s_p2 * a_t / (s_t2 * a_p)
    c_hat = (a_p**2 - a_t**2) / (s_t2 * a_p)
    return c_x, c_hat, var


def p_theta_params(schedule: NoiseSchedule, net: DataPredictionNet, params, x_t, t, c=None):
    """Mean (Tensor, differentiable through x_hat) and variance (array) of the reverse kernel."""
    x_t = np.asarray(x_t, dtype=np.float64)
    t = np.broadcast_to(np.asarray(t), (x_t.shape[0],))
    c_x, c_hat, var = posterior_coefficients(schedule, t)
    xhat = net(params, x_t, t, c)
    mean = c_x[:, None] * x_t + c_hat[:, None] * xhat
    return mean, var


def p_theta_logpdf(schedule, net, params, x_t, x_prev, t, c=None) -> Tensor:
    mean, var = p_theta_params(schedule, net, params, x_t, t, c)
    d = mean.shape[1]
    sq = ad.sum_(ad.square(ad.as_tensor(x_prev) - mean), axis=1)
    return -0.5 * (sq / var + d * (LOG_2PI + np.log(var)))


def p_theta_sample(schedule, net, params, x_t, t, c=None, noise=None,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    mean, var = p_theta_params(schedule, net, params, x_t, t, c)
    if noise is None:
        noise = rng.standard_normal(mean.shape)
    return mean.data + np.sqrt(var)[:, None] * noise


class GaussianChain:
    """Reverse chain p(x_T) = N(0, I), p_theta(x_{t-1}|x_t) Gaussian with forward-kernel variance."""

    discrete = False

    def __init__(self, schedule: NoiseSchedule, net: DataPredictionNet):
        self.schedule = schedule
        self.net = net

    @property
    def T(self) -> int:
        return self.schedule.T

    @property
    def data_dim(self) -> int:
        return self.net.spec.data_dim

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        return self.net.init(rng)

    def predict_x0(self, params, x_t, t, c=None) -> Tensor:
        x_t = np.asarray(x_t, dtype=np.float64)
        return self.net(params, x_t, np.broadcast_to(np.asarray(t), (x_t.shape[0],)), c)

    def reverse_mean(self, params, x_t, t, c=None) -> Tensor:
        return p_theta_params(self.schedule, self.net, params, x_t, t, c)[0]

    def log_prob(self, params, x_t, x_prev, t, c=None) -> Tensor:
        return p_theta_logpdf(self.schedule, self.net, params, x_t, x_prev, t, c)

    def forward_logpdf(self, x_t, x_prev, t) -> np.ndarray:
        return q_transition_logpdf(self.schedule, x_t, x_prev, t)

    def rollout(self, params: Mapping, n: int, conditions: Sequence[int] | None = None,
                key=(0,), version: int = 0) -> list[Trajectory]:
        """n trajectories; trajectory i draws all its noise from ``per_trajectory_rng(key, i)``."""
        if n < 1:
            raise ContractError(f"rollout count must be >= 1, got {n}")
        T, d = self.T, self.data_dim
        noise = np.stack([per_trajectory_rng(key, i).standard_normal((T + 1, d)) for i in range(n)])
        c = None if conditions is None else np.asarray(conditions, dtype=np.int64)
        states = np.empty((n, T + 1, d))
        xhat = np.empty((n, T + 1, d))
        logp = np.empty((n, T))
        states[:, T] = noise[:, T]
        for t in range(T, 0, -1):
            x_t = states[:, t]
            tt = np.full(n, t)
            c_x, c_hat, var = posterior_coefficients(self.schedule, tt)
            try:
                pred = self.predict_x0(params, x_t, tt, c).data
            except NumericalError as exc:
                raise RolloutDivergenceError(f"non-finite network output at t={t}: {exc}",
                                             prefix=states[:, t:].copy()) from exc
            mean = c_x[:, None] * x_t + c_hat[:, None] * pred
            x_prev = mean + np.sqrt(var)[:, None] * noise[:, t - 1]
            if not np.all(np.isfinite(x_prev)):
                raise RolloutDivergenceError(f"non-finite state at t={t - 1}",
                                             prefix=states[:, t:].copy())
            xhat[:, t] = pred
            states[:, t - 1] = x_prev
            logp[:, t - 1] = gaussian_logpdf(x_prev, mean, var)
        xhat[:, 0] = states[:, 0]
        return [
            Trajectory(states=states[i], logp=logp[i], xhat=xhat[i], version=version,
                       condition=None if c is None else int(c[i]))
            for i in range(n)
        ]

    def sample(self, params, n: int, conditions=None, key=(0,)) -> np.ndarray:
        return np.stack([tr.x0 for tr in self.rollout(params, n, conditions, key)])


def denoising_loss(chain: GaussianChain, params, x0, t, noise, c=None) -> Tensor:
    """Batch mean of ||x0 - x_hat(alpha_t x0 + sigma_t eps, t)||^2."""
    x0 = np.asarray(x0, dtype=np.float64)
    sched = chain.schedule
    x_t = sched.alphas[t][:, None] * x0 + sched.sigmas[t][:, None] * noise
    xhat = chain.net(params, x_t, t, c)
    return ad.mean(ad.sum_(ad.square(x0 - xhat), axis=1))


def sample_denoising_inputs(chain: GaussianChain, n: int, rng: np.random.Generator):
    t = rng.integers(1, chain.T + 1, size=n)
    noise = rng.standard_normal((n, chain.data_dim))
    return t, noise

