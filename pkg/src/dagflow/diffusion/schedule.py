"""Signal/noise schedules and the Gaussian forward kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dagflow.errors import ContractError, DegenerateKernelError

ALPHA_BAR_MIN = 1e-5
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """alphas[t], sigmas[t] for t = 0..T with alpha_t**2 + sigma_t**2 == 1."""

    kind: str
    alphas: np.ndarray
    sigmas: np.ndarray

    @property
    def T(self) -> int:
        return len(self.alphas) - 1

    @classmethod
    def from_alpha_bar(cls, kind: str, alpha_bar, validate: bool = True) -> "NoiseSchedule":
        alpha_bar = np.asarray(alpha_bar, dtype=np.float64)
        sched = cls(kind, np.sqrt(alpha_bar), np.sqrt(1.0 - alpha_bar))
        if validate:
            sched.check()
        return sched

    def check(self) -> None:
        a, s = self.alphas, self.sigmas
        if self.T < 1:
            raise ContractError("schedule horizon must be >= 1")
        if np.max(np.abs(a * a + s * s - 1.0)) > 1e-12:
            raise ContractError("alpha^2 + sigma^2 != 1")
        if a[0] != 1.0 or s[0] != 0.0:
            raise ContractError("schedule must start at alpha_0 = 1, sigma_0 = 0")
        if np.any(np.diff(a) >= 0):
            raise ContractError(f"alphas must be strictly decreasing ({self.kind}, T={self.T})")

    def kernel_variance(self, t) -> np.ndarray:
        """Variance 1 - alpha_t^2/alpha_{t-1}^2 shared by q(x_t|x_{t-1}) and p(x_{t-1}|x_t)."""
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ContractError(f"transition index must be in [1, {self.T}]")
        var = 1.0 - (self.alphas[t] / self.alphas[t - 1]) ** 2
        if np.any(var <= 0.0):
            raise DegenerateKernelError(f"zero-variance kernel at t={t[var <= 0.0] if t.ndim else t}")
        return var

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T": self.T}


def make_schedule(kind: str, T: int) -> NoiseSchedule:
    """``cosine``: alpha_bar_t = cos^2(pi t / 2T); ``linear-cumulative``: the running
    product of the 1000-step DDPM linear betas (1e-4 to 0.02), read off at t * 1000 / T
    with linear interpolation of log alpha_bar. Both are clamped to alpha_bar >= 1e-5."""
    if T < 1:
        raise ContractError(f"T must be >= 1, got {T}")
    t = np.arange(T + 1)
    if kind == "cosine":
        abar = np.cos(t / T * np.pi / 2.0) ** 2
    elif kind == "linear-cumulative":
        log_ref = np.concatenate([[0.0], np.cumsum(np.log1p(-np.linspace(1e-4, 0.02, 1000)))])
        abar = np.exp(np.interp(t * 1000.0 / T, np.arange(1001), log_ref))
    else:
        raise ContractError(f"unknown schedule kind {kind!r}")
    abar = np.clip(abar, ALPHA_BAR_MIN, 1.0)
    abar[0] = 1.0
    return NoiseSchedule.from_alpha_bar(kind, abar)


def gaussian_logpdf(x, mean, var) -> np.ndarray:
    """Isotropic Gaussian log-density summed over the last axis."""
    x, mean = np.asarray(x, dtype=np.float64), np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    d = x.shape[-1]
    return -0.5 * (np.sum((x - mean) ** 2, axis=-1) / var + d * (LOG_2PI + np.log(var)))


def q_transition_logpdf(schedule: NoiseSchedule, x_t, x_prev, t) -> np.ndarray:
    """log q(x_t | x_{t-1}) = log N(x_t; (a_t/a_{t-1}) x_{t-1}, (1 - a_t^2/a_{t-1}^2) I).

    ``x_t`` and ``x_prev`` have shape (..., d); ``t`` broadcasts over the leading axes.
    """
    t = np.asarray(t)
    var = schedule.kernel_variance(t)
    ratio = schedule.alphas[t] / schedule.alphas[t - 1]
    x_prev = np.asarray(x_prev, dtype=np.float64)
    return gaussian_logpdf(x_t, np.asarray(ratio)[..., None] * x_prev, var)


def q_marginal_sample(schedule: NoiseSchedule, x0, t, noise) -> np.ndarray:
    t = np.asarray(t)
    a = np.asarray(schedule.alphas[t])[..., None]
    s = np.asarray(schedule.sigmas[t])[..., None]
    return a * np.asarray(x0, dtype=np.float64) + s * np.asarray(noise, dtype=np.float64)
