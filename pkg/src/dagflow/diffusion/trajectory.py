from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One reverse rollout x_T -> x_0, indexed by diffusion time.

    ``states[t]`` is x_t (vector for Gaussian chains, integer for discrete ones),
    ``logp[t-1]`` is log p_theta_old(x_{t-1} | x_t) at rollout time and
    ``xhat[t]`` is the cached data prediction at x_t (``xhat[0]`` is x_0 itself).
    ``fl_raw[t]`` holds r_raw(xhat[t]) once rewards are attached, with
    ``fl_raw[0] == r_raw``.
    """

    states: np.ndarray
    logp: np.ndarray
    xhat: np.ndarray
    version: int
    condition: int | None = None
    r_raw: float | None = None
    fl_raw: np.ndarray | None = None

    @property
    def T(self) -> int:
        return len(self.logp)

    @property
    def x0(self):
        return self.states[0]

    def with_rewards(self, r_raw: float, fl_raw: np.ndarray) -> "Trajectory":
        return replace(self, r_raw=float(r_raw), fl_raw=np.asarray(fl_raw, dtype=np.float64))


def per_trajectory_rng(key, index: int) -> np.random.Generator:
    """Independent stream for trajectory ``index`` under ``key`` (a tuple of ints)."""
    return np.random.default_rng([*key, index])
