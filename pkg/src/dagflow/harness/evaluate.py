"""Distribution metrics for trained samplers."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from dagflow import oracle
from dagflow.diffusion.discrete import LOGITS
from dagflow.errors import ContractError
from dagflow.rewards import RewardSpec, eval_raw_reward


def histogram_edges(bins: int, half_width: float) -> np.ndarray:
    return np.linspace(-half_width, half_width, bins + 1)


def tempered_bin_log_masses(reward: RewardSpec, beta: float, bins: int, half_width: float,
                            sub: int = 8, c=None) -> np.ndarray:
    """log of the normalized mass of exp(beta * r_raw) in each 2D grid cell, by a
    ``sub x sub`` midpoint rule inside every cell."""
    edges = histogram_edges(bins, half_width)
    h = (edges[1] - edges[0]) / sub
    pts = np.linspace(-half_width + h / 2, half_width - h / 2, bins * sub)
    gx, gy = np.meshgrid(pts, pts, indexing="ij")
    xy = np.stack([gx.ravel(), gy.ravel()], axis=1)
    cc = None if c is None else np.full(len(xy), c)
    logr = beta * eval_raw_reward(reward, xy, cc)
    cells = logr.reshape(bins, sub, bins, sub)
    per_cell = logsumexp(cells, axis=(1, 3))
    return per_cell - logsumexp(per_cell)


def histogram_kl(samples: np.ndarray, log_target_masses: np.ndarray, half_width: float) -> float:
    """KL(empirical cell frequencies || target cell masses); samples outside the grid
    are clamped into the border cells."""
    bins = log_target_masses.shape[0]
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ContractError("histogram KL needs 2D samples")
    if len(x) == 0:
        raise ContractError("no samples")
    idx = np.floor((x + half_width) / (2 * half_width) * bins).astype(np.int64)
    idx = np.clip(idx, 0, bins - 1)
    counts = np.zeros((bins, bins))
    np.add.at(counts, (idx[:, 0], idx[:, 1]), 1.0)
    p = counts / counts.sum()
    m = p > 0
    return float(np.sum(p[m] * (np.log(p[m]) - log_target_masses[m])))


def discrete_report(chain, theta, reward: RewardSpec, beta: float) -> dict:
    """Exact terminal distribution of the tabular policy against the DP optimum and R/Z."""
    spec = chain.spec
    log_r = beta * eval_raw_reward(reward, np.arange(spec.S))
    sol = oracle.exact_flows(spec, log_r)
    model = oracle.terminal_distribution_from_logits(spec, theta[LOGITS])
    r = eval_raw_reward(reward, np.arange(spec.S))
    return {
        "eval_tv_optimal": oracle.total_variation(model, sol.terminal),
        "eval_kl_optimal": oracle.kl_divergence(model, sol.terminal),
        "eval_tv_target": oracle.total_variation(model, sol.target),
        "eval_floor": sol.floor,
        "exact_reward_mean": float(model @ r),
    }


def evaluate(chain, theta, reward: RewardSpec, n: int, beta: float, key,
             bins: int = 32, half_width: float = 10.0, n_conditions: int = 0) -> dict:
    """Sample ``n`` terminal states and report reward statistics plus distribution metrics."""
    if n < 1:
        raise ContractError("evaluation needs at least one sample")
    c = None
    if n_conditions:
        c = np.random.default_rng([*key, 7]).integers(0, n_conditions, size=n)
    x0 = chain.sample(theta, n, c, key=key)
    r = eval_raw_reward(reward, x0, c)
    out = {
        "n": int(n),
        "beta": float(beta),
        "reward_mean": float(r.mean()),
        "reward_max": float(r.max()),
        "reward_std": float(r.std()),
        "reward_se": float(r.std(ddof=1) / np.sqrt(n)) if n > 1 else None,
    }
    if chain.discrete:
        out.update(discrete_report(chain, theta, reward, beta))
        freq = np.bincount(x0, minlength=chain.spec.S) / n
        sol_terminal = oracle.exact_flows(
            chain.spec, beta * eval_raw_reward(reward, np.arange(chain.spec.S))).terminal
        out["sample_tv_optimal"] = oracle.total_variation(freq, sol_terminal)
    elif chain.data_dim == 2 and not n_conditions:
        masses = tempered_bin_log_masses(reward, beta, bins, half_width)
        out["eval_hist_kl"] = histogram_kl(x0, masses, half_width)
    return out
