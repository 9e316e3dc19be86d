from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from dagflow.diffusion.trajectory import Trajectory
from dagflow.errors import ContractError, StaleBatchError


@dataclass(frozen=True, eq=False)
class TransitionBatch:
    """Flattened single-step transitions (x_t -> x_{t-1}) with their rollout-time caches.

    ``fl_parent`` is r_raw(x_hat(x_t, t)); ``fl_child`` is r_raw(x_hat(x_{t-1}, t-1))
    for t > 1 and exactly r_raw(x_0) for t == 1.
    """

    x_t: np.ndarray
    x_prev: np.ndarray
    t: np.ndarray
    c: np.ndarray | None
    logp_old: np.ndarray
    xhat_parent: np.ndarray
    xhat_child: np.ndarray
    fl_parent: np.ndarray
    fl_child: np.ndarray
    r_raw: np.ndarray
    traj_index: np.ndarray
    beta: float
    version: int

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory], beta: float) -> "TransitionBatch":
        if not trajs:
            raise ContractError("no trajectories")
        versions = {tr.version for tr in trajs}
        if len(versions) != 1:
            raise StaleBatchError(f"trajectories come from several policy snapshots: {sorted(versions)}")
        if any(tr.fl_raw is None for tr in trajs):
            raise ContractError("trajectories need rewards attached before batching")
        T = trajs[0].T
        ts = np.arange(T, 0, -1)
        cols = {k: [] for k in ("x_t", "x_prev", "t", "c", "logp", "hp", "hc", "fp", "fc", "r", "i")}
        for i, tr in enumerate(trajs):
            cols["x_t"].append(tr.states[ts])
            cols["x_prev"].append(tr.states[ts - 1])
            cols["t"].append(ts)
            cols["c"].append(np.full(T, -1 if tr.condition is None else tr.condition))
            cols["logp"].append(tr.logp[ts - 1])
            cols["hp"].append(tr.xhat[ts])
            cols["hc"].append(tr.xhat[ts - 1])
            cols["fp"].append(tr.fl_raw[ts])
            cols["fc"].append(tr.fl_raw[ts - 1])
            cols["r"].append(np.full(T, tr.r_raw))
            cols["i"].append(np.full(T, i))
        cat = {k: np.concatenate(v) for k, v in cols.items()}
        c = None if trajs[0].condition is None else cat["c"].astype(np.int64)
        return cls(x_t=cat["x_t"], x_prev=cat["x_prev"], t=cat["t"], c=c, logp_old=cat["logp"],
                   xhat_parent=cat["hp"], xhat_child=cat["hc"], fl_parent=cat["fp"],
                   fl_child=cat["fc"], r_raw=cat["r"], traj_index=cat["i"],
                   beta=float(beta), version=versions.pop())

    def take(self, idx) -> "TransitionBatch":
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else a[idx]
        return replace(self, x_t=self.x_t[idx], x_prev=self.x_prev[idx], t=self.t[idx],
                       c=pick(self.c), logp_old=self.logp_old[idx],
                       xhat_parent=self.xhat_parent[idx], xhat_child=self.xhat_child[idx],
                       fl_parent=self.fl_parent[idx], fl_child=self.fl_child[idx],
                       r_raw=self.r_raw[idx], traj_index=self.traj_index[idx])

    def split(self, n_parts: int, rng: np.random.Generator) -> list["TransitionBatch"]:
        """Shuffle, then cut into ``n_parts`` equal minibatches."""
        if len(self) % n_parts:
            raise ContractError(f"{len(self)} transitions do not split into {n_parts} equal parts")
        perm = rng.permutation(len(self))
        return [self.take(p) for p in np.split(perm, n_parts)]

    def check_version(self, expected: int | None) -> None:
        if expected is not None and self.version != expected:
            raise StaleBatchError(f"batch sampled under snapshot {self.version}, expected {expected}")
