"""Build chains, flows, pretraining data and the state checkpoints from a RunConfig."""

from __future__ import annotations

import numpy as np

from dagflow.align.flow import FlowNet, TabularFlow
from dagflow.align.trainer import AlignState
from dagflow.diffusion.data import eight_gaussians, load_dataset
from dagflow.diffusion.discrete import DiscreteChain, lazy_uniform_chain
from dagflow.diffusion.gaussian import DataPredictionNet, GaussianChain
from dagflow.diffusion.schedule import make_schedule
from dagflow.errors import CompatibilityError, ContractError
from dagflow.harness.checkpoint import (
    Checkpoint,
    pack_optimizer,
    pack_params,
    unpack_optimizer,
)
from dagflow.harness.config import RunConfig, dump_config, parse_config_text
from dagflow.numerics.nn import NetSpec


def build_chain(cfg: RunConfig):
    t = cfg.task
    if t.chain == "discrete":
        return DiscreteChain(lazy_uniform_chain(S=t.S, T=t.T, stay=t.stay))
    spec = NetSpec(t.data_dim, t.data_dim, t.T, hidden=t.hidden, depth=t.depth,
                   time_dim=t.time_dim, n_conditions=t.n_conditions, cond_dim=t.cond_dim)
    return GaussianChain(make_schedule(t.schedule, t.T), DataPredictionNet(spec))


def build_flow(cfg: RunConfig):
    t = cfg.task
    if t.chain == "discrete":
        return TabularFlow(t.S, t.T)
    spec = NetSpec(t.data_dim, 1, t.T, hidden=t.hidden, depth=t.depth, time_dim=t.time_dim,
                   n_conditions=t.n_conditions, cond_dim=t.cond_dim)
    return FlowNet(spec, output_scale=t.flow_output_scale)


def init_theta(cfg: RunConfig, chain):
    return chain.init_params(np.random.default_rng([cfg.run.seed, 101]))


def init_phi(cfg: RunConfig, flow):
    return flow.init(np.random.default_rng([cfg.run.seed, 102]))


class PretrainData:
    """Either a fixed dataset file (minibatches drawn with replacement) or fresh
    8-Gaussians draws each step."""

    def __init__(self, cfg: RunConfig, rng: np.random.Generator):
        t = cfg.task
        self.n_conditions = t.n_conditions
        if t.dataset:
            self.x, self.c = load_dataset(t.dataset, t.data_dim)
        elif cfg.pretrain.dataset_size:
            self.x, k = eight_gaussians(cfg.pretrain.dataset_size, rng)
            self.c = k % t.n_conditions if t.n_conditions else None
        else:
            self.x = self.c = None
        if self.x is not None and self.x.shape[0] == 0:
            raise ContractError("pretraining dataset is empty")
        if t.n_conditions and self.x is not None and self.c is None:
            raise ContractError("conditional task needs a condition column in the dataset")
        if self.x is None and t.data_dim != 2:
            raise ContractError("the built-in 8-Gaussians generator is two-dimensional")

    def batch(self, n: int, rng: np.random.Generator):
        if self.x is None:
            x, k = eight_gaussians(n, rng)
            return x, (k % self.n_conditions if self.n_conditions else None)
        idx = rng.integers(0, self.x.shape[0], size=n)
        return self.x[idx], (None if self.c is None else self.c[idx])


# -- checkpoints --------------------------------------------------------------

def state_checkpoint(cfg: RunConfig, kind: str, theta, phi=None, state: AlignState | None = None,
                     extra: dict | None = None, opt_theta=None) -> Checkpoint:
    arrays = pack_params("theta", theta)
    meta = {"kind": kind, "task": cfg.task_signature(), "config": dump_config(cfg)}
    if phi is not None:
        arrays.update(pack_params("phi", phi))
    if state is not None:
        a_t, m_t = pack_optimizer("opt_theta", state.opt_theta)
        a_p, m_p = pack_optimizer("opt_phi", state.opt_phi)
        arrays.update(a_t)
        arrays.update(a_p)
        meta.update(epoch=state.epoch, global_step=state.global_step, opt_theta=m_t, opt_phi=m_p)
    elif opt_theta is not None:
        a_t, m_t = pack_optimizer("opt_theta", opt_theta)
        arrays.update(a_t)
        meta.update(opt_theta=m_t)
    meta.update(extra or {})
    return Checkpoint(meta=meta, arrays=arrays, config_hash=cfg.digest())


def config_from_checkpoint(ckpt: Checkpoint) -> RunConfig:
    return parse_config_text(ckpt.meta["config"], "<checkpoint config>")


def check_compatible(cfg: RunConfig, ckpt: Checkpoint) -> None:
    if ckpt.meta.get("task") != cfg.task_signature():
        raise CompatibilityError(
            f"checkpoint task {ckpt.meta.get('task')} does not match config task {cfg.task_signature()}")


def align_state_from_checkpoint(ckpt: Checkpoint) -> AlignState:
    m = ckpt.meta
    return AlignState(theta=ckpt.group("theta"), phi=ckpt.group("phi"),
                      opt_theta=unpack_optimizer(ckpt, "opt_theta", m["opt_theta"]),
                      opt_phi=unpack_optimizer(ckpt, "opt_phi", m["opt_phi"]),
                      epoch=m["epoch"], global_step=m["global_step"])
