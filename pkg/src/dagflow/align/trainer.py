"""The rollout / optimize epoch loop for DAG-DB, DAG-KL and the DDPO baseline."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from dagflow.align.batch import TransitionBatch
from dagflow.align.losses import dag_kl_policy_loss, ddpo_loss, fl_db_loss, kl_regularizer
from dagflow.diffusion.trajectory import Trajectory
from dagflow.errors import ContractError, NumericalError
from dagflow.numerics.autodiff import ParamSet, value_and_grad
from dagflow.numerics.optim import (
    OptimizerState,
    adamw_init,
    adamw_step,
    clip_global_norm,
    global_norm,
)
from dagflow.rewards import RewardSpec, beta_at, eval_raw_reward

ALGORITHMS = ("dag-db", "dag-kl", "ddpo")


@dataclass(frozen=True)
class AlignConfig:
    algorithm: str = "dag-db"
    clip_eps: float = 1e-4
    ppo_clip_eps: float = 1e-4
    kl_coef: float = 1.0
    kl_scale: str = "unit"  # "unit": factor 1; "beta": multiply the policy loss by beta_max
    lr_policy: float = 3e-4
    lr_flow: float = 3e-4
    weight_decay: float = 0.0  # decay toward zero is a reward-independent pull off the pretrained model
    grad_clip: float = 1.0
    rollouts_per_epoch: int = 512
    opt_steps_per_epoch: int = 8
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ContractError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.clip_eps <= 0 or self.ppo_clip_eps <= 0:
            raise ContractError("clip epsilons must be positive")
        if self.kl_scale not in ("unit", "beta"):
            raise ContractError("kl_scale must be 'unit' or 'beta'")
        if self.rollouts_per_epoch < 1 or self.opt_steps_per_epoch < 1 or self.epochs < 1:
            raise ContractError("rollouts, optimization steps and epochs must be >= 1")
        if self.rollouts_per_epoch % self.opt_steps_per_epoch:
            raise ContractError("rollouts_per_epoch must be divisible by opt_steps_per_epoch")
        if self.grad_clip <= 0 or self.lr_policy <= 0 or self.lr_flow <= 0:
            raise ContractError("learning rates and grad_clip must be positive")


@dataclass(frozen=True)
class AlignState:
    theta: ParamSet
    phi: ParamSet
    opt_theta: OptimizerState
    opt_phi: OptimizerState
    epoch: int = 0
    global_step: int = 0

    @classmethod
    def create(cls, theta: ParamSet, phi: ParamSet, config: AlignConfig) -> "AlignState":
        return cls(theta=dict(theta), phi=dict(phi),
                   opt_theta=adamw_init(theta, config.lr_policy, weight_decay=config.weight_decay),
                   opt_phi=adamw_init(phi, config.lr_flow, weight_decay=config.weight_decay))


def sample_conditions(n_conditions: int, n: int, rng: np.random.Generator):
    return None if not n_conditions else rng.integers(0, n_conditions, size=n)


def attach_rewards(trajs: list[Trajectory], reward: RewardSpec) -> list[Trajectory]:
    """Evaluate r_raw once per terminal state and once per cached data prediction."""
    T = trajs[0].T
    x0 = np.stack([tr.x0 for tr in trajs])
    cond = None if trajs[0].condition is None else np.array([tr.condition for tr in trajs])
    r = eval_raw_reward(reward, x0, cond)
    preds = np.stack([tr.xhat[1:] for tr in trajs])  # (n, T, ...)
    flat = preds.reshape((len(trajs) * T,) + preds.shape[2:])
    flat_c = None if cond is None else np.repeat(cond, T)
    fl = eval_raw_reward(reward, flat, flat_c).reshape(len(trajs), T)
    return [tr.with_rewards(r[i], np.concatenate([[r[i]], fl[i]])) for i, tr in enumerate(trajs)]


def _step(params, opt, grads, max_norm):
    norm = global_norm(grads)
    params, opt = adamw_step(params, clip_global_norm(grads, max_norm), opt)
    return params, opt, norm


def align_epoch(config: AlignConfig, chain, flow, reward: RewardSpec, state: AlignState,
                n_conditions: int = 0) -> tuple[AlignState, dict]:
    """One epoch: snapshot, roll out, score, then ``opt_steps_per_epoch`` updates."""
    cfg = config
    epoch = state.epoch
    if epoch >= cfg.epochs:
        raise ContractError(f"epoch budget of {cfg.epochs} already used")
    beta = beta_at(reward, epoch, cfg.epochs)
    kl_factor = reward.beta_max if cfg.kl_scale == "beta" else 1.0
    theta_old = state.theta
    version = epoch

    cond = sample_conditions(n_conditions, cfg.rollouts_per_epoch,
                             np.random.default_rng([cfg.seed, epoch, 1]))
    trajs = chain.rollout(theta_old, cfg.rollouts_per_epoch, cond, key=(cfg.seed, epoch, 0),
                          version=version)
    trajs = attach_rewards(trajs, reward)
    batch = TransitionBatch.from_trajectories(trajs, beta)
    r_terminal = np.array([tr.r_raw for tr in trajs])
    minibatches = batch.split(cfg.opt_steps_per_epoch, np.random.default_rng([cfg.seed, epoch, 2]))

    theta, phi = state.theta, state.phi
    opt_t, opt_p = state.opt_theta, state.opt_phi
    sums = {"fl_db": 0.0, "dag_kl": 0.0, "kl_reg": 0.0, "ddpo": 0.0, "gn_theta": 0.0, "gn_phi": 0.0}
    for mb in minibatches:
        if cfg.algorithm == "dag-db":
            def loss_fn(p):
                return fl_db_loss(chain, flow, mb, {k: p[k] for k in theta}, {k: p[k] for k in phi})
            val, g = value_and_grad(loss_fn, {**theta, **phi})
            _check(val, "fl_db", epoch)
            theta, opt_t, gn_t = _step(theta, opt_t, {k: g[k] for k in theta}, cfg.grad_clip)
            phi, opt_p, gn_p = _step(phi, opt_p, {k: g[k] for k in phi}, cfg.grad_clip)
            sums["fl_db"] += val
        elif cfg.algorithm == "dag-kl":
            th = theta
            val_f, g_phi = value_and_grad(lambda p: fl_db_loss(chain, flow, mb, th, p), phi)
            kl_vals = {}

            def policy_fn(p, ph=phi):
                kl_vals["pol"] = dag_kl_policy_loss(chain, flow, mb, p, ph, cfg.clip_eps,
                                                    kl_factor, expected_version=version)
                kl_vals["reg"] = kl_regularizer(chain, mb, p, theta_old, cfg.kl_coef)
                return kl_vals["pol"] + kl_vals["reg"]
            val_t, g_theta = value_and_grad(policy_fn, theta)
            _check(val_f, "fl_db", epoch)
            _check(val_t, "dag_kl", epoch)
            theta, opt_t, gn_t = _step(theta, opt_t, g_theta, cfg.grad_clip)
            phi, opt_p, gn_p = _step(phi, opt_p, g_phi, cfg.grad_clip)
            sums["fl_db"] += val_f
            sums["dag_kl"] += float(kl_vals["pol"].data)
            sums["kl_reg"] += float(kl_vals["reg"].data)
        else:
            parts = {}

            def ddpo_fn(p):
                parts["ddpo"] = ddpo_loss(chain, mb, p, cfg.ppo_clip_eps, expected_version=version)
                parts["reg"] = kl_regularizer(chain, mb, p, theta_old, cfg.kl_coef)
                return parts["ddpo"] + parts["reg"]
            val_t, g_theta = value_and_grad(ddpo_fn, theta)
            _check(val_t, "ddpo", epoch)
            theta, opt_t, gn_t = _step(theta, opt_t, g_theta, cfg.grad_clip)
            gn_p = 0.0
            sums["ddpo"] += float(parts["ddpo"].data)
            sums["kl_reg"] += float(parts["reg"].data)
        sums["gn_theta"] += gn_t
        sums["gn_phi"] += gn_p

    k = len(minibatches)
    new_state = replace(state, theta=theta, phi=phi, opt_theta=opt_t, opt_phi=opt_p,
                        epoch=epoch + 1, global_step=state.global_step + k)
    metrics = {
        "epoch": epoch,
        "step": new_state.global_step,
        "trajectories": (epoch + 1) * cfg.rollouts_per_epoch,
        "algorithm": cfg.algorithm,
        "beta": beta,
        "reward_mean": float(r_terminal.mean()),
        "reward_max": float(r_terminal.max()),
        "reward_std": float(r_terminal.std()),
        "loss_fl_db": sums["fl_db"] / k,
        "loss_dag_kl": sums["dag_kl"] / k,
        "loss_kl_reg": sums["kl_reg"] / k,
        "loss_ddpo": sums["ddpo"] / k,
        "grad_norm_theta": sums["gn_theta"] / k,
        "grad_norm_phi": sums["gn_phi"] / k,
    }
    return new_state, metrics


def _check(value: float, name: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise NumericalError(f"non-finite {name} loss in epoch {epoch}", node=name)
