"""Verification suites behind ``oracle-check``: the score-function identity, exact
DB optimality on the discrete chain, and finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dagflow import oracle
from dagflow.align.batch import TransitionBatch
from dagflow.align.flow import TABLE, FlowNet, TabularFlow
from dagflow.align.losses import (
    dag_kl_policy_loss,
    db_residual,
    ddpo_loss,
    fl_db_loss,
    fl_db_residual,
    kl_regularizer,
)
from dagflow.align.trainer import attach_rewards
from dagflow.diffusion.discrete import LOGITS, DiscreteChain, DiscreteChainSpec, lazy_uniform_chain
from dagflow.diffusion.gaussian import (
    DataPredictionNet,
    GaussianChain,
    denoising_loss,
    sample_denoising_inputs,
)
from dagflow.diffusion.schedule import make_schedule
from dagflow.numerics import autodiff as ad
from dagflow.numerics.nn import NetSpec
from dagflow.rewards import RewardSpec, eval_raw_reward

SCORE_IDENTITY_TOL = 1e-10
DB_TOL = 1e-10
FD_TOL = 1e-4
FD_STEP = 1e-5
# coordinates whose gradient is below this (in both estimates) are compared absolutely;
# central differences carry ~1e-11 * |loss| / step roundoff
FD_FLOOR = 1e-6
FD_CLIP_EPS = 0.1  # keeps perturbed ratios inside the clip interval; its kinks are not differentiable


def check_score_identity(n: int = 100, seed: int = 0, max_states: int = 8) -> dict:
    rng = np.random.default_rng([seed, 1])
    worst = 0.0
    for _ in range(n):
        logits, log_target = oracle.random_score_identity_instance(rng, max_states)
        worst = max(worst, oracle.score_identity_gap(logits, log_target))
    return {"check": "score_identity", "instances": n, "max_discrepancy": worst, "tol": SCORE_IDENTITY_TOL,
            "pass": worst <= SCORE_IDENTITY_TOL}


def enumerate_transitions(spec: DiscreteChainSpec, reward: RewardSpec, beta: float,
                          logits) -> TransitionBatch:
    """Every (t, x_t, x_{t-1}) edge of the chain as one batch, with rewards cached as a
    rollout would cache them."""
    S, T = spec.S, spec.T
    t, x_t, x_prev = (a.ravel() for a in np.meshgrid(np.arange(1, T + 1), np.arange(S),
                                                     np.arange(S), indexing="ij"))
    r_states = eval_raw_reward(reward, np.arange(S))
    logp = np.log(np.exp(logits - logits.max(-1, keepdims=True))
                  / np.exp(logits - logits.max(-1, keepdims=True)).sum(-1, keepdims=True))
    return TransitionBatch(
        x_t=x_t, x_prev=x_prev, t=t, c=None, logp_old=logp[t - 1, x_t, x_prev],
        xhat_parent=x_t, xhat_child=x_prev, fl_parent=r_states[x_t], fl_child=r_states[x_prev],
        r_raw=r_states[x_prev], traj_index=np.arange(len(t)), beta=float(beta), version=0)


def check_db_identity(spec: DiscreteChainSpec | None = None, reward: RewardSpec | None = None,
                      beta: float = 1.0, perturbation: float = 0.0) -> dict:
    """Plug the DP flows and policy into the plain DB residual; every edge should vanish.

    ``perturbation`` is added to one learnable log-flow entry (fault injection).
    """
    spec = spec or lazy_uniform_chain()
    reward = reward or RewardSpec("table", beta_max=beta)
    sol = oracle.exact_flows(spec, beta * eval_raw_reward(reward, np.arange(spec.S)))
    logits = sol.log_policy
    table = sol.log_flows[1:].copy()
    table[0, 0] += perturbation
    batch = enumerate_transitions(spec, reward, beta, logits)
    chain, flow = DiscreteChain(spec), TabularFlow(spec.S, spec.T)
    delta = db_residual(chain, flow, batch, {LOGITS: logits}, {TABLE: table}).data
    worst = float(np.max(np.abs(delta)))
    return {"check": "db_identity", "transitions": len(batch), "max_residual": worst,
            "identity_log_residual": oracle.db_identity_residual(spec, sol),
            "perturbation": perturbation, "tol": DB_TOL, "pass": worst <= DB_TOL}


@dataclass
class GradProblem:
    chain: GaussianChain
    flow: FlowNet
    batch: TransitionBatch
    theta: dict
    phi: dict
    x0: np.ndarray
    t: np.ndarray
    noise: np.ndarray


def small_gradient_problem(seed: int, T: int = 4, n: int = 4, beta: float = 2.0) -> GradProblem:
    """A tiny continuous chain and one rollout batch at random parameters."""
    rng = np.random.default_rng([seed, 2])
    pspec = NetSpec(2, 2, T, hidden=8, depth=2, time_dim=4)
    fspec = NetSpec(2, 1, T, hidden=8, depth=2, time_dim=4)
    chain = GaussianChain(make_schedule("cosine", T), DataPredictionNet(pspec))
    flow = FlowNet(fspec)
    theta = chain.init_params(rng)
    phi = flow.init(rng)
    phi = {k: (v + rng.normal(0.0, 0.3, v.shape) if k.endswith(("l1.w", "l1.b")) else v)
           for k, v in phi.items()}
    reward = RewardSpec("ring", {"radius": 1.5}, beta_max=beta)
    trajs = attach_rewards(chain.rollout(theta, n, key=(seed, 3)), reward)
    batch = TransitionBatch.from_trajectories(trajs, beta)
    x0 = rng.normal(0.0, 1.0, (8, 2))
    t, noise = sample_denoising_inputs(chain, 8, rng)
    return GradProblem(chain, flow, batch, theta, phi, x0, t, noise)


def loss_builders(p: GradProblem) -> dict:
    """Name -> (builder over a joint parameter dict, initial joint parameters)."""
    th_keys, ph_keys = list(p.theta), list(p.phi)
    split = lambda q: ({k: q[k] for k in th_keys}, {k: q[k] for k in ph_keys})
    b_fixed = ad.stop_gradient(fl_db_residual(p.chain, p.flow, p.batch, p.theta, p.phi)).data
    theta_old = dict(p.theta)
    return {
        "denoising": (lambda q: denoising_loss(p.chain, q, p.x0, p.t, p.noise), dict(p.theta)),
        "fl_db": (lambda q: fl_db_loss(p.chain, p.flow, p.batch, *split(q)), {**p.theta, **p.phi}),
        "dag_kl": (lambda q: dag_kl_policy_loss(p.chain, p.flow, p.batch, q, p.phi, FD_CLIP_EPS,
                                                b=b_fixed)
                   + kl_regularizer(p.chain, p.batch, q, theta_old, 1.0), dict(p.theta)),
        "ddpo": (lambda q: ddpo_loss(p.chain, p.batch, q, FD_CLIP_EPS)
                 + kl_regularizer(p.chain, p.batch, q, theta_old, 1.0), dict(p.theta)),
    }


def _jitter(params: dict, rng, scale: float) -> dict:
    return {k: v + rng.normal(0.0, scale, v.shape) for k, v in params.items()}


def check_finite_differences(points: int = 10, seed: int = 0, names=None) -> list[dict]:
    """Per loss: worst per-coordinate relative error between autodiff and central differences.

    The denoising and FL-DB losses are checked at jittered parameters; the two
    policy losses at theta = theta_old, where the rollout batch is on-policy.
    """
    worst: dict[str, float] = {}
    for k in range(points):
        prob = small_gradient_problem(seed * 1000 + k)
        rng = np.random.default_rng([seed, k, 4])
        for name, (builder, params) in loss_builders(prob).items():
            if names and name not in names:
                continue
            if name in ("denoising", "fl_db"):
                params = _jitter(params, rng, 0.1)
            auto = ad.grad(builder, params)
            fd = oracle.finite_diff(lambda q: float(builder(q).data), params, FD_STEP)
            err = oracle.max_relative_error(auto, fd, FD_FLOOR)
            worst[name] = max(worst.get(name, 0.0), err)
    return [{"check": f"finite_diff:{n}", "points": points, "max_rel_err": e, "tol": FD_TOL,
             "pass": e <= FD_TOL} for n, e in worst.items()]


def run_oracle_check(seed: int = 0, identity_instances: int = 100, fd_points: int = 10,
                     perturbation: float = 0.0, spec: DiscreteChainSpec | None = None,
                     reward: RewardSpec | None = None, beta: float = 1.0) -> list[dict]:
    records = [check_score_identity(identity_instances, seed),
               check_db_identity(spec, reward, beta, perturbation)]
    records += check_finite_differences(fd_points, seed)
    return records
