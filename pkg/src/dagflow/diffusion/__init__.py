from dagflow.diffusion.data import eight_gaussians, load_dataset, write_dataset
from dagflow.diffusion.discrete import (
    DiscreteChain,
    DiscreteChainSpec,
    discrete_reverse_logpmf,
    lazy_uniform_chain,
    policy_tables,
)
from dagflow.diffusion.gaussian import (
    DataPredictionNet,
    GaussianChain,
    denoising_loss,
    p_theta_logpdf,
    p_theta_params,
    p_theta_sample,
)
from dagflow.diffusion.pretrain import denoising_pretrain_step
from dagflow.diffusion.schedule import (
    NoiseSchedule,
    make_schedule,
    q_marginal_sample,
    q_transition_logpdf,
)
from dagflow.diffusion.trajectory import Trajectory

__all__ = [
    "DataPredictionNet", "DiscreteChain", "DiscreteChainSpec", "GaussianChain", "NoiseSchedule",
    "Trajectory", "denoising_loss", "denoising_pretrain_step", "discrete_reverse_logpmf",
    "eight_gaussians", "lazy_uniform_chain", "load_dataset", "make_schedule", "p_theta_logpdf",
    "p_theta_params", "p_theta_sample", "policy_tables", "q_marginal_sample",
    "q_transition_logpdf", "write_dataset",
]
