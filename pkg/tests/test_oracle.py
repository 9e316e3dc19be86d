import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dagflow import oracle
from dagflow.diffusion.discrete import DiscreteChainSpec, lazy_uniform_chain
from dagflow.errors import ContractError
from dagflow.rewards import default_discrete_table

# Prior-consistency floor of the default chain (S=16, T=5, stay 0.3, ramp table
# with dynamic range 10, beta 1). Computed once with the linear-domain loop
# oracle below and frozen.
DEFAULT_FLOOR = 1.0771936414973038e-06


def linear_domain_floor(S, T, stay, reward):
    """Independent oracle: plain loops over probabilities, no log-domain tricks."""
    Q = stay * np.eye(S) + (1 - stay) / S
    F = [np.array(reward, dtype=float)]
    for _ in range(T):
        F.append(np.array([sum(F[-1][i] * Q[i, j] for i in range(S)) for j in range(S)]))
    p = np.full(S, 1.0 / S)
    for t in range(T, 0, -1):
        nxt = np.zeros(S)
        for x in range(S):
            for y in range(S):
                nxt[y] += p[x] * F[t - 1][y] * Q[y, x] / F[t][x]
        p = nxt
    target = np.asarray(reward) / np.sum(reward)
    return 0.5 * np.abs(p - target).sum()


def default_log_reward(S=16):
    return np.array(default_discrete_table(S))


def test_one_step_hand_recursion():
    spec = lazy_uniform_chain(S=4, T=1, stay=0.0)
    sol = oracle.exact_flows(spec, np.log([1.0, 2.0, 3.0, 4.0]))
    assert np.allclose(np.exp(sol.log_flows[1]), 2.5, rtol=0, atol=1e-12)
    assert np.exp(sol.log_Z) == pytest.approx(10.0, abs=1e-12)


def test_db_identity_holds_exactly():
    spec = lazy_uniform_chain()
    sol = oracle.exact_flows(spec, default_log_reward())
    assert oracle.db_identity_residual(spec, sol) <= 1e-12


def test_solution_invariants():
    spec = lazy_uniform_chain()
    log_r = default_log_reward()
    sol = oracle.exact_flows(spec, log_r)
    assert np.max(np.abs(sol.policy.sum(axis=2) - 1.0)) <= 1e-12
    assert np.array_equal(sol.log_flows[0], log_r)
    assert sol.log_Z == pytest.approx(np.log(np.exp(log_r).sum()), abs=1e-12)
    assert abs(sol.terminal.sum() - 1.0) <= 1e-12


def test_total_flow_conserved_under_doubly_stochastic_kernels():
    spec = lazy_uniform_chain(S=10, T=6, stay=0.45)
    sol = oracle.exact_flows(spec, np.random.default_rng(0).normal(size=10))
    totals = np.exp(sol.log_flows).sum(axis=1)
    assert np.allclose(totals, np.exp(sol.log_Z), rtol=1e-12, atol=0)


@pytest.mark.parametrize("bad", [[1.0, -np.inf, 0.0], [np.nan, 0.0, 0.0], [0.0, 0.0]])
def test_nonpositive_or_malformed_reward(bad):
    with pytest.raises(ContractError):
        oracle.exact_flows(lazy_uniform_chain(S=3, T=2), np.array(bad))


def test_enumeration_size_guard():
    with pytest.raises(ContractError):
        oracle.exact_flows(lazy_uniform_chain(S=65, T=2), np.zeros(65))
    with pytest.raises(ContractError):
        oracle.exact_flows(lazy_uniform_chain(S=4, T=13), np.zeros(4))


def test_uniform_policy_gives_uniform_terminal():
    spec = lazy_uniform_chain(S=7, T=3)
    p = oracle.terminal_distribution(spec, np.full((3, 7, 7), 1 / 7))
    assert np.allclose(p, 1 / 7, atol=1e-15)


def test_deterministic_policy_gives_point_mass():
    S, T = 5, 3
    src = np.zeros(S)
    src[2] = 1.0
    spec = DiscreteChainSpec(S, T, lazy_uniform_chain(S=S, T=T).Q, src)
    policy = np.zeros((T, S, S))
    policy[:, np.arange(S), (np.arange(S) + 1) % S] = 1.0
    p = oracle.terminal_distribution(spec, policy)
    assert p[0] == 1.0 and p.sum() == 1.0


def test_consistent_source_removes_floor():
    spec = lazy_uniform_chain()
    log_r = default_log_reward()
    assert oracle.optimal_floor(oracle.consistent_source(spec, log_r), log_r) <= 1e-12


def test_default_floor_is_frozen():
    spec = lazy_uniform_chain()
    assert oracle.optimal_floor(spec, default_log_reward()) == pytest.approx(DEFAULT_FLOOR, rel=1e-6)


def test_frozen_floor_agrees_with_linear_domain_oracle():
    value = linear_domain_floor(16, 5, 0.3, np.exp(default_log_reward()))
    assert value == pytest.approx(DEFAULT_FLOOR, rel=1e-6)


def test_floor_shrinks_with_horizon():
    log_r = default_log_reward()
    floors = [oracle.optimal_floor(lazy_uniform_chain(T=T), log_r) for T in (2, 5, 10)]
    assert floors[0] >= floors[1] >= floors[2]


def test_score_identity_small_case():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=3)
    log_target = np.log(rng.uniform(0.1, 5, size=3)) + np.log([0.2, 0.5, 0.3]) - np.log(2.0)
    assert oracle.score_identity_gap(logits, log_target) <= 1e-10


def test_score_identity_at_optimum_both_gradients_vanish():
    log_target = np.log([0.5, 2.0, 1.5, 0.25])
    logits = log_target.copy()
    exact = oracle.reinforce_gradient(logits, log_target)
    assert np.max(np.abs(exact)) <= 1e-10
    assert oracle.score_identity_gap(logits, log_target) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_score_identity_random_instances(seed):
    logits, log_target = oracle.random_score_identity_instance(np.random.default_rng(seed))
    assert oracle.score_identity_gap(logits, log_target) <= 1e-10


def test_gaussian_reinforce_matches_closed_form():
    mu, log_s, m, v = 0.3, np.log(0.8), -0.5, 1.7
    draws = oracle.gaussian_reinforce_samples(mu, log_s, m, v, 1_000_000, np.random.default_rng(3))
    est = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    exact = oracle.gaussian_kl_gradient(mu, log_s, m, v)
    assert np.all(np.abs(est - exact) <= 4 * se)


def test_gaussian_kl_gradient_matches_finite_differences():
    def kl(p):
        s2 = np.exp(2 * p["x"][1])
        return 0.5 * (s2 / 1.7 + (p["x"][0] + 0.5) ** 2 / 1.7 - 1 - np.log(s2 / 1.7))
    fd = oracle.finite_diff(kl, {"x": np.array([0.3, np.log(0.8)])}, step=1e-6)["x"]
    assert np.allclose(fd, oracle.gaussian_kl_gradient(0.3, np.log(0.8), -0.5, 1.7), atol=1e-8)


def test_finite_differences_exact_on_quadratics():
    A = np.array([[2.0, 0.5], [0.5, 3.0]])
    c = np.array([1.0, -2.0])
    x = np.array([0.7, -1.3])
    fd = oracle.finite_diff(lambda p: float(p["x"] @ A @ p["x"] / 2 + c @ p["x"]), {"x": x})["x"]
    assert np.max(np.abs(fd - (A @ x + c))) <= 1e-10


def test_relative_error_floor():
    a, b = {"g": np.array([1e-9, 1.0])}, {"g": np.array([0.0, 1.0 + 1e-6])}
    assert oracle.max_relative_error(a, b, floor=1e-6) == pytest.approx(1e-3, rel=1e-6)


def test_distances():
    p, q = np.array([0.5, 0.5, 0.0]), np.array([0.25, 0.25, 0.5])
    assert oracle.total_variation(p, q) == 0.5
    assert oracle.kl_divergence(p, q) == pytest.approx(np.log(2), abs=1e-15)
