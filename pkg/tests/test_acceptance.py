"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time
from dataclasses import replace

import numpy as np
import pytest

from dagflow import oracle
from dagflow.align import advantage_b, dag_kl_policy_loss, fl_db_loss
from dagflow.harness.checkpoint import load_checkpoint
from dagflow.harness.checks import (
    check_db_identity,
    check_finite_differences,
    check_score_identity,
    small_gradient_problem,
)
from dagflow.harness.config import parse_config
from dagflow.harness.evaluate import evaluate
from dagflow.harness.metrics import read_metrics
from dagflow.harness.runner import run_align, run_pretrain
from dagflow.harness.tasks import build_chain
from dagflow.numerics import autodiff as ad
from dagflow.rewards import RewardSpec, beta_at

EVAL_N = 4096


def with_algorithm(cfg, algorithm, epochs=None, beta_max=None):
    algo = replace(cfg.algorithm, algorithm=algorithm)
    run = cfg.run
    if epochs is not None:
        algo, run = replace(algo, epochs=epochs), replace(run, epochs=epochs)
    reward = cfg.reward if beta_max is None else replace(cfg.reward, beta_max=beta_max)
    return replace(cfg, algorithm=algo, run=run, reward=reward)


def discrete_run(configs_dir, tmp_path, algorithm, **kw):
    cfg = with_algorithm(parse_config(configs_dir / "discrete.ini"), algorithm, **kw)
    pre = run_pretrain(cfg, tmp_path / "pretrain")
    t0 = time.perf_counter()
    ckpt = run_align(cfg, tmp_path / algorithm, init=pre)
    return cfg, pre, ckpt, time.perf_counter() - t0


def theta_of(path):
    return load_checkpoint(path).group("theta")


def test_criterion_01_score_function_identity(record_criterion):
    t0 = time.perf_counter()
    rec = check_score_identity(100, seed=0)
    elapsed = time.perf_counter() - t0
    ok = rec["max_discrepancy"] <= 1e-10 and elapsed < 10
    assert record_criterion(1, ok, f"100 instances, max |grad KL - REINFORCE| = {rec['max_discrepancy']:.2e}"
                                   f" (tol 1e-10), {elapsed:.2f} s")


def test_criterion_02_db_optimum_soundness(record_criterion):
    t0 = time.perf_counter()
    rec = check_db_identity()
    elapsed = time.perf_counter() - t0
    ok = rec["max_residual"] <= 1e-10 and elapsed < 1
    assert record_criterion(2, ok, f"{rec['transitions']} transitions, max |delta| = {rec['max_residual']:.2e}"
                                   f" (tol 1e-10), {elapsed:.3f} s")


@pytest.mark.parametrize("number,algorithm,tol", [(3, "dag-db", 0.05), (4, "dag-kl", 0.07)])
def test_criteria_03_04_discrete_distribution_matching(configs_dir, tmp_path, record_criterion,
                                                         number, algorithm, tol):
    cfg, _, ckpt, elapsed = discrete_run(configs_dir, tmp_path, algorithm)
    assert cfg.algorithm.epochs <= 60 and cfg.reward.beta_max == 1.0
    assert (cfg.task.S, cfg.task.T) == (16, 5)
    ev = evaluate(build_chain(cfg), theta_of(ckpt), cfg.reward, 1, 1.0, key=(0,))
    tv, floor = ev["eval_tv_optimal"], ev["eval_floor"]
    ok = tv <= tol and elapsed < 600
    assert record_criterion(number, ok, f"{algorithm}: TV(model, DP optimum) = {tv:.4f} (tol {tol}), "
                                        f"TV to R/Z = {ev['eval_tv_target']:.4f}, DP floor = {floor:.3e}, "
                                        f"{cfg.algorithm.epochs} epochs, {elapsed:.1f} s")


def test_criterion_05_gradient_agreement(record_criterion):
    worst_ref = worst_fl = 0.0
    for seed in range(20):
        p = small_gradient_problem(100 + seed)
        b = advantage_b(p.chain, p.flow, p.batch, p.theta, p.phi)
        g_kl = ad.grad(lambda q: dag_kl_policy_loss(p.chain, p.flow, p.batch, q, p.phi, 1e-4), p.theta)
        g_ref = ad.grad(lambda q: ad.mean(b * p.chain.log_prob(q, p.batch.x_t, p.batch.x_prev,
                                                               p.batch.t)), p.theta)
        g_fl = ad.grad(lambda q: fl_db_loss(p.chain, p.flow, p.batch, q, p.phi), p.theta)
        half = {k: 0.5 * v for k, v in g_fl.items()}
        worst_ref = max(worst_ref, oracle.max_relative_error(g_kl, g_ref, floor=1e-12))
        worst_fl = max(worst_fl, oracle.max_relative_error(g_kl, half, floor=1e-12))
    ok = worst_ref <= 1e-8 and worst_fl <= 1e-8
    assert record_criterion(5, ok, f"20 batches, rel err vs mean(b grad log p) = {worst_ref:.2e}, "
                                   f"vs half FL-DB gradient = {worst_fl:.2e} (tol 1e-8)")


def test_criterion_06_finite_differences(record_criterion):
    recs = check_finite_differences(10, seed=0)
    errs = {r["check"].split(":")[1]: r["max_rel_err"] for r in recs}
    ok = set(errs) == {"denoising", "fl_db", "dag_kl", "ddpo"} and all(e <= 1e-4 for e in errs.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    assert record_criterion(6, ok, f"10 points each, max rel err: {detail} (tol 1e-4)")


def test_criterion_07_continuous_alignment(ring_pretrained, record_criterion):
    cfg, pre_ckpt, root = ring_pretrained
    chain = build_chain(cfg)
    key = (cfg.run.seed, 424242)
    kw = dict(bins=cfg.run.hist_bins, half_width=cfg.run.hist_range)
    beta = cfg.reward.beta_max
    pre = evaluate(chain, theta_of(pre_ckpt), cfg.reward, EVAL_N, beta, key=key, **kw)
    t0 = time.perf_counter()
    results = {}
    for algo in ("dag-db", "dag-kl", "ddpo"):
        run_cfg = with_algorithm(cfg, algo).with_out(str(root / algo))
        ckpt = run_align(run_cfg, root / algo, init=pre_ckpt)
        recs = read_metrics(root / algo / "metrics.jsonl")
        assert recs[-1]["trajectories"] == 100 * 512
        results[algo] = evaluate(chain, theta_of(ckpt), cfg.reward, EVAL_N, beta, key=key, **kw)
    elapsed = time.perf_counter() - t0
    r = {a: v["reward_mean"] for a, v in results.items()}
    margin = 5 * pre["reward_std"]
    ordering = r["dag-db"] >= r["ddpo"] and r["dag-kl"] >= r["ddpo"]
    improved = all(v - pre["reward_mean"] >= margin for v in r.values())
    hist = results["dag-db"]["eval_hist_kl"] < pre["eval_hist_kl"]
    ok = ordering and improved and hist and elapsed < 3600
    assert record_criterion(7, ok, f"mean reward pretrained {pre['reward_mean']:.3f} (std {pre['reward_std']:.3f}); "
                                   f"dag-db {r['dag-db']:.3f}, dag-kl {r['dag-kl']:.3f}, ddpo {r['ddpo']:.3f}; "
                                   f"hist KL {pre['eval_hist_kl']:.2f} -> {results['dag-db']['eval_hist_kl']:.2f}; "
                                   f"{elapsed:.0f} s")


def _null_change(chain, cfg, before_ckpt, after_ckpt):
    a = evaluate(chain, theta_of(before_ckpt), cfg.reward, EVAL_N, 0.0, key=(cfg.run.seed, 1))
    b = evaluate(chain, theta_of(after_ckpt), cfg.reward, EVAL_N, 0.0, key=(cfg.run.seed, 2))
    se = np.hypot(a["reward_se"], b["reward_se"])
    return b["reward_mean"] - a["reward_mean"], se


def test_criterion_08_null_signal(configs_dir, ring_pretrained, tmp_path, record_criterion):
    parts, ok = [], True
    for algo in ("dag-db", "dag-kl", "ddpo"):
        cfg, pre, ckpt, _ = discrete_run(configs_dir, tmp_path / algo, algo, epochs=10, beta_max=0.0)
        diff, se = _null_change(build_chain(cfg), cfg, pre, ckpt)
        ok &= abs(diff) <= 3 * se
        parts.append(f"discrete {algo} {diff:+.4f} ({abs(diff) / se:.2f} SE)")
    ring_cfg, pre_ckpt, root = ring_pretrained
    cfg = with_algorithm(ring_cfg, "ddpo", epochs=10, beta_max=0.0)
    ckpt = run_align(cfg, root / "null-ddpo", init=pre_ckpt)
    diff, se = _null_change(build_chain(cfg), cfg, pre_ckpt, ckpt)
    ok &= abs(diff) <= 3 * se
    parts.append(f"ring ddpo {diff:+.4f} ({abs(diff) / se:.2f} SE)")
    assert record_criterion(8, ok, "beta_max=0, 10 epochs, reward change: " + "; ".join(parts))


def test_criterion_08_info_continuous_flow_objective(ring_pretrained):
    """Not asserted: at beta=0 the detailed-balance target on R^2 is the flat
    (improper) measure, so the flow objectives still move the sampler."""
    ring_cfg, pre_ckpt, root = ring_pretrained
    cfg = with_algorithm(ring_cfg, "dag-db", epochs=10, beta_max=0.0)
    ckpt = run_align(cfg, root / "null-dag-db", init=pre_ckpt)
    diff, se = _null_change(build_chain(cfg), cfg, pre_ckpt, ckpt)
    print(f"info: ring dag-db at beta_max=0 changes mean reward by {diff:+.3f} ({abs(diff) / se:.1f} SE)")


def test_criterion_09_annealing(record_criterion):
    spec = RewardSpec("ring", beta_max=100.0, anneal_fraction=0.5)
    total = 100
    vals = [beta_at(spec, s, total) for s in (0, 25, 50, 75, 100)]
    linear = all(beta_at(spec, s, total) == pytest.approx(100.0 * s / 50, abs=1e-12) for s in range(51))
    ok = vals == [0.0, 50.0, 100.0, 100.0, 100.0] and linear
    assert record_criterion(9, ok, f"beta at steps 0/25/50/75/100 of 100 = {vals}")


def test_criterion_10_determinism_and_resume(configs_dir, ring_pretrained, tmp_path, record_criterion):
    cfg = with_algorithm(parse_config(configs_dir / "discrete.ini"), "dag-kl", epochs=4)
    pre = run_pretrain(cfg, tmp_path / "pretrain")
    run_align(cfg, tmp_path / "a", init=pre)
    run_align(cfg, tmp_path / "b", init=pre)
    same_metrics = (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()

    ring_cfg, pre_ckpt, root = ring_pretrained
    rcfg = with_algorithm(ring_cfg, "dag-db", epochs=4)
    full = run_align(rcfg, root / "full4", init=pre_ckpt)
    run_align(rcfg, root / "split4", init=pre_ckpt, stop_after=2)
    split = run_align(rcfg, root / "split4", resume=root / "split4" / "align.ckpt")
    resumed_metrics = ((root / "split4" / "metrics.jsonl").read_bytes()
                       == (root / "full4" / "metrics.jsonl").read_bytes())
    a, b = load_checkpoint(full), load_checkpoint(split)
    same_state = list(a.arrays) == list(b.arrays) and all(
        a.arrays[k].tobytes() == b.arrays[k].tobytes() for k in a.arrays)
    ok = same_metrics and resumed_metrics and same_state
    assert record_criterion(10, ok, f"rerun metrics identical: {same_metrics}; 2+2 resume metrics identical: "
                                    f"{resumed_metrics}; resumed parameters and optimizer bit-identical: {same_state}")
