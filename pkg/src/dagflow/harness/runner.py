"""Command implementations: pretrain, align, eval, oracle-check."""

from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np

from dagflow.align.trainer import AlignState, align_epoch
from dagflow.diffusion.data import write_dataset
from dagflow.diffusion.pretrain import denoising_pretrain_step
from dagflow.errors import CompatibilityError, ContractError
from dagflow.harness.checkpoint import load_checkpoint, save_checkpoint
from dagflow.harness.config import RunConfig, dump_config
from dagflow.harness.evaluate import evaluate
from dagflow.harness.metrics import MetricsWriter, truncate_after
from dagflow.harness.tasks import (
    PretrainData,
    align_state_from_checkpoint,
    build_chain,
    build_flow,
    check_compatible,
    config_from_checkpoint,
    init_phi,
    init_theta,
    state_checkpoint,
)
from dagflow.numerics.optim import adamw_init

log = logging.getLogger("dagflow")

PRETRAIN_CKPT = "pretrain.ckpt"
ALIGN_CKPT = "align.ckpt"


def _task_label(cfg: RunConfig) -> str:
    return f"{cfg.task.chain}/{cfg.reward.id}"


def run_pretrain(cfg: RunConfig, out_dir) -> Path:
    """Fit the data-prediction network by denoising; discrete chains start from uniform logits."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    chain = build_chain(cfg)
    theta = init_theta(cfg, chain)
    writer = MetricsWriter(out / "pretrain_metrics.jsonl", truncate=True)
    if cfg.task.chain == "discrete":
        writer.write({"phase": "pretrain", "epoch": 0, "step": 0, "loss": 0.0})
        path = out / PRETRAIN_CKPT
        save_checkpoint(path, state_checkpoint(cfg, "pretrain", theta))
        return path
    pre = cfg.pretrain
    data = PretrainData(cfg, np.random.default_rng([cfg.run.seed, 12]))
    rng = np.random.default_rng([cfg.run.seed, 11])
    opt = adamw_init(theta, pre.lr, weight_decay=pre.weight_decay)
    for step in range(1, pre.steps + 1):
        x, c = data.batch(pre.batch_size, rng)
        loss, theta, opt = denoising_pretrain_step(chain, theta, opt, x, rng, c)
        writer.write({"phase": "pretrain", "epoch": 0, "step": step, "loss": float(loss)})
        if step % 500 == 0:
            log.info("pretrain step %d loss %.5f", step, loss)
    path = out / PRETRAIN_CKPT
    save_checkpoint(path, state_checkpoint(cfg, "pretrain", theta, opt_theta=opt))
    return path


def run_align(cfg: RunConfig, out_dir, init=None, resume=None, stop_after: int | None = None,
              wall_clock: bool = False) -> Path:
    """Run ``align_epoch`` until the configured budget; checkpoint after every epoch.

    ``init`` is a pretrain checkpoint (required unless resuming); ``resume`` is an
    align checkpoint written by an earlier run of the same config. ``stop_after``
    ends this invocation after that many epochs (the budget is unchanged).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chain, flow = build_chain(cfg), build_flow(cfg)
    metrics_path = out / "metrics.jsonl"
    if resume is not None:
        ck = load_checkpoint(resume)
        if ck.meta.get("kind") != "align":
            raise CompatibilityError(f"{resume} is not an align checkpoint")
        check_compatible(cfg, ck)
        if ck.config_hash != cfg.digest():
            raise CompatibilityError("resume checkpoint was written under a different config")
        state = align_state_from_checkpoint(ck)
        truncate_after(metrics_path, state.epoch)
        writer = MetricsWriter(metrics_path)
    else:
        if init is None:
            raise ContractError("align needs a pretrained checkpoint (--init) or --resume")
        ck = load_checkpoint(init)
        check_compatible(cfg, ck)
        state = AlignState.create(ck.group("theta"), init_phi(cfg, flow), cfg.algorithm)
        writer = MetricsWriter(metrics_path, truncate=True)
        (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")

    n_cond = cfg.task.n_conditions
    budget = cfg.algorithm.epochs
    done = 0
    t0 = time.perf_counter()
    while state.epoch < budget and (stop_after is None or done < stop_after):
        epoch = state.epoch
        state, rec = align_epoch(cfg.algorithm, chain, flow, cfg.reward, state, n_cond)
        rec = {"phase": "align", **rec, "task": _task_label(cfg)}
        if (epoch + 1) % cfg.run.eval_every == 0 or epoch + 1 == budget:
            ev = evaluate(chain, state.theta, cfg.reward, cfg.run.eval_samples,
                          cfg.reward.beta_max, key=(cfg.run.seed, epoch, 9),
                          bins=cfg.run.hist_bins, half_width=cfg.run.hist_range,
                          n_conditions=n_cond)
            rec.update({k: v for k, v in ev.items() if k.startswith("eval_")})
            if not chain.discrete and not n_cond:
                write_dataset(out / "samples" / f"epoch_{epoch:04d}.csv",
                              chain.sample(state.theta, 512, key=(cfg.run.seed, epoch, 10)))
        if wall_clock:
            rec["wall_seconds"] = time.perf_counter() - t0
        writer.write(rec)
        save_checkpoint(out / ALIGN_CKPT, state_checkpoint(cfg, "align", state.theta, state.phi,
                                                          state))
        log.info("epoch %d reward %.4f beta %.3f", epoch, rec["reward_mean"], rec["beta"])
        done += 1
    return out / ALIGN_CKPT


def run_eval(ckpt_path, n: int, bins: int | None = None, seed: int | None = None,
             out_dir=None, beta: float | None = None, cfg: RunConfig | None = None) -> dict:
    """Evaluate a checkpoint under its own stored config, or under ``cfg`` (which
    must describe the same task) to score it against a different reward."""
    ck = load_checkpoint(ckpt_path)
    if cfg is None:
        cfg = config_from_checkpoint(ck)
    else:
        check_compatible(cfg, ck)
    chain = build_chain(cfg)
    theta = ck.group("theta")
    seed = cfg.run.seed if seed is None else seed
    report = evaluate(chain, theta, cfg.reward, n, cfg.reward.beta_max if beta is None else beta,
                      key=(seed, 2**31 - 1), bins=bins or cfg.run.hist_bins,
                      half_width=cfg.run.hist_range, n_conditions=cfg.task.n_conditions)
    report = {"checkpoint": str(ckpt_path), "kind": ck.meta.get("kind"),
              "epoch": ck.meta.get("epoch", 0), **report}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if not chain.discrete and not cfg.task.n_conditions:
            write_dataset(out / "eval_samples.csv", chain.sample(theta, min(n, 2048), key=(seed, 5)))
    return report
