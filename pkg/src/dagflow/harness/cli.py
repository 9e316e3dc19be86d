"""Command line entry point.

Exit codes: 0 success, 1 contract or config error, 2 numerical failure,
3 failed verification in ``oracle-check``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from dagflow.diffusion.data import eight_gaussians, write_dataset
from dagflow.errors import ConfigError, DagflowError
from dagflow.harness import runner
from dagflow.harness.checks import run_oracle_check
from dagflow.harness.config import RunConfig, dump_config, parse_config
from dagflow.harness.svg import compare_runs

EXIT_OK, EXIT_CONTRACT, EXIT_NUMERICAL, EXIT_CHECK_FAILED = 0, 1, 2, 3


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="run configuration file (INI sections task/reward/algorithm/pretrain/run)")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--out", help="output directory (overrides run.out)")
    p.add_argument("--resume", help="align checkpoint to continue from")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="dagflow", description="Align diffusion samplers to rewards "
                                 "with detailed-balance and KL objectives.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("pretrain", parents=[common], help="denoising pretraining")
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("align", parents=[common], help="reward alignment (dag-db, dag-kl, ddpo)")
    sp.add_argument("--init", help="pretrain checkpoint (default: <out>/../pretrain/pretrain.ckpt)")
    sp.add_argument("--stop-after", type=int, help="stop this invocation after N epochs")
    sp.add_argument("--wall-clock", action="store_true",
                    help="record wall_seconds in metrics (breaks byte-identical reruns)")
    sp.set_defaults(func=cmd_align)

    sp = sub.add_parser("eval", parents=[common], help="sample a checkpoint and report metrics")
    sp.add_argument("checkpoint")
    sp.add_argument("-n", "--samples", type=int, default=4096)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--beta", type=float, help="target temperature (default: reward beta_max)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("compare", parents=[common], help="reward-vs-trajectories SVG and merged CSV")
    sp.add_argument("metrics", nargs="+")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("oracle-check", parents=[common], help="exact and gradient verification suite")
    sp.add_argument("--inject-flow-perturbation", type=float, default=0.0, metavar="DELTA")
    sp.add_argument("--identity-instances", type=int, default=100)
    sp.add_argument("--fd-points", type=int, default=10)
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("make-data", parents=[common], help="write an 8-Gaussians dataset file")
    sp.add_argument("-n", type=int, default=10000)
    sp.add_argument("--conditions", type=int, default=0, help="label rows with component id mod K")
    sp.set_defaults(func=cmd_make_data)

    sp = sub.add_parser("show-config", parents=[common], help="print the normalized configuration")
    sp.set_defaults(func=cmd_show_config)
    return ap


def _load(args, required: bool = True) -> RunConfig | None:
    if args.config is None:
        if required:
            raise ConfigError("--config is required for this command")
        return None
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_out(args.out)
    return cfg


def _emit(obj) -> None:
    print(json.dumps(obj, separators=(",", ":")))


def cmd_pretrain(args) -> int:
    cfg = _load(args)
    if args.resume:
        raise ConfigError("--resume applies to align runs only")
    path = runner.run_pretrain(cfg, cfg.run.out)
    _emit({"command": "pretrain", "checkpoint": str(path)})
    return EXIT_OK


def cmd_align(args) -> int:
    cfg = _load(args)
    init = args.init
    if init is None and not args.resume:
        init = str(Path(cfg.run.out).parent / "pretrain" / runner.PRETRAIN_CKPT)
    path = runner.run_align(cfg, cfg.run.out, init=init, resume=args.resume,
                            stop_after=args.stop_after, wall_clock=args.wall_clock)
    _emit({"command": "align", "checkpoint": str(path)})
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load(args, required=False)
    report = runner.run_eval(args.checkpoint, args.samples, bins=args.bins, seed=args.seed,
                             out_dir=args.out, beta=args.beta, cfg=cfg)
    _emit(report)
    return EXIT_OK


def cmd_compare(args) -> int:
    out = args.out or "compare"
    svg, csv_path, warnings = compare_runs(args.metrics, out)
    for w in warnings:
        print(w, file=sys.stderr)
    _emit({"command": "compare", "svg": str(svg), "csv": str(csv_path), "warnings": warnings})
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cfg = _load(args, required=False)
    seed = args.seed if args.seed is not None else (cfg.run.seed if cfg else 0)
    spec = reward = None
    beta = 1.0
    if cfg is not None and cfg.task.chain == "discrete":
        from dagflow.harness.tasks import build_chain
        spec, reward, beta = build_chain(cfg).spec, cfg.reward, cfg.reward.beta_max
    records = run_oracle_check(seed=seed, identity_instances=args.identity_instances,
                               fd_points=args.fd_points, perturbation=args.inject_flow_perturbation,
                               spec=spec, reward=reward, beta=beta)
    ok = all(r["pass"] for r in records)
    lines = [json.dumps(r, separators=(",", ":")) for r in records]
    lines.append(json.dumps({"check": "summary", "pass": ok, "failed": [r["check"] for r in records
                                                                       if not r["pass"]]},
                            separators=(",", ":")))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "oracle_check.jsonl").write_text(text, encoding="utf-8")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_make_data(args) -> int:
    seed = 0 if args.seed is None else args.seed
    x, k = eight_gaussians(args.n, np.random.default_rng(seed))
    path = Path(args.out or "eight_gaussians.csv")
    write_dataset(path, x, k % args.conditions if args.conditions else None)
    _emit({"command": "make-data", "path": str(path), "n": args.n})
    return EXIT_OK


def cmd_show_config(args) -> int:
    sys.stdout.write(dump_config(_load(args)))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DagflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
