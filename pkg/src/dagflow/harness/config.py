"""Sectioned key-value run configuration with strict keys and a canonical dump."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from dagflow.align.trainer import AlignConfig
from dagflow.errors import ConfigError, ContractError
from dagflow.rewards import RewardSpec, reward_defaults

SECTIONS = ("task", "reward", "algorithm", "pretrain", "run")


@dataclass(frozen=True)
class TaskConfig:
    chain: str = "gaussian"  # gaussian | discrete
    data_dim: int = 2
    schedule: str = "cosine"
    T: int = 20
    hidden: int = 64
    depth: int = 3
    time_dim: int = 16
    n_conditions: int = 0
    cond_dim: int = 8
    flow_output_scale: float = 1.0
    dataset: str = ""  # empty: draw from the built-in 8-Gaussians generator
    S: int = 16
    stay: float = 0.3


@dataclass(frozen=True)
class PretrainConfig:
    steps: int = 2000
    batch_size: int = 256
    lr: float = 1e-3
    weight_decay: float = 0.0
    dataset_size: int = 0  # 0: fresh 8-Gaussians draws every step


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "runs/default"
    epochs: int = 100
    eval_every: int = 10
    eval_samples: int = 4096
    hist_bins: int = 32
    hist_range: float = 10.0


@dataclass(frozen=True)
class RunConfig:
    task: TaskConfig = field(default_factory=TaskConfig)
    reward: RewardSpec = field(default_factory=lambda: RewardSpec("ring"))
    algorithm: AlignConfig = field(default_factory=AlignConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    run: RunSection = field(default_factory=RunSection)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, run=replace(self.run, seed=seed),
                       algorithm=replace(self.algorithm, seed=seed))

    def with_out(self, out: str) -> "RunConfig":
        return replace(self, run=replace(self.run, out=str(out)))

    def task_signature(self) -> dict:
        """Fields a checkpoint must agree on to be reused under this config."""
        t = self.task
        keys = ["chain", "data_dim", "schedule", "T", "hidden", "depth", "time_dim",
                "n_conditions", "cond_dim"] if t.chain == "gaussian" else ["chain", "S", "T", "stay"]
        return {k: getattr(t, k) for k in keys}

    def digest(self) -> str:
        """Hash of everything that affects results (the output location does not)."""
        return hashlib.sha256(dump_config(self.with_out("")).encode()).hexdigest()[:16]


_ALIGN_KEYS = [f.name for f in fields(AlignConfig) if f.name not in ("epochs", "seed")]


def _parse_value(raw: str, default: Any, key: str, where: str):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            return low == "true"
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, str):
            return raw.strip()
        return json.loads(raw)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {raw!r}") from exc


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line numbers of every key, for error messages (configparser drops them)."""
    out, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif s and not s.startswith(("#", ";")) and ("=" in s or ":" in s) and section:
            key = s.split("=", 1)[0] if "=" in s else s.split(":", 1)[0]
            out.setdefault((section, key.strip()), n)
    return out


def _build(cls, items: dict, section: str, lines, path: str, skip=()):
    defaults = {f.name: f.default for f in fields(cls)}
    kwargs = {}
    for key, raw in items.items():
        where = f"{path}:{lines.get((section, key), '?')}"
        if key not in defaults or key in skip:
            raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
        kwargs[key] = _parse_value(raw, defaults[key], key, where)
    return kwargs


def parse_config_text(text: str, path: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    cp.optionxform = lambda s: s.strip()  # keep case: T and S are case-sensitive
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    lines = _key_lines(text)
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"{path}:{_section_line(text, sec)}: unknown section [{sec}]")
    sec = lambda name: dict(cp[name]) if cp.has_section(name) else {}

    try:
        task = TaskConfig(**_build(TaskConfig, sec("task"), "task", lines, path))
        if task.chain not in ("gaussian", "discrete"):
            raise ConfigError(f"{path}: task.chain must be 'gaussian' or 'discrete'")
        if task.dataset:
            ds = Path(task.dataset)
            if not ds.is_absolute() and base_dir is not None:
                ds = base_dir / ds
            if not ds.is_file():
                raise ConfigError(f"{path}:{lines.get(('task', 'dataset'), '?')}: "
                                  f"dataset file not found: {task.dataset}")
            task = replace(task, dataset=str(ds))

        rew_items = sec("reward")
        rid = rew_items.pop("id", "table" if task.chain == "discrete" else "ring")
        rparams, rtop = {}, {}
        known = reward_defaults(rid)
        for key, raw in rew_items.items():
            where = f"{path}:{lines.get(('reward', key), '?')}"
            if key in ("beta_max", "anneal_fraction"):
                rtop[key] = _parse_value(raw, 0.0, key, where)
            elif key in known:
                rparams[key] = _parse_value(raw, known[key], key, where)
            else:
                raise ConfigError(f"{where}: unknown key {key!r} in [reward] for reward {rid!r}")
        reward = RewardSpec(rid, rparams, **rtop)

        run = RunSection(**_build(RunSection, sec("run"), "run", lines, path))
        algo_kw = _build(AlignConfig, sec("algorithm"), "algorithm", lines, path,
                         skip=("epochs", "seed"))
        algorithm = AlignConfig(**algo_kw, epochs=run.epochs, seed=run.seed)
        pretrain = PretrainConfig(**_build(PretrainConfig, sec("pretrain"), "pretrain", lines, path))
    except ConfigError:
        raise
    except ContractError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _validate(task, pretrain, run, path)
    return RunConfig(task=task, reward=reward, algorithm=algorithm, pretrain=pretrain, run=run)


def _section_line(text: str, name: str):
    for n, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{name}]":
            return n
    return "?"


def _validate(task: TaskConfig, pre: PretrainConfig, run: RunSection, path: str) -> None:
    checks = [
        (task.T >= 1, "task.T must be >= 1"),
        (task.data_dim >= 1 and task.hidden >= 1 and task.depth >= 1, "network sizes must be >= 1"),
        (task.time_dim >= 2 and task.time_dim % 2 == 0, "task.time_dim must be even and >= 2"),
        (task.n_conditions >= 0, "task.n_conditions must be >= 0"),
        (task.S >= 1 and 0.0 <= task.stay <= 1.0, "need task.S >= 1 and task.stay in [0, 1]"),
        (task.flow_output_scale > 0, "task.flow_output_scale must be > 0"),
        (pre.steps >= 0 and pre.batch_size >= 1 and pre.lr > 0, "invalid [pretrain] values"),
        (run.epochs >= 1 and run.eval_every >= 1, "run.epochs and run.eval_every must be >= 1"),
        (run.eval_samples >= 1 and run.hist_bins >= 1 and run.hist_range > 0, "invalid eval settings"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(f"{path}: {msg}")


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p), p.parent)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (int, str)):
        return str(v)
    return json.dumps(v, separators=(", ", ": "))


def dump_config(cfg: RunConfig) -> str:
    """Canonical text: fixed section order, declaration-ordered keys, every default spelled out."""
    out = []
    out.append("[task]")
    out += [f"{f.name} = {_fmt(getattr(cfg.task, f.name))}" for f in fields(TaskConfig)]
    out.append("")
    out.append("[reward]")
    out.append(f"id = {cfg.reward.id}")
    out.append(f"beta_max = {_fmt(float(cfg.reward.beta_max))}")
    out.append(f"anneal_fraction = {_fmt(float(cfg.reward.anneal_fraction))}")
    out += [f"{k} = {_fmt(cfg.reward.params[k])}" for k in sorted(cfg.reward.params)]
    out.append("")
    out.append("[algorithm]")
    out += [f"{k} = {_fmt(getattr(cfg.algorithm, k))}" for k in _ALIGN_KEYS]
    out.append("")
    out.append("[pretrain]")
    out += [f"{f.name} = {_fmt(getattr(cfg.pretrain, f.name))}" for f in fields(PretrainConfig)]
    out.append("")
    out.append("[run]")
    out += [f"{f.name} = {_fmt(getattr(cfg.run, f.name))}" for f in fields(RunSection)]
    return "\n".join(line.rstrip() for line in out) + "\n"
