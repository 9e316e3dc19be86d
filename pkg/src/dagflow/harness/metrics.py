"""Append-only JSON-lines metrics with a fixed key order."""

from __future__ import annotations

import json
import os
from pathlib import Path

KEY_ORDER = (
    "phase", "epoch", "step", "trajectories", "algorithm", "beta",
    "reward_mean", "reward_max", "reward_std",
    "loss", "loss_fl_db", "loss_dag_kl", "loss_kl_reg", "loss_ddpo",
    "grad_norm_theta", "grad_norm_phi",
    "eval_tv_optimal", "eval_kl_optimal", "eval_tv_target", "eval_floor", "eval_hist_kl",
    "task",
    "wall_seconds",
)


def order_record(record: dict) -> dict:
    """Known keys in KEY_ORDER, then any extras alphabetically."""
    out = {k: record[k] for k in KEY_ORDER if k in record}
    out.update({k: record[k] for k in sorted(record) if k not in out})
    return out


def encode_record(record: dict) -> str:
    return json.dumps(order_record(record), separators=(",", ":"), allow_nan=False)


class MetricsWriter:
    """Each record goes out as one ``write`` on an O_APPEND descriptor, so a crash
    can at worst lose a record, never leave half of one followed by another."""

    def __init__(self, path, truncate: bool = False):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if truncate:
            self.path.write_bytes(b"")
        self._last = None

    def write(self, record: dict) -> None:
        key = (record.get("epoch", -1), record.get("step", -1))
        if self._last is not None and key < self._last:
            raise ValueError(f"metrics must be appended in (epoch, step) order; {key} after {self._last}")
        self._last = key
        line = (encode_record(record) + "\n").encode("utf-8")
        fd = os.open(self.path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            os.write(fd, line)
        finally:
            os.close(fd)


def read_metrics(path) -> list[dict]:
    """Parse a metrics stream; an unterminated trailing line (interrupted write) is dropped."""
    data = Path(path).read_text(encoding="utf-8")
    lines = data.split("\n")
    if lines and lines[-1] != "":
        lines = lines[:-1]
    return [json.loads(s) for s in lines if s.strip()]


def truncate_after(path, epoch: int) -> int:
    """Keep only records with epoch < ``epoch`` (used when resuming); returns how many remain."""
    p = Path(path)
    if not p.exists():
        return 0
    keep = [r for r in read_metrics(p) if r.get("epoch", -1) < epoch]
    tmp = p.with_suffix(p.suffix + ".tmp")
    tmp.write_text("".join(encode_record(r) + "\n" for r in keep), encoding="utf-8")
    os.replace(tmp, p)
    return len(keep)
