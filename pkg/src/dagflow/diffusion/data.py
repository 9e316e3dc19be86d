"""Toy 2D datasets and the plain-text dataset format.

One sample per line: comma-separated floats, optionally followed by an
integer condition id when the file is written with conditions.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from dagflow.errors import ContractError


def eight_gaussians(n: int, rng: np.random.Generator, radius: float = 8.0,
                    std: float = 0.4) -> tuple[np.ndarray, np.ndarray]:
    """Samples and component ids of 8 equal-weight Gaussians evenly spaced on a circle."""
    k = rng.integers(0, 8, size=n)
    ang = k * np.pi / 4.0
    centers = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return centers + std * rng.standard_normal((n, 2)), k


def write_dataset(path, x: np.ndarray, conditions=None) -> None:
    x = np.asarray(x, dtype=np.float64)
    lines = []
    for i, row in enumerate(x):
        fields = [repr(float(v)) for v in row]
        if conditions is not None:
            fields.append(str(int(conditions[i])))
        lines.append(",".join(fields))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_dataset(path, data_dim: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Returns (samples, conditions or None). Blank lines and ``#`` comments are skipped."""
    rows, conds = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) not in (data_dim, data_dim + 1):
            raise ContractError(f"{path}:{lineno}: expected {data_dim} or {data_dim + 1} fields, "
                                f"got {len(fields)}")
        try:
            rows.append([float(f) for f in fields[:data_dim]])
            conds.append(int(fields[data_dim]) if len(fields) > data_dim else None)
        except ValueError as exc:
            raise ContractError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ContractError(f"{path}: dataset is empty")
    has_c = [c is not None for c in conds]
    if any(has_c) and not all(has_c):
        raise ContractError(f"{path}: condition column present on some lines only")
    x = np.asarray(rows, dtype=np.float64)
    return x, (np.asarray(conds, dtype=np.int64) if all(has_c) else None)
