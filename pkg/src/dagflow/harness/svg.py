"""Reward-vs-trajectories line charts as static SVG, plus a merged CSV.

Every number is printed with a fixed format so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

from dagflow.harness.metrics import read_metrics

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
CSV_FIELDS = ("run", "algorithm", "epoch", "step", "trajectories", "beta",
              "reward_mean", "reward_max", "reward_std")


@dataclass(frozen=True)
class Series:
    label: str
    xs: tuple
    ys: tuple


def _num(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.6g}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_svg(series: list[Series], title: str, xlabel: str, ylabel: str,
               notes: list[str] = (), width: int = 720, height: int = 440) -> str:
    left, right, top, bottom = 80, 180, 50, 60
    pw, ph = width - left - right, height - top - bottom
    xs = [x for s in series for x in s.xs] or [0.0, 1.0]
    ys = [y for s in series for y in s.ys] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    sx = lambda x: left + (x - x0) / (x1 - x0) * pw
    sy = lambda y: top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{_num(left + pw / 2)}" y="28" font-family="sans-serif" font-size="15" '
        f'text-anchor="middle">{_esc(title)}</text>',
    ]
    for v in _nice_ticks(y0, y1):
        y = sy(v)
        out.append(f'<line x1="{left}" y1="{_num(y)}" x2="{left + pw}" y2="{_num(y)}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 6}" y="{_num(y + 4)}" font-family="sans-serif" font-size="10" '
                   f'text-anchor="end">{_tick(v)}</text>')
    for v in _nice_ticks(x0, x1):
        x = sx(v)
        out.append(f'<text x="{_num(x)}" y="{top + ph + 16}" font-family="sans-serif" font-size="10" '
                   f'text-anchor="middle">{_tick(v)}</text>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<text x="{_num(left + pw / 2)}" y="{height - 18}" font-family="sans-serif" '
               f'font-size="12" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="18" y="{_num(top + ph / 2)}" font-family="sans-serif" font-size="12" '
               f'text-anchor="middle" transform="rotate(-90 18 {_num(top + ph / 2)})">{_esc(ylabel)}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in zip(s.xs, s.ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        ly = top + 10 + 18 * i
        out.append(f'<line x1="{left + pw + 14}" y1="{ly}" x2="{left + pw + 38}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{left + pw + 44}" y="{ly + 4}" font-family="sans-serif" '
                   f'font-size="11">{_esc(s.label)}</text>')
    for j, note in enumerate(notes):
        out.append(f'<text x="{left}" y="{height - 4 - 12 * (len(notes) - 1 - j)}" '
                   f'font-family="sans-serif" font-size="10" fill="#b00000">{_esc(note)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def compare_runs(paths, out_dir) -> tuple[Path, Path, list[str]]:
    """Merge metrics streams into ``compare.csv`` and chart mean reward against
    trajectories consumed in ``compare.svg``. Returns the paths and any warnings."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series, rows, tasks, warnings = [], [], set(), []
    for p in paths:
        recs = [r for r in read_metrics(p) if r.get("phase", "align") == "align" and "reward_mean" in r]
        run = Path(p).parent.name or Path(p).stem
        algo = recs[0].get("algorithm", "?") if recs else "?"
        tasks.update(r.get("task", "") for r in recs)
        series.append(Series(f"{algo} ({run})", tuple(float(r["trajectories"]) for r in recs),
                             tuple(float(r["reward_mean"]) for r in recs)))
        for r in recs:
            rows.append([run] + [_fmt_cell(r.get(k)) for k in CSV_FIELDS[1:]])
    if len(tasks) > 1:
        warnings.append(f"warning: runs come from different tasks: {', '.join(sorted(tasks))}")
    svg_path, csv_path = out_dir / "compare.svg", out_dir / "compare.csv"
    svg_path.write_text(render_svg(series, "Mean raw reward vs trajectories",
                                   "trajectories consumed", "mean raw reward", warnings),
                        encoding="utf-8")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    w.writerows(rows)
    csv_path.write_text(buf.getvalue(), encoding="utf-8")
    return svg_path, csv_path, warnings
