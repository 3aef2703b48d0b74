"""Figure rendering for CLI outputs.

Each renderer takes the CSV header/rows a command just produced and
writes a PNG next to the CSV file.  Plots are a convenience layer; the
CSVs remain the primary interface.
"""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _png_path(out_csv: str) -> str:
    root, _ = os.path.splitext(out_csv)
    return root + ".png"


def _by_name(header, rows, key_col, name_col):
    """Group rows into name -> (keys, values-per-column dict)."""
    groups = defaultdict(list)
    for row in rows:
        groups[row[name_col]].append(row)
    return groups


def render(command: str, header: list, rows: list, out_csv: str) -> str | None:
    """Dispatch to the command-specific renderer; returns the PNG path."""
    renderer = _RENDERERS.get(command)
    if renderer is None:
        return None
    path = _png_path(out_csv)
    renderer(header, rows, path)
    return path


def _render_expand(header, rows, path):
    groups = _by_name(header, rows, 0, 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, group in sorted(groups.items()):
        thetas = [float(r[0]) for r in group]
        errs = [float(r[7]) for r in group]
        ax.loglog(thetas, errs, marker="o", label=name)
    ax.set_xlabel("impact scale theta")
    ax.set_ylabel("normalized error")
    ax.set_title("Series truncation error by coefficient")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_sensitivity(header, rows, path):
    groups = _by_name(header, rows, 0, 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, group in sorted(groups.items()):
        zs = [float(r[0]) for r in group]
        linear = [float(r[2]) for r in group]
        fd = [float(r[3]) for r in group]
        (line,) = ax.plot(zs, linear, marker="o", label=name)
        ax.plot(zs, fd, linestyle="--", color=line.get_color())
    ax.set_xlabel("z")
    ax.set_ylabel("d/dz coefficient (solid: linear solve, dashed: FD)")
    ax.set_title("Coefficient sensitivities")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_fast(header, rows, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    by_k = defaultdict(list)
    for r in rows:
        by_k[float(r[0])].append(r)
    for k, group in sorted(by_k.items()):
        ys = [float(r[1]) for r in group]
        ax1.plot(ys, [float(r[2]) for r in group], linestyle="--", label=f"base K={k:g}")
        ax1.plot(ys, [float(r[3]) for r in group], marker="o", label=f"corrected K={k:g}")
        ax2.plot(ys, [float(r[4]) for r in group], linestyle="--")
        ax2.plot(ys, [float(r[5]) for r in group], marker="o")
    ax1.set_xlabel("y")
    ax1.set_ylabel("tracking speed")
    ax2.set_xlabel("y")
    ax2.set_ylabel("aim portfolio")
    ax1.legend(fontsize=7)
    fig.suptitle("Fast-factor correction")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_slow(header, rows, path):
    zs = [float(r[0]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for idx, name in ((2, "b_q"), (3, "b_l"), (4, "b_x")):
        ax1.plot(zs, [float(r[idx]) for r in rows], marker="o", label=name)
    ax1.set_xlabel("z")
    ax1.set_ylabel("first-order coefficients")
    ax1.legend(fontsize=8)
    ax2.plot(zs, [float(r[5]) for r in rows], linestyle="--", label="aim base")
    ax2.plot(zs, [float(r[6]) for r in rows], marker="o", label="aim corrected")
    ax2.set_xlabel("z")
    ax2.set_ylabel("aim portfolio")
    ax2.legend(fontsize=8)
    fig.suptitle("Slow-factor correction")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_simulate(header, rows, path):
    names = [r[0] for r in rows]
    means = [float(r[5]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(names)), means)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, fontsize=8)
    ax.set_ylabel("mean (bps)")
    ax.set_title("Strategy comparison")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _render_sweep(header, rows, path):
    z0s = [float(r[0]) for r in rows]
    means = [float(r[1]) for r in rows]
    lo = [float(r[3]) for r in rows]
    hi = [float(r[4]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(z0s, means, marker="o", label="corrected mean (bps)")
    ax.fill_between(z0s, lo, hi, alpha=0.25, label="95% CI")
    ax.set_xlabel("initial slow factor z0")
    ax.set_ylabel("PnL (bps)")
    ax.set_title("PnL by initial volatility level")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


_RENDERERS = {
    "expand": _render_expand,
    "sensitivity": _render_sensitivity,
    "fast-correction": _render_fast,
    "slow-correction": _render_slow,
    "simulate": _render_simulate,
    "sweep": _render_sweep,
}
