"""PNG rendering of CSV outputs. Needs the optional ``plot`` extra (matplotlib)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .persist import read_csv

__all__ = ["PlotUnavailable", "plot_csv"]


class PlotUnavailable(RuntimeError):
    pass


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        raise PlotUnavailable("--plot needs matplotlib; install it with `pip install dstorus[plot]`") from None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_csv(csv_path, png_path, x: str, ys: Sequence[str], logx: bool = False, logy: bool = True,
             title: str = "") -> Path:
    plt = _pyplot()
    _, cols = read_csv(csv_path)
    missing = [c for c in [x, *ys] if c not in cols]
    if missing:
        raise ValueError(f"{csv_path}: no numeric column(s) {missing}")
    fig, ax = plt.subplots(figsize=(6, 4))
    for y in ys:
        v = cols[y]
        keep = np.isfinite(v) & np.isfinite(cols[x]) & ((v > 0) if logy else True)
        ax.plot(cols[x][keep], v[keep], marker=".", label=y)
    ax.set_xscale("log" if logx else "linear")
    ax.set_yscale("log" if logy else "linear")
    ax.set_xlabel(x)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return Path(png_path)
