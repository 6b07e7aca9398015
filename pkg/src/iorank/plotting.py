"""Figures for sweep series."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_sweep(param: str, xs: Sequence[float], measured: Sequence[float], bound: Sequence[float],
               path, title: str = "", bound_label: str = "bound") -> Path:
    """Measured error and its bound against the swept parameter, saved as PNG."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(xs, measured, "o-", ms=3, label="measured")
    ax.plot(xs, bound, "--", label=bound_label)
    ax.set_xlabel(param)
    ax.set_ylabel("1-norm error")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path
