"""Static SVG charts for the analysis outputs (line and scatter, nothing fancy)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def save_line_chart(
    path: str | Path,
    xs: Sequence[float],
    series: dict[str, Sequence[float]],
    xlabel: str,
    ylabel: str,
    title: str = "",
    fit: Sequence[tuple[float, float]] | None = None,
) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, ys in series.items():
        ax.plot(xs, ys, marker="o", label=name)
    if fit:
        ax.plot([p[0] for p in fit], [p[1] for p in fit], linestyle="--", label="fit")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def save_scatter_chart(
    path: str | Path,
    points: Sequence[tuple[float, float]],
    xlabel: str,
    ylabel: str,
    title: str = "",
    identity_line: bool = False,
) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter([p[0] for p in points], [p[1] for p in points])
    if identity_line and points:
        lo = min(min(p) for p in points)
        hi = max(max(p) for p in points)
        ax.plot([lo, hi], [lo, hi], linestyle=":", color="gray", label="y = x")
        ax.legend()
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
