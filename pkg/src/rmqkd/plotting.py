"""Figure rendering for the report path: every curve CSV gets a PNG next to
it.  Rendering is headless and intentionally minimal."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_curves(x, curves: dict[str, list[float]], xlabel: str, ylabel: str,
                path, logy: bool = True, title: str | None = None):
    """One axis, one line per labeled curve; zero rates are dropped from
    log-scale plots instead of crashing them."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, ys in curves.items():
        if logy:
            pts = [(xi, yi) for xi, yi in zip(x, ys) if yi > 0.0]
            if not pts:
                continue
            ax.semilogy([p[0] for p in pts], [p[1] for p in pts], label=label)
        else:
            ax.plot(x, ys, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if curves:
        ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_staircase(x, y, xlabel: str, ylabel: str, path, title: str | None = None):
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.step(x, y, where="post")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
