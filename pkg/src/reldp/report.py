"""Headless matplotlib figures rendered next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_FIGSIZE = (7.0, 4.5)
_DPI = 130


def plot_rdp_curves(path, curves: dict) -> None:
    """Log-log divergence order vs privacy cost, one line per bound."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for label, curve in curves.items():
        positive = curve.eps > 0
        ax.loglog(curve.alphas[positive], curve.eps[positive],
                  marker=".", markersize=3, linewidth=1.2, label=label)
    ax.set_xlabel("order alpha")
    ax.set_ylabel("per-iteration RDP epsilon")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata={"Software": "reldp"})
    plt.close(fig)


def plot_composed_dp(path, iterations, eps_by_mode: dict) -> None:
    """Converted (eps, delta) cost against the iteration count."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for label, eps in eps_by_mode.items():
        ax.loglog(iterations, eps, marker="o", markersize=4,
                  linewidth=1.2, label=label)
    ax.set_xlabel("iterations")
    ax.set_ylabel("epsilon at fixed delta")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata={"Software": "reldp"})
    plt.close(fig)


def plot_loss(path, losses) -> None:
    """Mean batch loss per training iteration."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(range(len(losses)), losses, linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean batch loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata={"Software": "reldp"})
    plt.close(fig)
