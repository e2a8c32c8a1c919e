"""Figure rendering for solver reports.

Writes matplotlib figures next to the delimited exports. Kept separate from
the solvers: nothing in here feeds back into the numerics.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .measures import Coupling


def render_report_figures(outdir: str, pi: Coupling | None = None,
                          trace=None, f=None, g=None, title: str = "wot") -> list[str]:
    """Render the standard report figures; returns the file paths written."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    if pi is not None:
        path = os.path.join(outdir, "coupling.png")
        _coupling_heatmap(pi, title)
        plt.savefig(path, dpi=130, bbox_inches="tight")
        plt.close()
        written.append(path)
        if pi.mu.dim == 1:
            path = os.path.join(outdir, "transport_map.png")
            _map_figure(pi, title)
            plt.savefig(path, dpi=130, bbox_inches="tight")
            plt.close()
            written.append(path)
    if trace:
        path = os.path.join(outdir, "trace.png")
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(np.arange(len(trace)), trace, lw=1.2)
        ax.set_xlabel("iteration")
        ax.set_ylabel("objective / residual")
        ax.set_title(f"{title}: solver trace")
        if min(trace) > 0:
            ax.set_yscale("log")
        plt.savefig(path, dpi=130, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    if f is not None or g is not None:
        path = os.path.join(outdir, "potentials.png")
        fig, ax = plt.subplots(figsize=(5, 3.2))
        if f is not None:
            ax.plot(np.arange(len(f)), f, "o-", label="f on supp(mu)", ms=3)
        if g is not None:
            ax.plot(np.arange(len(g)), g, "s-", label="g on supp(nu)", ms=3)
        ax.set_xlabel("atom index")
        ax.legend()
        ax.set_title(f"{title}: dual potentials")
        plt.savefig(path, dpi=130, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written


def _coupling_heatmap(pi: Coupling, title: str) -> None:
    fig, ax = plt.subplots(figsize=(4.4, 3.6))
    im = ax.imshow(pi.matrix, cmap="viridis", aspect="auto")
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_xlabel("nu atom")
    ax.set_ylabel("mu atom")
    ax.set_title(f"{title}: coupling mass")


def _map_figure(pi: Coupling, title: str) -> None:
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    xs = pi.mu.points[:, 0]
    ys = pi.nu.points[:, 0]
    for i in range(pi.mu.n):
        for j in range(pi.nu.n):
            w = pi.matrix[i, j]
            if w > 1e-12:
                ax.plot([xs[i], ys[j]], [0, 1], color="tab:blue",
                        alpha=min(1.0, 12 * w), lw=1.0)
    ax.plot(xs, np.zeros_like(xs), "ko", ms=4, label="supp(mu)")
    ax.plot(ys, np.ones_like(ys), "rs", ms=4, label="supp(nu)")
    means = pi.conditional_means()[:, 0]
    ax.plot(means, np.full_like(means, 0.5), "g^", ms=4, label="conditional means")
    ax.set_yticks([0, 0.5, 1])
    ax.set_yticklabels(["mu", "mean", "nu"])
    ax.legend(loc="best", fontsize=7)
    ax.set_title(f"{title}: transport geometry")
