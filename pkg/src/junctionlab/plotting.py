"""Figures written next to the CSV artifacts."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.ticker import NullFormatter  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "savefig.dpi": 150,
    "svg.hashsalt": "junctionlab",
}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_convergence(report, path: Path) -> Path:
    """Log-log gaps against eps: energy/body/trace in one panel, weak gaps in the other."""
    rows = [r for r in report.rows if not r.failed]
    eps = np.array([r.eps for r in rows])
    with plt.rc_context(RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.0, 3.0), sharex=True)
        for name, label, style in (
            ("energy_gap", r"$|E_\varepsilon-E_0|$", "o-"),
            ("body_l2_gap", r"$\|u_\varepsilon-u_0^+\|_{L^2(\Omega_0)}$", "s-"),
            ("trace_gap", r"trace gap on $I_0$", "^-"),
        ):
            _positive_loglog(ax1, eps, [getattr(r, name) for r in rows], style, label)
        if len(eps) > 1 and rows[0].energy_gap > 0:
            ref = eps / eps[0] * rows[0].energy_gap
            ax1.loglog(eps, ref, "k:", label=r"$O(\varepsilon)$")
        ax1.set_xlabel(r"$\varepsilon$")
        ax1.set_ylabel("gap")
        for j, name in enumerate(report.test_functions):
            _positive_loglog(ax2, eps, [r.weak_gaps[j] for r in rows], "o-", rf"$\psi$ = {name}")
        ax2.set_xlabel(r"$\varepsilon$")
        ax2.set_ylabel("weak gap")
        for ax in (ax1, ax2):
            ax.set_xscale("log")
            if len(eps):
                ax.set_xticks(eps, [f"{e:.3g}" for e in eps])
                ax.xaxis.set_minor_formatter(NullFormatter())
            if ax.get_legend_handles_labels()[0]:
                ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def _positive_loglog(ax, x, y, style, label):
    """Log-log line through the strictly positive points only (zero gaps are omitted)."""
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if keep.any():
        ax.loglog(x[keep], y[keep], style, label=label)


def plot_profiles(x2_oracle, u_oracle, x2_2d, u_2d, path: Path, h: float | None = None) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.6, 3.0))
        ax.plot(x2_oracle, u_oracle, "k-", label="1D transmission oracle")
        ax.plot(x2_2d, u_2d, "o", mfc="none", label="2D limit solve")
        ax.axvline(0.0, color="0.6", lw=0.8)
        ax.set_xlabel(r"$x_2$")
        ax.set_ylabel(r"$u_0$")
        if h is not None:
            ax.set_title(rf"$h={h:g}$")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_solution(mesh, u, path: Path, title: str = "") -> Path:
    """Filled contour of a nodal field over the element quadrilaterals."""
    from matplotlib.collections import PolyCollection

    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 4.0))
        polys = mesh.nodes[mesh.elements]
        vals = u[mesh.elements].mean(axis=1)
        pc = PolyCollection(polys, array=vals, cmap="viridis", edgecolors="none")
        ax.add_collection(pc)
        ax.autoscale_view()
        ax.set_aspect("equal")
        ax.set_xlabel(r"$x_1$")
        ax.set_ylabel(r"$x_2$")
        if title:
            ax.set_title(title)
        fig.colorbar(pc, ax=ax, shrink=0.8)
        fig.tight_layout()
        return _save(fig, path)
