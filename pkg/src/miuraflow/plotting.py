"""PNG figures written next to the CSV/JSON outputs (``--plot``)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .field import SampledField  # noqa: E402

__all__ = ["plot_field", "plot_trajectories", "plot_spectrum", "plot_checks"]


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_field(f: SampledField, path, label: str = "r", n_slices: int = 5):
    """Heat map of ``f(t, x)`` beside a few time slices."""
    g = f.grid
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))
    step = max(1, g.nt // 400)
    mesh = ax0.pcolormesh(g.x, g.t[::step], f.values[::step], shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax0, label=label)
    ax0.set_xlabel("x")
    ax0.set_ylabel("t")
    for i in np.linspace(0, g.nt - 1, min(n_slices, g.nt)).astype(int):
        ax1.plot(g.x, f.values[i], lw=1, label=f"t = {g.t[i]:.3g}")
    ax1.set_xlabel("x")
    ax1.set_ylabel(label)
    ax1.legend(fontsize=8)
    return _save(fig, path)


def plot_trajectories(t, coeffs: dict, path, title: str = "coefficients"):
    """One line per coefficient trajectory; ``coeffs`` maps label to samples."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for name, v in coeffs.items():
        ax.plot(t, v, lw=1, label=str(name))
    ax.set_xlabel("t")
    ax.set_title(title)
    if len(coeffs) <= 12:
        ax.legend(fontsize=8)
    return _save(fig, path)


def plot_spectrum(report: dict, path):
    """Eigenvalues against time from a spectrum report."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for t, ev in zip(report["times"], report["eigenvalues"]):
        ax.plot([t] * len(ev), ev, "o", color="C0")
    ax.set_xlabel("t")
    ax.set_ylabel("eigenvalue")
    ax.set_title(f"max pair deviation {report['max_pair_dev']:.2e}")
    return _save(fig, path)


def plot_checks(report: dict, path):
    """Measured value over limit for every ``max``-type check (log scale)."""
    rows = [c for c in report["checks"] if c["kind"] == "max" and c["limit"]]
    fig, ax = plt.subplots(figsize=(7, max(2.5, 0.25 * len(rows) + 1)))
    if rows:
        ratio = [max(float(c["value"]) / float(c["limit"]), 1e-17) for c in rows]
        colors = ["C2" if c["pass"] else "C3" for c in rows]
        ax.barh([c["name"] for c in rows], ratio, color=colors)
        ax.set_xscale("log")
        ax.axvline(1.0, color="k", lw=0.8)
        ax.set_xlabel("value / limit")
        ax.tick_params(axis="y", labelsize=7)
    return _save(fig, path)
