"""PNG figures for run outputs (Agg backend, no display needed)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({"figure.dpi": 110, "axes.grid": True, "grid.alpha": 0.3,
                     "font.size": 9, "lines.linewidth": 1.2})


def plot_profile(radii, u, path, title="ground state", r_max=None):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(radii, u, color="k")
    ax.set_xlabel("r")
    ax.set_ylabel("Q(r)")
    ax.set_title(title)
    if r_max is not None:
        ax.set_xlim(0, r_max)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_series(series, path, title=""):
    t = series["t"]
    fig, axs = plt.subplots(3, 1, figsize=(5.5, 6.5), sharex=True)
    axs[0].semilogy(t, series["y"], color="k")
    axs[0].set_ylabel(r"$y=\|u\|_2^2$")
    axs[1].plot(t, series["K0"], label=r"$K_0$")
    axs[1].plot(t, series["K2"], label=r"$K_2$")
    axs[1].axhline(0, color="0.5", lw=0.8)
    axs[1].legend(loc="best", frameon=False)
    axs[2].plot(t, series["conc_radius"], color="C2")
    axs[2].set_ylabel("conc. radius")
    axs[2].set_xlabel("t")
    if title:
        axs[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(rows, path, param="lam"):
    """Energy margin against the sweep parameter, marked by verdict."""
    marks = {"scattered": ("o", "C0"), "blew_up": ("^", "C3"), "undecided": ("s", "0.4"),
             "not_run": ("x", "0.6"), "error": ("x", "m")}
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for verdict, (mk, col) in marks.items():
        sel = [r for r in rows if r.get("verdict") == verdict]
        if sel:
            x = [float(r[param]) for r in sel]
            y = [float(r["E_minus_m"]) for r in sel]
            ax.plot(x, y, mk, color=col, label=verdict, ls="none")
    ax.axhline(0, color="k", lw=0.8)
    flip = [float(r[param]) for r in rows if r.get("K2_sign") in ("-", -1, "-1")]
    if flip:
        ax.axvline(min(flip), color="0.5", ls="--", lw=0.8)
    ax.set_xlabel(param)
    ax.set_ylabel("E - m")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def downsample(series, n=400, keys=("t", "y", "K0", "conc_radius")):
    """Evenly thinned columns for light plot-data files."""
    k = len(series)
    idx = np.unique(np.linspace(0, k - 1, min(n, k)).astype(int)) if k else np.array([], int)
    return {key: series[key][idx] for key in keys}
