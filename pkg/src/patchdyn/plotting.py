"""Figures for run directories.

The drawing functions below only need numpy, matplotlib and the CSV files, so
``emit_plot_script`` can copy their source verbatim into a standalone script;
``render_run_figures`` calls the very same functions in-process.
"""

from __future__ import annotations

import inspect
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SCRIPT_NAME = "plot_run.py"


def load_columns(path):
    """Read a CSV with a header row into {column: float array}."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    data = np.atleast_1d(data)
    return {name: np.asarray(data[name], dtype=float) for name in data.dtype.names}


def plot_diagnostics(csv_path, out_path):
    """Time series panel: area, b, q against its Gronwall reference, sup|grad v|."""
    cols = load_columns(csv_path)
    t = cols["t"]
    fig, axs = plt.subplots(2, 2, figsize=(9, 6.5), sharex=True, tight_layout=True)
    axs[0][0].plot(t, cols["area"], color="k")
    axs[0][0].set_ylabel("area |D_t|")
    axs[0][1].plot(t, cols["b"], color="tab:blue")
    axs[0][1].set_ylabel("bilipschitz b(t)")
    axs[1][0].semilogy(t, cols["q"], color="tab:red", label="q(t)")
    axs[1][0].semilogy(t, cols["gronwall_rhs"], color="0.5", ls="--", label="q(0) exp(I(t))")
    axs[1][0].set_ylabel("q(t)")
    axs[1][0].legend(frameon=False)
    axs[1][1].plot(t, cols["sup_grad_v"], color="tab:green", label="sup |grad v|")
    axs[1][1].plot(t, cols["max_speed"], color="tab:orange", label="max |v|")
    axs[1][1].legend(frameon=False)
    for ax in axs[1]:
        ax.set_xlabel("t")
    for ax in (axs[0][0], axs[0][1], axs[1][1]):
        ax.ticklabel_format(axis="y", useOffset=False)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_snapshots(csv_paths, out_path, max_curves=8):
    """Overlay of marker snapshots (closed polygons), earliest lightest."""
    paths = sorted(csv_paths)
    if len(paths) > max_curves:
        pick = np.unique(np.linspace(0, len(paths) - 1, max_curves).round().astype(int))
        paths = [paths[i] for i in pick]
    fig, ax = plt.subplots(figsize=(6, 6), tight_layout=True)
    shades = np.linspace(0.25, 1.0, max(len(paths), 1))
    for shade, path in zip(shades, paths):
        cols = load_columns(path)
        x = np.append(cols["x"], cols["x"][0])
        y = np.append(cols["y"], cols["y"][0])
        ax.plot(x, y, color=plt.cm.viridis(shade), lw=1.2, label=Path(path).stem)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if paths:
        ax.legend(fontsize=7, frameon=False, loc="upper right")
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_sweep(csv_path, out_path):
    """Truncated integral and its running sup against epsilon."""
    cols = load_columns(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4), tight_layout=True)
    ax.semilogx(cols["epsilon"], cols["value"], "o-", ms=3, label="truncated integral")
    ax.semilogx(cols["epsilon"], cols["running_sup"], color="k", ls="--", label="running sup |.|")
    ax.invert_xaxis()
    ax.set_xlabel("epsilon")
    ax.legend(frameon=False)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_directory(run_dir):
    """Render every figure whose inputs exist in ``run_dir``; returns the paths."""
    run_dir = Path(run_dir)
    out = []
    if (run_dir / "diagnostics.csv").exists():
        plot_diagnostics(run_dir / "diagnostics.csv", run_dir / "diagnostics.png")
        out.append(run_dir / "diagnostics.png")
    snaps = sorted((run_dir / "snapshots").glob("*.csv")) if (run_dir / "snapshots").is_dir() else []
    if snaps:
        plot_snapshots(snaps, run_dir / "snapshots.png")
        out.append(run_dir / "snapshots.png")
    if (run_dir / "tstar.csv").exists():
        plot_sweep(run_dir / "tstar.csv", run_dir / "tstar.png")
        out.append(run_dir / "tstar.png")
    return out


_HEADER = '''"""Standalone figure script for a run directory.

Usage: python {name} [RUN_DIR]   (defaults to the directory holding this file)
Needs numpy and matplotlib only.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

'''

_FOOTER = '''

if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent
    for path in render_directory(target):
        print(path)
'''


def plot_script_source():
    funcs = (load_columns, plot_diagnostics, plot_snapshots, plot_sweep, render_directory)
    body = "\n\n".join(inspect.getsource(f) for f in funcs)
    return _HEADER.format(name=SCRIPT_NAME) + "\n" + body + _FOOTER


def emit_plot_script(run_dir):
    """Write the standalone script into ``run_dir`` and return its path."""
    path = Path(run_dir) / SCRIPT_NAME
    path.write_text(plot_script_source())
    return path


def render_run_figures(run_dir):
    return render_directory(run_dir)
