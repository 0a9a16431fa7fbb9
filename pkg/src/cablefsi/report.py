"""Figure rendering for run histories (file output only, no display)."""

import csv
import pathlib

import numpy as np


def read_history_csv(path):
    """Load a history CSV into a dict of float columns."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float) if body else np.zeros((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}


def render_history_figures(history_path, outdir=None):
    """Render force and tip-motion time histories to PNG files.

    Returns the list of written paths; an empty history produces no files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    history_path = pathlib.Path(history_path)
    outdir = pathlib.Path(outdir) if outdir is not None else history_path.parent
    cols = read_history_csv(history_path)
    if len(cols.get("time", ())) == 0:
        return []
    t = cols["time"]
    paths = []

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, cols["drag"], label="drag")
    ax.plot(t, cols["lift"], label="lift")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("force [N]")
    ax.legend(frameon=False)
    fig.tight_layout()
    p = outdir / "forces.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for c in "xyz":
        ax.plot(t, cols[f"tip_u{c}"], label=f"u_{c}")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("tip displacement [m]")
    ax.legend(frameon=False)
    fig.tight_layout()
    p = outdir / "tip_displacement.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    paths.append(p)

    return paths
