"""Optional static plots (matplotlib is imported lazily)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def plot_gap_curve(config, report, out_dir=None) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    eps = [entry["eps"] for entry in report.per_eps]
    gaps = [entry["gap"] for entry in report.per_eps]
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax.loglog(eps, np.maximum(gaps, 1e-16), "o-")
    ax.set_xlabel("thickness parameter")
    ax.set_ylabel("|slab minimum - planar minimum|")
    ax.invert_xaxis()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = out / "gap_curve.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_phase_field(config, which="2d", out_dir=None) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .io import read_field

    out = Path(out_dir if out_dir is not None else config.out_dir)
    name = "phase_2d.txt" if which == "2d" else "phase_3d.txt"
    _, dims, values = read_field(out / name)
    nx, ny = dims[0], dims[1]
    grid = np.asarray(values).reshape(-1, ny, nx)[0] if which == "3d" else np.asarray(values).reshape(ny, nx)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(grid, origin="lower", cmap="Greys", vmin=0, vmax=1, interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    path = out / f"phase_{which}.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
