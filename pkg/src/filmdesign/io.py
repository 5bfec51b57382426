"""Plain-text field dumps and CSV emission.

Field dump format: one header line with the grid dimensions and component
count, then one line per entry in row-major order (x fastest, layers
slowest). Floats are written with repr precision so reruns are
byte-identical under fixed seeds.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import DomainError

FLOAT_FMT = "%.17g"


def format_float(x: float) -> str:
    return FLOAT_FMT % float(x)


def write_cell_field_2d(path, nx: int, ny: int, values: np.ndarray) -> None:
    values = np.asarray(values).reshape(nx * ny)
    lines = [f"cells {nx} {ny} 1"]
    lines += [format_float(v) for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def write_node_field_2d(path, nx: int, ny: int, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float).reshape((nx + 1) * (ny + 1), -1)
    lines = [f"nodes {nx} {ny} {values.shape[1]}"]
    lines += [" ".join(format_float(v) for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def write_cell_field_3d(path, nx: int, ny: int, layers: int, values: np.ndarray) -> None:
    values = np.asarray(values).reshape(nx * ny * layers)
    lines = [f"cells {nx} {ny} {layers} 1"]
    lines += [format_float(v) for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


def write_node_field_3d(path, nx: int, ny: int, layers: int, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float).reshape((nx + 1) * (ny + 1) * (layers + 1), -1)
    lines = [f"nodes {nx} {ny} {layers} {values.shape[1]}"]
    lines += [" ".join(format_float(v) for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path) -> tuple[str, tuple[int, ...], np.ndarray]:
    """Read any field dump; returns (kind, dims, values)."""
    text = Path(path).read_text().strip().splitlines()
    head = text[0].split()
    kind = head[0]
    if kind not in ("cells", "nodes"):
        raise DomainError(f"unknown field kind {kind!r}")
    dims = tuple(int(x) for x in head[1:-1])
    ncomp = int(head[-1])
    rows = [[float(v) for v in line.split()] for line in text[1:]]
    values = np.array(rows)
    if values.shape[1] != ncomp:
        raise DomainError("field body does not match its header")
    if ncomp == 1:
        values = values[:, 0]
    return kind, dims, values


def write_csv(path, header: list[str], rows) -> None:
    """CSV with deterministic float formatting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )
