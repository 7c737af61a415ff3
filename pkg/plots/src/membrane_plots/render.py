"""Figure renderers for the four report kinds.

Rendering never alters or reinterprets values; styling is fixed so a figure
regenerated from the same CSV is pixel-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("profiles-1d", "contact-map", "width-decay", "energy-series")

DPI = 110
FIGSIZE = (6.0, 4.0)
PNG_META = {"Software": "membrane-plots"}


class JobError(ValueError):
    """Missing input, bad header, or unknown figure kind."""


@dataclass
class FigureJob:
    kind: str
    inputs: list
    output: str
    overlay: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise JobError(f"unknown figure kind {self.kind!r} (use one of {KINDS})")
        if isinstance(self.inputs, (str, Path)):
            self.inputs = [self.inputs]
        if not self.inputs:
            raise JobError("job needs at least one input CSV")


def _read_csv(path, expected_headers):
    p = Path(path)
    if not p.exists():
        raise JobError(f"missing input file: {p}")
    with open(p, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise JobError(f"empty input file: {p}")
        if header not in expected_headers:
            raise JobError(
                f"header mismatch in {p}: got {','.join(header)!r}, "
                f"expected one of {[','.join(h) for h in expected_headers]}"
            )
        rows = list(reader)
    return header, rows


def _floats(rows, cols):
    out = np.empty((len(rows), len(cols)))
    for i, row in enumerate(rows):
        for j, c in enumerate(cols):
            out[i, j] = float(row[c])
    return out


def _new_axes():
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    return fig, ax


def _save(fig, output):
    out = Path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=DPI, metadata=PNG_META)
    plt.close(fig)
    return out


def render_profiles_1d(job: FigureJob):
    """Curve panel of 1D field dumps (one ``x1,v`` CSV per membrane)."""
    fig, ax = _new_axes()
    styles = ["-", "--", "-."] + ["-"] * 8
    for k, path in enumerate(job.inputs):
        _, rows = _read_csv(path, [["x1", "v"]])
        data = _floats(rows, [0, 1])
        order = np.argsort(data[:, 0])
        ax.plot(data[order, 0], data[order, 1], styles[k], label=f"u{k + 1}")
    ax.set_xlabel("x1")
    ax.set_ylabel("height")
    ax.legend(loc="upper left")
    ax.grid(True, alpha=0.3)
    return _save(fig, job.output)


def render_contact_map(job: FigureJob):
    """Map of a 2D field dump, with an optional gamma-point overlay."""
    _, rows = _read_csv(job.inputs[0], [["x1", "x2", "v"]])
    data = _floats(rows, [0, 1, 2])
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    grid = np.full((xs.size, ys.size), np.nan)
    xi = np.searchsorted(xs, data[:, 0])
    yi = np.searchsorted(ys, data[:, 1])
    grid[xi, yi] = data[:, 2]
    fig, ax = _new_axes()
    mesh = ax.pcolormesh(xs, ys, grid.T, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="v")
    if job.overlay:
        _, orows = _read_csv(job.overlay, [["x1", "x2", "label"]])
        pts = _floats(orows, [0, 1])
        ax.plot(pts[:, 0], pts[:, 1], ".", color="crimson", markersize=2.0,
                linestyle="none")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    return _save(fig, job.output)


def render_width_decay(job: FigureJob):
    """Log-scaled width decay with the width * (-ln r) / r diagnostic."""
    _, rows = _read_csv(job.inputs[0],
                        [["r", "width", "width_clog", "width_over_r"]])
    data = _floats(rows, [0, 1, 2, 3])
    fig, ax = _new_axes()
    ax.loglog(data[:, 0], data[:, 1], "o-", label="width")
    ax.set_xlabel("r")
    ax.set_ylabel("width")
    ax.grid(True, which="both", alpha=0.3)
    ax2 = ax.twinx()
    ax2.semilogx(data[:, 0], data[:, 2], "s--", color="darkorange",
                 label="width (-ln r)/r")
    finite = data[np.isfinite(data[:, 2]), 2]
    if finite.size:
        band = (finite.min(), finite.max())
        ax2.axhspan(band[0], band[1], color="darkorange", alpha=0.12)
    ax2.set_ylabel("width (-ln r)/r")
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="upper left")
    return _save(fig, job.output)


def render_energy_series(job: FigureJob):
    """Weiss / Monneau values against the radius, one curve per kind."""
    fig, ax = _new_axes()
    for path in job.inputs:
        _, rows = _read_csv(path, [["r", "value", "kind"]])
        kinds = sorted({row[2] for row in rows})
        for kind in kinds:
            sel = [row for row in rows if row[2] == kind]
            data = _floats(sel, [0, 1])
            order = np.argsort(data[:, 0])
            ax.plot(data[order, 0], data[order, 1], "o-", label=kind)
    ax.set_xlabel("r")
    ax.set_ylabel("value")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best")
    return _save(fig, job.output)


_RENDERERS = {
    "profiles-1d": render_profiles_1d,
    "contact-map": render_contact_map,
    "width-decay": render_width_decay,
    "energy-series": render_energy_series,
}


def render_figures(jobs) -> list:
    """Render each job; returns the written image paths."""
    paths = []
    for job in jobs:
        paths.append(_RENDERERS[job.kind](job))
    return paths
