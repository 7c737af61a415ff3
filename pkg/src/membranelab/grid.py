"""Uniform lattices, masked ball domains, scalar fields and circle traces.

The domain model is deliberately simple: a square lattice on [-R, R]^d
(d = 1 or 2) with an even number of intervals per axis, so that the origin
and the corners are nodes.  Ball domains are boolean masks {|x| < R} on the
lattice; Dirichlet data lives on the first layer of nodes outside the mask,
which keeps the 5-point Laplacian stencil uniform everywhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Lattice",
    "ScalarField",
    "make_lattice",
    "interpolate",
    "circle_trace",
]

_EVEN_TOL = 1e-9


class GridError(ValueError):
    """Invalid lattice geometry or out-of-domain query."""


@dataclass(frozen=True)
class Lattice:
    """Uniform node set on the cube [-R, R]^d.

    ``axis`` holds the 1D node coordinates, built symmetrically around 0 so
    that the origin and +-R are reproduced exactly.
    """

    dim: int
    half_width: float
    spacing: float
    axis: np.ndarray = field(repr=False)

    @property
    def nodes_per_axis(self) -> int:
        return self.axis.size

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinate arrays, one per axis, in ``ij`` layout."""
        if self.dim == 1:
            return (self.axis,)
        return tuple(np.meshgrid(self.axis, self.axis, indexing="ij"))

    def points(self) -> np.ndarray:
        """All node positions as an (n_nodes, dim) array in row-major order."""
        cs = self.coords()
        return np.stack([c.ravel() for c in cs], axis=-1)

    def ball_mask(self, radius: float | None = None, center=None) -> np.ndarray:
        """Boolean mask of nodes with |x - center| < radius (default: |x| < R)."""
        r = self.half_width if radius is None else float(radius)
        c = np.zeros(self.dim) if center is None else np.asarray(center, float)
        cs = self.coords()
        d2 = sum((cs[k] - c[k]) ** 2 for k in range(self.dim))
        return d2 < r * r

    def in_hull(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        return np.all(np.abs(pts) <= self.half_width + 1e-12, axis=-1)


def make_lattice(dim: int, half_width: float, spacing: float) -> Lattice:
    """Build the lattice on [-half_width, half_width]^dim.

    Requires 2*half_width/spacing to be an even integer so that the origin
    is a node.
    """
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    if spacing <= 0:
        raise GridError(f"spacing must be positive, got {spacing}")
    if half_width <= 0:
        raise GridError(f"half_width must be positive, got {half_width}")
    ratio = 2.0 * half_width / spacing
    m = int(round(ratio))
    if abs(ratio - m) > _EVEN_TOL * max(1.0, abs(ratio)) or m % 2 != 0 or m == 0:
        raise GridError(
            f"2*half_width/spacing = {ratio} must be an even integer"
        )
    half = m // 2
    axis = np.arange(-half, half + 1, dtype=float) * spacing
    # pin the endpoints so +-R are exact even when spacing is not a dyadic
    axis[0] = -half_width
    axis[-1] = half_width
    axis[half] = 0.0
    axis.setflags(write=False)
    return Lattice(dim=dim, half_width=float(half_width), spacing=float(spacing), axis=axis)


@dataclass
class ScalarField:
    """Node values plus an interior mask on a shared lattice."""

    lattice: Lattice
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, float)
        self.mask = np.asarray(self.mask, bool)
        if self.values.shape != self.lattice.shape:
            raise GridError(
                f"values shape {self.values.shape} != lattice shape {self.lattice.shape}"
            )
        if self.mask.shape != self.values.shape:
            raise GridError("mask shape mismatch")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise GridError("non-finite values on masked nodes")

    @classmethod
    def from_function(cls, lattice: Lattice, fn, mask: np.ndarray | None = None) -> "ScalarField":
        """Sample ``fn`` on every node.  ``fn`` receives an (n, dim) array."""
        vals = np.asarray(fn(lattice.points()), float).reshape(lattice.shape)
        m = lattice.ball_mask() if mask is None else mask
        return cls(lattice, vals, m)

    def copy(self) -> "ScalarField":
        return ScalarField(self.lattice, self.values.copy(), self.mask.copy())

    def dump_csv(self, path) -> None:
        """Write masked nodes as ``x1[,x2],v`` rows in row-major node order."""
        pts = self.lattice.points()
        flat_mask = self.mask.ravel()
        flat_vals = self.values.ravel()
        header = ["x1", "v"] if self.lattice.dim == 1 else ["x1", "x2", "v"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for p, keep, v in zip(pts, flat_mask, flat_vals):
                if keep:
                    w.writerow([_fmt(c) for c in p] + [_fmt(v)])


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def interpolate(fld: ScalarField, point) -> float | np.ndarray:
    """Multilinear interpolation of node values at one point or many.

    Exact on functions that are multilinear per cell; raises if any query
    leaves the lattice hull.
    """
    lat = fld.lattice
    pts = np.asarray(point, float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != lat.dim:
        raise GridError(f"point dimension {pts.shape[1]} != lattice dim {lat.dim}")
    if not np.all(lat.in_hull(pts)):
        raise GridError("interpolation point outside lattice hull")
    h, R = lat.spacing, lat.half_width
    n = lat.nodes_per_axis
    # cell index and local coordinate per axis
    idx = np.empty(pts.shape, dtype=int)
    t = np.empty(pts.shape)
    for k in range(lat.dim):
        s = (pts[:, k] + R) / h
        i = np.clip(np.floor(s).astype(int), 0, n - 2)
        idx[:, k] = i
        t[:, k] = np.clip(s - i, 0.0, 1.0)
    v = fld.values
    if lat.dim == 1:
        i = idx[:, 0]
        out = v[i] * (1 - t[:, 0]) + v[i + 1] * t[:, 0]
    else:
        i, j = idx[:, 0], idx[:, 1]
        tx, ty = t[:, 0], t[:, 1]
        out = (
            v[i, j] * (1 - tx) * (1 - ty)
            + v[i + 1, j] * tx * (1 - ty)
            + v[i, j + 1] * (1 - tx) * ty
            + v[i + 1, j + 1] * tx * ty
        )
    return float(out[0]) if single else out


def circle_trace(fld: ScalarField, center, radius: float, samples: int) -> np.ndarray:
    """Field values on the sphere of ``radius`` around ``center``.

    d = 2: ``samples`` equispaced angles starting at angle 0;
    d = 1: the two endpoints center -+ radius (``samples`` is ignored).
    """
    lat = fld.lattice
    c = np.asarray(center, float).reshape(lat.dim)
    if radius <= 0:
        raise GridError("radius must be positive")
    if lat.dim == 1:
        pts = np.array([[c[0] - radius], [c[0] + radius]])
    else:
        if samples < 2:
            raise GridError("need at least 2 angular samples")
        theta = 2.0 * np.pi * np.arange(samples) / samples
        pts = c[None, :] + radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if not np.all(lat.in_hull(pts)):
        raise GridError("circle exits the lattice hull")
    return np.asarray(interpolate(fld, pts), float)
