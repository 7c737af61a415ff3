"""Discrete minimization of the membrane energy under the ordering constraint.

The discrete energy on a masked lattice is

    E(u) = sum_k [ h^(d-2)/2 * sum_edges (u_k(p) - u_k(q))^2
                   + h^d * sum_nodes f_k u_k ]

minimized over node values at masked nodes subject to
u_1 >= u_2 >= ... >= u_N, with fixed values on the first layer outside the
mask.  One red-black sweep updates each node by moving every membrane
toward its unconstrained 5-point target (over-relaxed by omega < 2) and
then projecting the N values jointly onto the non-increasing cone.  The N
one-node quadratics share the identical Laplacian diagonal, so the exact
joint constrained minimizer is the equal-weight isotonic projection; with
over-relaxation the projected point still decreases the energy (the
projection onto a convex set containing the current iterate shortens the
step by a factor 2/omega - 1 > 0 in the diagonal metric).

The single obstacle problem uses the same machinery with the projection
replaced by a clamp at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Lattice, ScalarField
from .profiles import ProfileSpec, eval_profile

__all__ = [
    "MembraneProblem",
    "MembraneStack",
    "SolveReport",
    "pava_decreasing",
    "solve_membranes",
    "solve_obstacle",
    "residual_report",
    "pair_membership",
    "stack_from_profile",
    "stack_from_quadratics",
]

ORDERING_TOL = 1e-12
DEFAULT_TOLERANCE = 1e-10


class SolverError(ValueError):
    pass


def pava_decreasing(values, weights=None) -> np.ndarray:
    """Weighted least-squares projection onto non-increasing sequences.

    Pool-adjacent-violators with block merging; idempotent.
    """
    y = np.asarray(values, float).reshape(-1)
    if weights is None:
        w = np.ones_like(y)
    else:
        w = np.asarray(weights, float).reshape(-1)
    if w.shape != y.shape:
        raise SolverError("values and weights must have equal length")
    if y.size == 0:
        raise SolverError("empty input")
    if np.any(w <= 0):
        raise SolverError("weights must be positive")
    # blocks as (mean, weight, count), merged while an ascending pair remains
    means: list[float] = []
    wsum: list[float] = []
    count: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        wsum.append(float(wi))
        count.append(1)
        while len(means) > 1 and means[-2] < means[-1]:
            m2, w2, c2 = means.pop(), wsum.pop(), count.pop()
            m1, w1, c1 = means.pop(), wsum.pop(), count.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            wsum.append(wt)
            count.append(c1 + c2)
    out = np.empty_like(y)
    pos = 0
    for m, c in zip(means, count):
        out[pos : pos + c] = m
        pos += c
    return out


def _antitonic_columns(Z: np.ndarray) -> np.ndarray:
    """Equal-weight non-increasing projection of each column of Z (shape (N, m)).

    Uses the minimax form v_k = min_{i<=k} max_{j>=k} mean(Z[i..j]); N is the
    membrane count, so the O(N^2) table is cheap and fully vectorized over
    the node axis.
    """
    N = Z.shape[0]
    if N == 1:
        return Z.copy()
    csum = np.concatenate([np.zeros((1,) + Z.shape[1:]), np.cumsum(Z, axis=0)], axis=0)
    avg = np.full((N, N) + Z.shape[1:], -np.inf)
    for i in range(N):
        for j in range(i, N):
            avg[i, j] = (csum[j + 1] - csum[i]) / (j + 1 - i)
    # m[i, k] = max_{j >= k} avg[i, j]
    m = np.flip(np.maximum.accumulate(np.flip(avg, axis=1), axis=1), axis=1)
    mm = np.minimum.accumulate(m, axis=0)  # over i <= k
    out = np.empty_like(Z)
    for k in range(N):
        out[k] = mm[k, k]
    # squash rounding dust so the ordering invariant holds exactly
    return np.minimum.accumulate(out, axis=0)


@dataclass
class MembraneStack:
    """N ordered scalar fields on a shared lattice, plus their forces."""

    fields: list
    forces: np.ndarray

    def __post_init__(self):
        self.forces = np.asarray(self.forces, float).reshape(-1)
        if len(self.fields) != self.forces.size:
            raise SolverError("one force per membrane required")
        lat = self.fields[0].lattice
        for f in self.fields:
            if f.lattice is not lat and f.lattice != lat:
                raise SolverError("fields must share one lattice")
        self.check_ordering()

    @property
    def N(self) -> int:
        return len(self.fields)

    @property
    def lattice(self) -> Lattice:
        return self.fields[0].lattice

    @property
    def mask(self) -> np.ndarray:
        return self.fields[0].mask

    def values(self) -> np.ndarray:
        """Stacked value array of shape (N,) + lattice.shape."""
        return np.stack([f.values for f in self.fields], axis=0)

    def check_ordering(self, tol: float = ORDERING_TOL) -> None:
        v = self.values()
        m = self.mask
        gaps = v[:-1] - v[1:]
        worst = gaps[:, m].min() if m.any() else 0.0
        if worst < -tol:
            raise SolverError(f"ordering violated by {-worst:.3e} on masked nodes")

    def pair_view(self):
        """(u, w) = (u_1, -u_3) for the three-membrane system with forces (1, 0, -1)."""
        if self.N != 3 or not np.allclose(self.forces, [1.0, 0.0, -1.0]):
            raise SolverError("pair view requires N = 3 with forces (1, 0, -1)")
        u = self.fields[0].copy()
        w = ScalarField(self.lattice, -self.fields[2].values, self.mask.copy())
        return u, w


@dataclass
class SolveReport:
    sweeps: int
    final_update: float
    final_energy: float
    energy_history: np.ndarray
    converged: bool


@dataclass
class MembraneProblem:
    """Problem data for the constrained N-membrane solve.

    ``boundary_values`` are full lattice arrays, one per membrane; values at
    non-masked nodes act as Dirichlet data (only the first layer outside the
    mask is ever read by the stencil) and the masked part seeds the initial
    guess.
    """

    forces: np.ndarray
    lattice: Lattice
    boundary_values: list
    mask: np.ndarray | None = None
    tolerance: float = DEFAULT_TOLERANCE
    max_sweeps: int | None = None
    relaxation: float | None = None  # None = auto omega from grid size

    def __post_init__(self):
        self.forces = np.asarray(self.forces, float).reshape(-1)
        if self.forces.size < 2:
            raise SolverError("need N >= 2 membranes")
        if np.any(np.diff(self.forces) >= 0):
            raise SolverError("forces must be strictly decreasing")
        if self.mask is None:
            self.mask = self.lattice.ball_mask()
        self.boundary_values = [
            np.asarray(b, float).reshape(self.lattice.shape) for b in self.boundary_values
        ]
        if len(self.boundary_values) != self.forces.size:
            raise SolverError("one boundary array per membrane required")
        if self.tolerance <= 0:
            raise SolverError("tolerance must be positive")
        if self.max_sweeps is None:
            self.max_sweeps = 200 * self.lattice.nodes_per_axis
        bd = ~self.mask
        b = np.stack(self.boundary_values, axis=0)
        if bd.any() and (b[:-1] - b[1:])[:, bd].min() < -ORDERING_TOL:
            raise SolverError("boundary values violate the membrane ordering")

    @property
    def N(self) -> int:
        return self.forces.size


def _auto_omega(lattice: Lattice) -> float:
    # optimal SOR factor for the 5-point Laplacian on the enclosing square;
    # under-relaxing even a little below the optimum costs an order of
    # magnitude in sweeps on fine grids, so cap close to 2
    m = lattice.nodes_per_axis - 1
    return min(2.0 / (1.0 + np.sin(np.pi / m)), 1.992)


def _neighbor_sum(v: np.ndarray, out: np.ndarray) -> None:
    """5-point neighbor sum on the interior slab of the array (in place)."""
    if v.ndim == 1:
        out[1:-1] = v[:-2] + v[2:]
    else:
        out[1:-1, 1:-1] = (
            v[:-2, 1:-1] + v[2:, 1:-1] + v[1:-1, :-2] + v[1:-1, 2:]
        )


def _discrete_energy(vals: np.ndarray, mask: np.ndarray, forces: np.ndarray, h: float, dim: int,
                     touch=None) -> float:
    """Energy over edges touching at least one masked node plus force terms."""
    e = 0.0
    hd = h**dim
    he = h ** (dim - 2)
    if touch is None:
        touch = _edge_touch_masks(mask)
    maskf = mask.astype(float)
    for k in range(vals.shape[0]):
        v = vals[k]
        if dim == 1:
            d = np.diff(v)
            e += 0.5 * he * float((d * d * touch[0]).sum())
        else:
            dx = v[1:, :] - v[:-1, :]
            dy = v[:, 1:] - v[:, :-1]
            e += 0.5 * he * (float((dx * dx * touch[0]).sum()) + float((dy * dy * touch[1]).sum()))
        e += hd * float(forces[k]) * float((v * maskf).sum())
    return e


def _edge_touch_masks(mask: np.ndarray):
    if mask.ndim == 1:
        return ((mask[:-1] | mask[1:]).astype(float),)
    return (
        (mask[1:, :] | mask[:-1, :]).astype(float),
        (mask[:, 1:] | mask[:, :-1]).astype(float),
    )


def _checkerboard(lattice: Lattice) -> np.ndarray:
    n = lattice.nodes_per_axis
    if lattice.dim == 1:
        return np.arange(n) % 2 == 0
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return (i + j) % 2 == 0


def _psor(vals, mask, forces, lattice, tolerance, max_sweeps, omega, project):
    """Red-black projected SOR on the stacked value array ``vals`` (in place).

    ``project`` maps an (N, m) column block to its projection onto the
    feasible cone.  Returns (sweeps, final_update, energy_history).
    """
    h = lattice.spacing
    dim = lattice.dim
    twod = 2.0 * dim
    parity = _checkerboard(lattice)
    colors = [mask & parity, mask & ~parity]
    idx_colors = [np.nonzero(c.ravel()) for c in colors]
    nb = np.zeros_like(vals[0])
    source = (h * h) * forces  # h^2 f_k enters each nodewise target
    touch = _edge_touch_masks(mask)
    energies = [_discrete_energy(vals, mask, forces, h, dim, touch)]
    sweeps = 0
    update = np.inf
    flat = vals.reshape(vals.shape[0], -1)
    while sweeps < max_sweeps and update > tolerance:
        update = 0.0
        for color, idx in zip(colors, idx_colors):
            if not color.any():
                continue
            cols = []
            for k in range(vals.shape[0]):
                _neighbor_sum(vals[k], nb)
                cols.append((nb[color] - source[k]) / twod)
            target = np.stack(cols, axis=0)
            old = flat[:, idx[0]]
            z = old + omega * (target - old)
            new = project(z)
            step = float(np.abs(new - old).max()) if new.size else 0.0
            update = max(update, step)
            flat[:, idx[0]] = new
        energies.append(_discrete_energy(vals, mask, forces, h, dim, touch))
        sweeps += 1
    return sweeps, update, np.asarray(energies)


def solve_membranes(problem: MembraneProblem):
    """Projected red-black SOR for the ordered membrane stack.

    Returns (MembraneStack, SolveReport); a non-converged run is reported
    through ``SolveReport.converged`` with the partial iterate returned.
    """
    lat = problem.lattice
    mask = problem.mask
    omega = problem.relaxation if problem.relaxation is not None else _auto_omega(lat)
    if not 0.0 < omega < 2.0:
        raise SolverError("relaxation must lie in (0, 2)")
    vals = np.stack(problem.boundary_values, axis=0).copy()
    # feasible start: boundary-interpolant values projected nodewise
    m = mask.ravel()
    flat = vals.reshape(problem.N, -1)
    flat[:, m] = _antitonic_columns(flat[:, m])
    sweeps, update, energies = _psor(
        vals, mask, problem.forces, lat, problem.tolerance, problem.max_sweeps,
        omega, _antitonic_columns,
    )
    fields = [ScalarField(lat, vals[k], mask.copy()) for k in range(problem.N)]
    stack = MembraneStack(fields, problem.forces)
    report = SolveReport(
        sweeps=sweeps,
        final_update=update,
        final_energy=float(energies[-1]),
        energy_history=energies,
        converged=bool(update <= problem.tolerance),
    )
    return stack, report


def solve_obstacle(boundary_values, lattice: Lattice, tolerance: float = DEFAULT_TOLERANCE,
                   max_sweeps: int | None = None, mask: np.ndarray | None = None,
                   relaxation: float | None = None):
    """Projected SOR for the single obstacle problem (clamp at zero).

    The solved field satisfies u >= 0 with the unit source active on
    {u > 0}.  Returns (ScalarField, SolveReport).
    """
    if mask is None:
        mask = lattice.ball_mask()
    b = np.asarray(boundary_values, float).reshape(lattice.shape)
    if (~mask).any() and b[~mask].min() < 0.0:
        raise SolverError("obstacle boundary values must be non-negative")
    if max_sweeps is None:
        max_sweeps = 200 * lattice.nodes_per_axis
    omega = relaxation if relaxation is not None else _auto_omega(lattice)
    vals = b[None].copy()
    flat = vals.reshape(1, -1)
    flat[:, mask.ravel()] = np.maximum(flat[:, mask.ravel()], 0.0)
    sweeps, update, energies = _psor(
        vals, mask, np.array([1.0]), lattice, tolerance, max_sweeps,
        omega, lambda z: np.maximum(z, 0.0),
    )
    fld = ScalarField(lattice, vals[0], mask.copy())
    report = SolveReport(sweeps, update, float(energies[-1]), energies,
                         bool(update <= tolerance))
    return fld, report


# ---------------------------------------------------------------------------
# diagnostics


def _laplacian(v: np.ndarray, h: float) -> np.ndarray:
    """5-point Laplacian on the interior slab; NaN on the outer ring."""
    out = np.full_like(v, np.nan)
    if v.ndim == 1:
        out[1:-1] = (v[:-2] + v[2:] - 2.0 * v[1:-1]) / (h * h)
    else:
        out[1:-1, 1:-1] = (
            v[:-2, 1:-1] + v[2:, 1:-1] + v[1:-1, :-2] + v[1:-1, 2:]
            - 4.0 * v[1:-1, 1:-1]
        ) / (h * h)
    return out


def _near_indicator_change(ind: np.ndarray, cells: int) -> np.ndarray:
    """Nodes within ``cells`` (Chebyshev) of a change in the boolean array."""
    change = np.zeros_like(ind)
    if ind.ndim == 1:
        diff = ind[:-1] != ind[1:]
        change[:-1] |= diff
        change[1:] |= diff
    else:
        dx = ind[:-1, :] != ind[1:, :]
        change[:-1, :] |= dx
        change[1:, :] |= dx
        dy = ind[:, :-1] != ind[:, 1:]
        change[:, :-1] |= dy
        change[:, 1:] |= dy
    out = change.copy()
    for _ in range(max(cells - 1, 0)):
        out = _dilate(out)
    return out


def _dilate(m: np.ndarray) -> np.ndarray:
    out = m.copy()
    if m.ndim == 1:
        out[:-1] |= m[1:]
        out[1:] |= m[:-1]
    else:
        out[:-1, :] |= m[1:, :]
        out[1:, :] |= m[:-1, :]
        out[:, :-1] |= m[:, 1:]
        out[:, 1:] |= m[:, :-1]
    return out


@dataclass
class MembershipReport:
    """Discrete sub/supersolution test for an obstacle-system pair (u, w)."""

    is_subsolution: bool
    is_supersolution: bool
    cone_ok: bool
    sub_margin: float
    super_margin: float
    cone_margin: float


def pair_membership(u: ScalarField, w: ScalarField, contact_tolerance: float | None = None,
                    slack: float | None = None, supersolution_scale: float = 1.0) -> MembershipReport:
    """Test (u, w) against the coupled obstacle-system classes.

    Subsolution: Delta u >= 1 on {u > w/2} and Delta w >= 1 on {w > u/2}
    (zero elsewhere required trivially since Delta of an admissible pair is
    nonnegative there); supersolution: Delta <= 1 everywhere.  The Laplacian
    is tested only at masked nodes at distance > 2h from the indicator
    changes, where the discrete operator resolves the piecewise right-hand
    side.  ``supersolution_scale`` multiplies the pair before the
    supersolution test (used for the (1 - C|alpha-beta|^2) factor).
    """
    lat = u.lattice
    h = lat.spacing
    if contact_tolerance is None:
        contact_tolerance = h * h
    if slack is None:
        slack = 10.0 * h * h
    mask = u.mask & w.mask
    uv, wv = u.values, w.values
    cone_margin = float(
        min(
            uv[mask].min() if mask.any() else 0.0,
            wv[mask].min() if mask.any() else 0.0,
            (uv - 0.5 * wv)[mask].min() if mask.any() else 0.0,
            (wv - 0.5 * uv)[mask].min() if mask.any() else 0.0,
        )
    )
    cone_ok = cone_margin >= -slack
    ind_u = (uv - 0.5 * wv) > contact_tolerance
    ind_w = (wv - 0.5 * uv) > contact_tolerance
    interior = mask & ~_near_indicator_change(ind_u, 2) & ~_near_indicator_change(ind_w, 2)
    lu, lw = _laplacian(uv, h), _laplacian(wv, h)
    ok = interior & np.isfinite(lu) & np.isfinite(lw)
    sub_terms = []
    if (ok & ind_u).any():
        sub_terms.append((lu - 1.0)[ok & ind_u].min())
    if (ok & ind_w).any():
        sub_terms.append((lw - 1.0)[ok & ind_w].min())
    if (ok & ~ind_u).any():
        sub_terms.append(lu[ok & ~ind_u].min())
    if (ok & ~ind_w).any():
        sub_terms.append(lw[ok & ~ind_w].min())
    sub_margin = float(min(sub_terms)) if sub_terms else 0.0
    s = supersolution_scale
    super_margin = float((1.0 - s * np.maximum(lu[ok], lw[ok])).min()) if ok.any() else 0.0
    return MembershipReport(
        is_subsolution=bool(cone_ok and sub_margin >= -slack),
        is_supersolution=bool(cone_ok and super_margin >= -slack),
        cone_ok=cone_ok,
        sub_margin=sub_margin,
        super_margin=super_margin,
        cone_margin=cone_margin,
    )


@dataclass
class ResidualReport:
    max_interior_residual: float
    per_membrane_residual: np.ndarray
    contact_masks: list
    band: np.ndarray
    pair: MembershipReport | None


def residual_report(stack: MembraneStack, contact_tolerance: float | None = None) -> ResidualReport:
    """Residual of the discrete Euler-Lagrange system away from free boundaries.

    The right-hand side at a node is, for each membrane, the mean force over
    the contact block containing it (maximal run of consecutive membranes
    equal within ``contact_tolerance``); residuals are reported over masked
    nodes at distance > 2h from any detected free boundary.  For the
    three-membrane system with forces (1, 0, -1) the pair view (u, w) is
    additionally tested for sub/supersolution membership.
    """
    lat = stack.lattice
    h = lat.spacing
    if contact_tolerance is None:
        contact_tolerance = h * h
    stack.check_ordering(tol=1e-9)
    vals = stack.values()
    N = stack.N
    mask = stack.mask
    contact = [
        (vals[k] - vals[k + 1]) <= contact_tolerance for k in range(N - 1)
    ]
    # mean force over each node's contact block
    rhs = np.empty_like(vals)
    fsum = np.zeros(vals.shape[1:])
    low = np.zeros(vals.shape[1:], dtype=int)
    # block start pointer per membrane, built by a forward scan
    starts = [np.zeros(vals.shape[1:], dtype=int)]
    for k in range(1, N):
        prev = starts[k - 1]
        starts.append(np.where(contact[k - 1], prev, k))
    ends = [None] * N
    ends[N - 1] = np.full(vals.shape[1:], N - 1, dtype=int)
    for k in range(N - 2, -1, -1):
        ends[k] = np.where(contact[k], ends[k + 1], k)
    csumf = np.concatenate([[0.0], np.cumsum(stack.forces)])
    for k in range(N):
        s, e = starts[k], ends[k]
        rhs[k] = (csumf[e + 1] - csumf[s]) / (e - s + 1)
    near = np.zeros_like(mask)
    for c in contact:
        near |= _near_indicator_change(c, 2)
    good = mask & ~near
    per = np.zeros(N)
    worst = 0.0
    for k in range(N):
        r = _laplacian(vals[k], h) - rhs[k]
        sel = good & np.isfinite(r)
        per[k] = float(np.abs(r[sel]).max()) if sel.any() else 0.0
        worst = max(worst, per[k])
    pair = None
    if N == 3 and np.allclose(stack.forces, [1.0, 0.0, -1.0]):
        u, w = stack.pair_view()
        pair = pair_membership(u, w, contact_tolerance)
    return ResidualReport(
        max_interior_residual=worst,
        per_membrane_residual=per,
        contact_masks=contact,
        band=near,
        pair=pair,
    )


# ---------------------------------------------------------------------------
# construction helpers


def stack_from_profile(spec: ProfileSpec, lattice: Lattice, mask: np.ndarray | None = None) -> MembraneStack:
    """Sample a triple-valued profile as a MembraneStack with forces (1, 0, -1)."""
    if not spec.is_triple:
        raise SolverError(f"profile kind {spec.kind!r} is not a membrane triple")
    if mask is None:
        mask = lattice.ball_mask()
    pts = lattice.points()
    u1, u2, u3 = eval_profile(spec, pts)
    fields = [
        ScalarField(lattice, np.asarray(u, float).reshape(lattice.shape), mask.copy())
        for u in (u1, u2, u3)
    ]
    return MembraneStack(fields, np.array([1.0, 0.0, -1.0]))


def stack_from_quadratics(mats, forces, lattice: Lattice, mask: np.ndarray | None = None,
                          center=None) -> MembraneStack:
    """Stack of pure quadratics v_k = x.A_k x / 2 (ordered), about ``center``."""
    if mask is None:
        mask = lattice.ball_mask()
    c = np.zeros(lattice.dim) if center is None else np.asarray(center, float)
    pts = lattice.points() - c
    fields = []
    for m in mats:
        v = 0.5 * m.quad(pts)
        fields.append(ScalarField(lattice, v.reshape(lattice.shape), mask.copy()))
    return MembraneStack(fields, np.asarray(forces, float))
