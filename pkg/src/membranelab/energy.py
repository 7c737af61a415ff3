"""Weiss energy, its limiting constants per profile family, and the Monneau
functional.

For the three-membrane system with forces (1, 0, -1) the scale-normalized
energy of a stack about x0 is

    W(x0, r) = r^-(d+2) * int_{B_r} ( sum |grad u_k|^2 / 2 + u_1 - u_3 )
             - r^-(d+3) * int_{dB_r} sum u_k^2 .

It is non-decreasing in r for solutions and constant exactly on
2-homogeneous ones, which pins the limiting value per blow-up family; the
family constants satisfy W1/W0 = 3/2, W2/W0 = 7/4, W3/W0 = 2.

Quadrature: the volume term integrates the node-sampled integrand (centered
difference gradients) over rings by the radial midpoint rule, with the
angular trapezoid rule per ring; the boundary term samples the sphere with
max(64, 2 pi r / h) points so its error never dominates.  Both converge at
second order for the piecewise-quadratic profiles of interest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, circle_trace, interpolate, make_lattice
from .profiles import ProfileSpec, SymMatrix, Direction
from .solver import MembraneStack, stack_from_profile

__all__ = [
    "WeissSeries",
    "EnergyTable",
    "weiss_at",
    "weiss_series",
    "energy_table",
    "monneau_series",
    "random_hybrid_spec",
    "random_parabola_spec",
]

MONOTONE_SLACK_COEFF = 2.0  # slack = coeff * h for monotonicity verdicts


class EnergyError(ValueError):
    pass


@dataclass
class WeissSeries:
    center: np.ndarray
    radii: np.ndarray
    values: np.ndarray
    kind: str  # "Weiss" | "Monneau"
    slack: float

    def __post_init__(self):
        self.radii = np.asarray(self.radii, float)
        self.values = np.asarray(self.values, float)
        if self.radii.shape != self.values.shape:
            raise EnergyError("radii and values must have equal length")
        if np.any(np.diff(self.radii) <= 0):
            raise EnergyError("radii must be strictly increasing")

    @property
    def monotone(self) -> bool:
        """Non-decreasing within the slack tolerance."""
        return bool(np.all(np.diff(self.values) >= -self.slack))

    @property
    def constant_spread(self) -> float:
        return float(self.values.max() - self.values.min())

    def dump_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "value", "kind"])
            for r, v in zip(self.radii, self.values):
                w.writerow([format(r, ".12g"), format(v, ".12g"), self.kind])


@dataclass
class EnergyTable:
    dim: int
    W0: float
    W1: float
    W2: float
    W3: float
    spreads: dict = field(default_factory=dict)

    @property
    def ratios(self) -> tuple:
        return (1.0, self.W1 / self.W0, self.W2 / self.W0, self.W3 / self.W0)

    def references(self) -> np.ndarray:
        """Band centers for point classification (Reg, Sing1, Hybrid, Sing2)."""
        return np.array([self.W0, self.W1, self.W2, self.W3])


def _require_pair_forces(stack: MembraneStack) -> None:
    if stack.N != 3 or not np.allclose(stack.forces, [1.0, 0.0, -1.0]):
        raise EnergyError("Weiss energy implemented for N = 3, forces (1, 0, -1)")


def _gradient_sq_plus_gap(stack: MembraneStack) -> ScalarField:
    """Lattice field of sum |grad u_k|^2 / 2 + (u_1 - u_3).

    Centered differences in the interior with one-sided fallback on the
    outermost lattice ring.
    """
    lat = stack.lattice
    h = lat.spacing
    g = np.zeros(lat.shape)
    for f in stack.fields:
        v = f.values
        for ax in range(lat.dim):
            dv = np.empty_like(v)
            vs = np.swapaxes(dv, 0, ax)
            w = np.swapaxes(v, 0, ax)
            vs[1:-1] = (w[2:] - w[:-2]) / (2.0 * h)
            vs[0] = (w[1] - w[0]) / h
            vs[-1] = (w[-1] - w[-2]) / h
            g += 0.5 * dv * dv
    g += stack.fields[0].values - stack.fields[2].values
    return ScalarField(lat, g, np.ones(lat.shape, bool))


def _ring_mean(fld: ScalarField, center, rho: float, h: float) -> float:
    lat = fld.lattice
    if lat.dim == 1:
        vals = interpolate(fld, np.array([[center[0] - rho], [center[0] + rho]]))
        return float(np.sum(vals))  # counting measure on the two endpoints
    n = max(64, int(np.ceil(2.0 * np.pi * rho / h)))
    vals = circle_trace(fld, center, rho, n)
    return float(vals.mean() * 2.0 * np.pi * rho)


def _ball_integral(fld: ScalarField, center, radius: float) -> float:
    """Radial midpoint rule over rings of the interpolated integrand."""
    h = fld.lattice.spacing
    n_rho = max(4, int(np.ceil(radius / (0.5 * h))))
    drho = radius / n_rho
    total = 0.0
    for j in range(n_rho):
        rho = (j + 0.5) * drho
        total += _ring_mean(fld, center, rho, h)
    return total * drho


def _sphere_integral_sq(stack: MembraneStack, center, radius: float) -> float:
    lat = stack.lattice
    h = lat.spacing
    c = np.asarray(center, float).reshape(lat.dim)
    if lat.dim == 1:
        s = 0.0
        for f in stack.fields:
            vals = interpolate(f, np.array([[c[0] - radius], [c[0] + radius]]))
            s += float(np.sum(np.asarray(vals) ** 2))
        return s
    n = max(64, int(np.ceil(2.0 * np.pi * radius / h)))
    s = 0.0
    for f in stack.fields:
        vals = circle_trace(f, c, radius, n)
        s += float((vals**2).mean() * 2.0 * np.pi * radius)
    return s


def weiss_at(stack: MembraneStack, center, radius: float) -> float:
    """Weiss energy of the stack about ``center`` at scale ``radius``."""
    _require_pair_forces(stack)
    lat = stack.lattice
    c = np.asarray(center, float).reshape(lat.dim)
    if np.any(np.abs(c) + radius > lat.half_width + 1e-12):
        raise EnergyError("ball exits the lattice hull")
    integrand = _gradient_sq_plus_gap(stack)
    vol = _ball_integral(integrand, c, radius)
    bdry = _sphere_integral_sq(stack, c, radius)
    d = lat.dim
    return vol / radius ** (d + 2) - bdry / radius ** (d + 3)


def weiss_series(stack: MembraneStack, center, radii, slack: float | None = None) -> WeissSeries:
    """Weiss energies over increasing radii with a monotonicity verdict."""
    _require_pair_forces(stack)
    radii = np.asarray(radii, float)
    if np.any(np.diff(radii) <= 0):
        raise EnergyError("radii must be strictly increasing")
    lat = stack.lattice
    c = np.asarray(center, float).reshape(lat.dim)
    if slack is None:
        slack = MONOTONE_SLACK_COEFF * lat.spacing
    integrand = _gradient_sq_plus_gap(stack)
    vals = []
    for r in radii:
        if np.any(np.abs(c) + r > lat.half_width + 1e-12):
            raise EnergyError("ball exits the lattice hull")
        vol = _ball_integral(integrand, c, r)
        bdry = _sphere_integral_sq(stack, c, r)
        d = lat.dim
        vals.append(vol / r ** (d + 2) - bdry / r ** (d + 3))
    return WeissSeries(center=c, radii=radii, values=np.asarray(vals), kind="Weiss",
                       slack=float(slack))


# ---------------------------------------------------------------------------
# family constants


def random_hybrid_spec(dim: int, rng: np.random.Generator) -> ProfileSpec:
    """Random valid hybrid profile: trace(B) = 1 and 3B - e(x)e psd."""
    if dim == 1:
        e = Direction([1.0 if rng.random() < 0.5 else -1.0])
        return ProfileSpec.hybrid_eb(e, SymMatrix([[1.0]]))
    th = rng.uniform(0, 2 * np.pi)
    e = Direction.from_angle(th)
    # B = e(x)e / 3 + M with M psd, trace(M) = 2/3
    t = rng.uniform(0.0, 1.0)
    lam = np.array([2.0 / 3.0 * t, 2.0 / 3.0 * (1.0 - t)])
    phi = rng.uniform(0, np.pi)
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    M = R @ np.diag(lam) @ R.T
    B = np.outer(e.components, e.components) / 3.0 + M
    return ProfileSpec.hybrid_eb(e, SymMatrix(0.5 * (B + B.T)))


def random_parabola_spec(dim: int, rng: np.random.Generator) -> ProfileSpec:
    """Random valid parabola profile via A = (2S + T)/3, B = -(S + 2T)/3
    with S, T psd of unit trace (so 2A + B = S >= 0 >= -(A + 2B) = -T)."""
    if dim == 1:
        return ProfileSpec.parabola(SymMatrix([[1.0]]), SymMatrix([[-1.0]]))

    def rand_psd_unit_trace():
        t = rng.uniform(0.0, 1.0)
        phi = rng.uniform(0, np.pi)
        R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
        M = R @ np.diag([t, 1.0 - t]) @ R.T
        return 0.5 * (M + M.T)

    S, T = rand_psd_unit_trace(), rand_psd_unit_trace()
    A = (2.0 * S + T) / 3.0
    B = -(S + 2.0 * T) / 3.0
    return ProfileSpec.parabola(SymMatrix(A), SymMatrix(B))


_TABLE_SPACING = {1: 2.0**-9, 2: 2.0**-7}


def energy_table(dim: int, spacing: float | None = None, seed: int = 0) -> EnergyTable:
    """Family constants W0..W3 from exact profile samples at r = 1.

    Hybrid and parabola values are averaged over 5 random valid parameter
    sets each; the per-family spread is recorded (the constants must be
    parameter-independent).
    """
    if dim not in (1, 2):
        raise EnergyError("dim must be 1 or 2")
    h = _TABLE_SPACING[dim] if spacing is None else float(spacing)
    lat = make_lattice(dim, 1.0 + 8 * h, h)
    rng = np.random.default_rng(seed)

    def w_of(spec):
        stack = stack_from_profile(spec, lat, mask=np.ones(lat.shape, bool))
        return weiss_at(stack, np.zeros(dim), 1.0)

    e1 = Direction([1.0] + [0.0] * (dim - 1))
    W0 = w_of(ProfileSpec.sh(e1))
    W1 = w_of(ProfileSpec.uh(e1))
    hyb = [w_of(random_hybrid_spec(dim, rng)) for _ in range(5)]
    par = [w_of(random_parabola_spec(dim, rng)) for _ in range(5)]
    spreads = {
        "hybrid": float(np.max(hyb) - np.min(hyb)),
        "parabola": float(np.max(par) - np.min(par)),
    }
    return EnergyTable(dim=dim, W0=float(W0), W1=float(W1),
                       W2=float(np.mean(hyb)), W3=float(np.mean(par)),
                       spreads=spreads)


# ---------------------------------------------------------------------------
# Monneau


def monneau_series(stack: MembraneStack, parabolas, center, radii,
                   slack: float | None = None) -> WeissSeries:
    """Scale-normalized boundary L2 distance to a fixed parabola stack.

        M(r) = r^-(d+3) * int_{dB_r} sum_k (u_k - v_k)^2,

    with v_k = x . A_k x / 2 about ``center``.  Requires trace(A_k) = f_k
    and the parabola stack ordered (A_k - A_{k+1} psd); valid for any N.
    """
    lat = stack.lattice
    d = lat.dim
    c = np.asarray(center, float).reshape(d)
    mats = [m if isinstance(m, SymMatrix) else SymMatrix(m) for m in parabolas]
    if len(mats) != stack.N:
        raise EnergyError("one parabola per membrane required")
    for k, m in enumerate(mats):
        if abs(m.trace - stack.forces[k]) > 1e-9:
            raise EnergyError(
                f"trace(A_{k + 1}) = {m.trace} must equal the force {stack.forces[k]}"
            )
    for k in range(len(mats) - 1):
        gap = SymMatrix(mats[k].full - mats[k + 1].full).min_eig()
        if gap < -1e-10:
            raise EnergyError("parabola stack is not ordered (difference not psd)")
    radii = np.asarray(radii, float)
    if np.any(np.diff(radii) <= 0):
        raise EnergyError("radii must be strictly increasing")
    if slack is None:
        slack = MONOTONE_SLACK_COEFF * lat.spacing
    h = lat.spacing
    vals = []
    for r in radii:
        if np.any(np.abs(c) + r > lat.half_width + 1e-12):
            raise EnergyError("ball exits the lattice hull")
        if d == 1:
            pts = np.array([[c[0] - r], [c[0] + r]])
            s = 0.0
            for f, m in zip(stack.fields, mats):
                uv = np.asarray(interpolate(f, pts))
                vv = 0.5 * m.quad(pts - c)
                s += float(np.sum((uv - vv) ** 2))
        else:
            n = max(64, int(np.ceil(2.0 * np.pi * r / h)))
            theta = 2.0 * np.pi * np.arange(n) / n
            pts = c[None, :] + r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            s = 0.0
            for f, m in zip(stack.fields, mats):
                uv = np.asarray(interpolate(f, pts))
                vv = 0.5 * m.quad(pts - c)
                s += float(((uv - vv) ** 2).mean() * 2.0 * np.pi * r)
        vals.append(s / r ** (d + 3))
    return WeissSeries(center=c, radii=radii, values=np.asarray(vals),
                       kind="Monneau", slack=float(slack))
