"""Blow-up rescaling and classification of free-boundary intersection points.

A point on both free boundaries is classified by combining two independent
signals: the Weiss energy at the smallest reliable scale (compared against
the family constants W0, 1.5 W0, 1.75 W0, 2 W0 with a 5% relative
acceptance band) and a profile fit at that scale (half-space fit for
Reg/Sing1, quadratic regression for Sing2, mixed fit for hybrid points).
Both must agree, otherwise the verdict is Undetermined; Undetermined is a
legitimate outcome, not an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .energy import energy_table, weiss_at
from .freeboundary import contact_sets, extract_gamma, fit_flatness
from .grid import ScalarField, interpolate, make_lattice
from .profiles import Direction, ProfileSpec, SymMatrix
from .solver import MembraneStack

__all__ = [
    "PointClass",
    "AngleSeries",
    "rescale_at",
    "classify_point",
    "angle_dynamics",
    "dump_classification_csv",
]

VERDICTS = ("Reg", "Sing1", "Hybrid", "Sing2")
ENERGY_BAND = 0.05  # relative half-width of the acceptance band per family
FIT_EPS_MAX = 0.1  # profile-fit misfit ceiling for a confident verdict
MIN_RADIUS_CELLS = 8  # smallest classification radius, in units of h
BOUNDARY_REACH_CELLS = 3  # max distance (in h) from the center to each gamma set


class ClassifyError(ValueError):
    pass


@dataclass
class PointClass:
    verdict: str  # Reg | Sing1 | Sing2 | Hybrid | Undetermined
    energy: float
    best_fit: ProfileSpec | None
    epsilon: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class AngleSeries:
    radii: np.ndarray
    angle_gaps: np.ndarray
    epsilons: np.ndarray
    modes: list
    truncated: bool = False

    def log_diagnostic(self) -> np.ndarray:
        """|alpha - beta|(r) * |log2 r| per radius."""
        return self.angle_gaps * np.abs(np.log2(self.radii))


@lru_cache(maxsize=4)
def _table(dim: int):
    return energy_table(dim)


def rescale_at(stack: MembraneStack, center, r: float) -> MembraneStack:
    """Parabolic rescaling u(center + r x) / r^2 onto a unit-ball lattice.

    The rescaled spacing tracks h/r (resolution is preserved) but never
    drops below the source spacing; requires the cube of side 2r around
    ``center`` to stay inside the source hull.
    """
    lat = stack.lattice
    c = np.asarray(center, float).reshape(lat.dim)
    if np.any(np.abs(c) + r > lat.half_width + 1e-12):
        raise ClassifyError("rescaling cube exits the lattice hull")
    h = lat.spacing
    m = 2 * max(1, round(r / h))
    cap = 2 * max(1, int(np.floor(1.0 / h)))
    m = min(m, cap)
    new_lat = make_lattice(lat.dim, 1.0, 2.0 / m)
    pts = c[None, :] + r * new_lat.points()
    fields = []
    for f in stack.fields:
        vals = np.asarray(interpolate(f, pts), float).reshape(new_lat.shape) / (r * r)
        fields.append(ScalarField(new_lat, vals, new_lat.ball_mask()))
    return MembraneStack(fields, stack.forces.copy())


def _on_both_boundaries(stack: MembraneStack, center, tol=None) -> bool:
    lat = stack.lattice
    h = lat.spacing
    c = np.asarray(center, float).reshape(lat.dim)
    masks = contact_sets(stack, tol)
    reach = BOUNDARY_REACH_CELLS * h + 1e-12
    for m in masks:
        g = extract_gamma(m, lat)
        if len(g) == 0 or np.linalg.norm(g.points - c, axis=1).min() > reach:
            return False
    return True


def _ball_nodes(stack: MembraneStack, c, radius):
    lat = stack.lattice
    pts = lat.points()
    keep = (np.linalg.norm(pts - c, axis=1) <= radius) & stack.mask.ravel()
    return (pts[keep] - c) / radius, keep


def _fit_quadratics(stack: MembraneStack, c, radius: float):
    """Least-squares quadratic forms for u1 and u3 on B_radius(c), unit scale."""
    lat = stack.lattice
    x, keep = _ball_nodes(stack, c, radius)
    if lat.dim == 1:
        basis = np.stack([0.5 * x[:, 0] ** 2, x[:, 0], np.ones(len(x))], axis=1)
    else:
        basis = np.stack(
            [0.5 * x[:, 0] ** 2, x[:, 0] * x[:, 1], 0.5 * x[:, 1] ** 2,
             x[:, 0], x[:, 1], np.ones(len(x))],
            axis=1,
        )
    mats, eps = [], 0.0
    for f in (stack.fields[0], stack.fields[2]):
        v = f.values.ravel()[keep] / radius**2
        coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
        eps = max(eps, float(np.abs(basis @ coef - v).max()))
        if lat.dim == 1:
            mats.append(SymMatrix([[coef[0]]]))
        else:
            mats.append(SymMatrix(np.array([[coef[0], coef[1]], [coef[1], coef[2]]])))
    return mats[0], mats[1], eps


def _hybrid_misfit(stack: MembraneStack, c, radius: float):
    """Best hybrid-profile fit (both orderings) on B_radius(c), unit scale."""
    lat = stack.lattice
    x, keep = _ball_nodes(stack, c, radius)
    u1 = stack.fields[0].values.ravel()[keep] / radius**2
    u3 = stack.fields[2].values.ravel()[keep] / radius**2
    if lat.dim == 1:
        qb = np.stack([0.5 * x[:, 0] ** 2], axis=1)
    else:
        qb = np.stack([0.5 * x[:, 0] ** 2, x[:, 0] * x[:, 1], 0.5 * x[:, 1] ** 2], axis=1)

    def solve_for(theta, ordering):
        d = np.array([np.cos(theta), np.sin(theta)])[: lat.dim]
        half = 0.25 * np.maximum(x @ d, 0.0) ** 2
        if ordering == "EB":
            # u1 = half + x.Bx/4,  u3 = -x.Bx/2
            A_ls = np.vstack([0.5 * qb, -qb])
            rhs = np.concatenate([u1 - half, u3])
        else:
            # u1 = x.Bx/2,  u3 = -half - x.Bx/4
            A_ls = np.vstack([qb, -0.5 * qb])
            rhs = np.concatenate([u1, u3 + half])
        coef, *_ = np.linalg.lstsq(A_ls, rhs, rcond=None)
        return coef, float(np.abs(A_ls @ coef - rhs).max())

    best = None
    thetas = (2.0 * np.pi * np.arange(180) / 180) if lat.dim == 2 else np.array([0.0, np.pi])
    for ordering in ("EB", "BE"):
        coarse = min(thetas, key=lambda t: solve_for(t, ordering)[1])
        res = minimize(lambda p: solve_for(p[0], ordering)[1], np.array([coarse]),
                       method="Nelder-Mead",
                       options={"maxiter": 200, "xatol": 1e-10, "fatol": 1e-13})
        coef, misfit = solve_for(float(res.x[0]), ordering)
        if best is None or misfit < best[0]:
            best = (misfit, float(res.x[0]), ordering, coef)
    misfit, theta, ordering, coef = best
    e = Direction.from_angle(theta) if lat.dim == 2 else Direction([np.cos(theta)])
    B = SymMatrix([[coef[0]]]) if lat.dim == 1 else SymMatrix(
        np.array([[coef[0], coef[1]], [coef[1], coef[2]]])
    )
    spec = ProfileSpec.hybrid_eb(e, B) if ordering == "EB" else ProfileSpec.hybrid_be(B, e)
    return spec, misfit


def classify_point(stack: MembraneStack, center, radii) -> PointClass:
    """Assign Reg / Sing1 / Sing2 / Hybrid / Undetermined to a point of
    Gamma_1 cap Gamma_2.

    The limiting Weiss value is estimated at the smallest radius >= 8h in
    ``radii``; the nearest family constant (within a 5% relative band)
    proposes a verdict which the corresponding profile fit must confirm.
    """
    lat = stack.lattice
    h = lat.spacing
    c = np.asarray(center, float).reshape(lat.dim)
    if not _on_both_boundaries(stack, c):
        raise ClassifyError("center is not on both free boundaries (within one cell)")
    radii = sorted(float(r) for r in np.atleast_1d(radii))
    usable = [r for r in radii if r >= MIN_RADIUS_CELLS * h - 1e-12]
    if not usable:
        raise ClassifyError(f"no radius >= {MIN_RADIUS_CELLS}h available")
    r_star = usable[0]
    w = weiss_at(stack, c, r_star)
    refs = _table(lat.dim).references()
    rel = np.abs(w - refs) / refs
    k = int(np.argmin(rel))
    if rel[k] > ENERGY_BAND:
        return PointClass("Undetermined", float(w), None, np.nan, c)
    candidate = VERDICTS[k]
    if candidate in ("Reg", "Sing1"):
        u, wf = stack.pair_view()
        mode = "R" if candidate == "Reg" else "S"
        fit = fit_flatness(u, wf, c, r_star, mode)
        if fit.degenerate or fit.epsilon > FIT_EPS_MAX:
            return PointClass("Undetermined", float(w), None,
                              fit.epsilon if not fit.degenerate else np.nan, c)
        maker = ProfileSpec.half_pair_r if mode == "R" else ProfileSpec.half_pair_s
        spec = maker(fit.alpha, fit.beta, fit.a, fit.b)
        return PointClass(candidate, float(w), spec, fit.epsilon, c)
    if candidate == "Sing2":
        A, B, eps = _fit_quadratics(stack, c, r_star)
        ok = (
            eps <= FIT_EPS_MAX
            and abs(A.trace - 1.0) <= 0.1
            and abs(B.trace + 1.0) <= 0.1
        )
        if not ok:
            return PointClass("Undetermined", float(w), None, eps, c)
        return PointClass("Sing2", float(w), ProfileSpec.parabola(A, B), eps, c)
    spec, eps = _hybrid_misfit(stack, c, r_star)
    if eps > FIT_EPS_MAX:
        return PointClass("Undetermined", float(w), None, eps, c)
    return PointClass("Hybrid", float(w), spec, eps, c)


def angle_dynamics(stack: MembraneStack, center, radii, mode: str) -> AngleSeries:
    """Per-scale flatness fits: |alpha - beta|(r) and epsilon(r).

    ``radii`` must be decreasing with the smallest >= 8h; a fit failure
    truncates the series and sets the flag.
    """
    lat = stack.lattice
    h = lat.spacing
    c = np.asarray(center, float).reshape(lat.dim)
    radii = [float(r) for r in radii]
    if any(r2 >= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ClassifyError("radii must be decreasing")
    if radii and min(radii) < MIN_RADIUS_CELLS * h - 1e-12:
        raise ClassifyError(f"smallest radius must be >= {MIN_RADIUS_CELLS}h")
    if not _on_both_boundaries(stack, c):
        raise ClassifyError("center is not on both free boundaries (within one cell)")
    u, w = stack.pair_view()
    gaps, epss, modes, used = [], [], [], []
    truncated = False
    for r in radii:
        try:
            fit = fit_flatness(u, w, c, r, mode)
        except Exception:
            truncated = True
            break
        if fit.degenerate:
            truncated = True
            break
        gaps.append(fit.angle_gap)
        epss.append(fit.epsilon)
        modes.append(mode)
        used.append(r)
    return AngleSeries(
        radii=np.asarray(used),
        angle_gaps=np.asarray(gaps),
        epsilons=np.asarray(epss),
        modes=modes,
        truncated=truncated,
    )


def dump_classification_csv(path, points) -> None:
    """CSV dump x1[,x2],verdict,energy,eps of classified points."""
    import csv

    points = list(points)
    dim = len(points[0].center) if points else 2
    header = (["x1"] if dim == 1 else ["x1", "x2"]) + ["verdict", "energy", "eps"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p in points:
            w.writerow(
                [format(float(x), ".12g") for x in p.center]
                + [p.verdict, format(p.energy, ".12g"), format(p.epsilon, ".12g")]
            )
