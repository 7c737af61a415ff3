"""Contact sets, free-boundary extraction, flatness fitting and trapping checks.

Free boundaries are resolved at edge-midpoint accuracy: a gamma point is the
midpoint of a lattice edge whose endpoints disagree on the contact
indicator.  Flatness fits measure the scaled sup-norm distance of a pair
(u, w) to translated/rotated half-space profiles over a ball, matching the
way flatness classes are defined (sup-norm, normalized by radius^2); the
search is a deterministic coarse direction scan followed by Nelder-Mead
refinement, so repeated runs give identical fits.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .grid import Lattice, ScalarField
from .profiles import Direction, eval_approx

__all__ = [
    "GammaSet",
    "FlatnessFit",
    "contact_sets",
    "pair_contact_masks",
    "extract_gamma",
    "fit_flatness",
    "fit_half_space",
    "width_profile",
    "check_trapping",
]

COARSE_ANGLES = 720
COARSE_OFFSETS = 25
COARSE_MAX_NODES = 600
NM_OPTIONS = {"maxiter": 600, "xatol": 1e-12, "fatol": 1e-15}


class FreeBoundaryError(ValueError):
    pass


@dataclass
class GammaSet:
    """Edge midpoints where a contact indicator changes, with a label."""

    points: np.ndarray  # (m, dim)
    label: str

    def __len__(self):
        return len(self.points)

    def dump_csv(self, path) -> None:
        dim = self.points.shape[1] if len(self.points) else 2
        header = ["x1", "label"] if dim == 1 else ["x1", "x2", "label"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for p in self.points:
                w.writerow([format(float(c), ".12g") for c in p] + [self.label])


def contact_sets(stack, tolerance: float | None = None):
    """Boolean contact masks {u_k - u_{k+1} <= tol} for consecutive pairs."""
    if tolerance is None:
        tolerance = stack.lattice.spacing ** 2
    vals = stack.values()
    return [
        ((vals[k] - vals[k + 1]) <= tolerance) & stack.mask
        for k in range(stack.N - 1)
    ]


def pair_contact_masks(u: ScalarField, w: ScalarField, tolerance: float | None = None):
    """Contact masks of the system pair: {u = w/2} and {w = u/2}."""
    if tolerance is None:
        tolerance = u.lattice.spacing ** 2
    m = u.mask & w.mask
    return (
        ((u.values - 0.5 * w.values) <= tolerance) & m,
        ((w.values - 0.5 * u.values) <= tolerance) & m,
    )


def extract_gamma(mask: np.ndarray, lattice: Lattice, label: str = "Gamma",
                  domain_mask: np.ndarray | None = None) -> GammaSet:
    """Midpoints of lattice edges where the boolean ``mask`` changes value.

    Both edge endpoints must lie in ``domain_mask`` (default: the lattice
    ball) so spurious boundary-layer flips are not reported.
    """
    if domain_mask is None:
        domain_mask = lattice.ball_mask()
    axis = lattice.axis
    pts = []
    if lattice.dim == 1:
        flip = (mask[:-1] != mask[1:]) & domain_mask[:-1] & domain_mask[1:]
        for i in np.nonzero(flip)[0]:
            pts.append([0.5 * (axis[i] + axis[i + 1])])
    else:
        flip = (mask[:-1, :] != mask[1:, :]) & domain_mask[:-1, :] & domain_mask[1:, :]
        ii, jj = np.nonzero(flip)
        for i, j in zip(ii, jj):
            pts.append([0.5 * (axis[i] + axis[i + 1]), axis[j]])
        flip = (mask[:, :-1] != mask[:, 1:]) & domain_mask[:, :-1] & domain_mask[:, 1:]
        ii, jj = np.nonzero(flip)
        for i, j in zip(ii, jj):
            pts.append([axis[i], 0.5 * (axis[j] + axis[j + 1])])
    arr = np.asarray(pts, float) if pts else np.empty((0, lattice.dim))
    return GammaSet(points=arr, label=label)


@dataclass
class FlatnessFit:
    """Best half-space-profile fit of a pair over a ball.

    ``a``/``b`` are offsets at unit scale (the ball is rescaled to B_1 and
    values divided by radius^2 before fitting); ``epsilon`` is the sup-norm
    misfit on the rescaled ball.
    """

    alpha: Direction | None
    beta: Direction | None
    a: float
    b: float
    epsilon: float
    mode: str
    center: np.ndarray
    radius: float
    degenerate: bool = False

    @property
    def angle_gap(self) -> float:
        return float(np.linalg.norm(self.alpha.components - self.beta.components))


def _ball_samples(fld: ScalarField, center, radius):
    lat = fld.lattice
    pts = lat.points()
    c = np.asarray(center, float).reshape(lat.dim)
    keep = (np.linalg.norm(pts - c, axis=1) <= radius) & fld.mask.ravel()
    if not np.all(lat.in_hull(np.array([c - radius, c + radius]))):
        raise FreeBoundaryError("fitting ball exits the lattice hull")
    xi = (pts[keep] - c) / radius
    return xi, keep


def _profile_r(xi, theta, a, dim):
    d = np.array([np.cos(theta), np.sin(theta)])[:dim] if dim == 2 else np.array([np.cos(theta)])
    t = xi @ d - a
    return 0.5 * np.maximum(t, 0.0) ** 2


def _pair_s(xi, ta, tb):
    P = 0.5 * np.minimum(ta, 0.0) ** 2 + 0.25 * np.maximum(tb, 0.0) ** 2
    Q = 0.25 * np.minimum(ta, 0.0) ** 2 + 0.5 * np.maximum(tb, 0.0) ** 2
    return P, Q


def _coarse_stride(n):
    return max(1, int(np.ceil(n / COARSE_MAX_NODES)))


def _fit_single_r(xi, vals, dim):
    """Best (theta, a) for |vals - P(theta; a)|_sup on the unit ball."""
    sub = slice(None, None, _coarse_stride(len(xi)))
    xs, vs = xi[sub], vals[sub]
    if dim == 2:
        thetas = 2.0 * np.pi * np.arange(COARSE_ANGLES) / COARSE_ANGLES
        dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    else:
        thetas = np.array([0.0, np.pi])
        dirs = np.array([[1.0], [-1.0]])
    offs = np.linspace(-0.75, 0.75, COARSE_OFFSETS)
    proj = xs @ dirs.T  # (m, A)
    t = proj[None, :, :] - offs[:, None, None]  # (O, m, A)
    mis = np.abs(0.5 * np.maximum(t, 0.0) ** 2 - vs[None, :, None]).max(axis=1)  # (O, A)
    o_i, a_i = np.unravel_index(np.argmin(mis), mis.shape)
    th0, a0 = float(thetas[a_i]), float(offs[o_i])

    def obj(p):
        return np.abs(_profile_r(xi, p[0], p[1], dim) - vals).max()

    res = minimize(obj, np.array([th0, a0]), method="Nelder-Mead", options=NM_OPTIONS)
    th, a = float(res.x[0]), float(res.x[1])
    if dim == 1:
        # keep the direction a unit vector: fold the angle to +-e1
        th = 0.0 if np.cos(th) >= 0 else np.pi
        res_fun = np.abs(_profile_r(xi, th, a, dim) - vals).max()
        return th, a, float(min(res.fun, res_fun))
    return th, a, float(res.fun)


def _fit_pair_s(xi, uvals, wvals, dim):
    """Best (theta_a, theta_b, a, b) for the unstable pair misfit."""
    sub = slice(None, None, _coarse_stride(len(xi)))
    xs, us, ws = xi[sub], uvals[sub], wvals[sub]
    if dim == 2:
        thetas = 2.0 * np.pi * np.arange(COARSE_ANGLES) / COARSE_ANGLES
        dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    else:
        thetas = np.array([0.0, np.pi])
        dirs = np.array([[1.0], [-1.0]])
    proj = xs @ dirs.T
    P, Q = _pair_s(xs, proj, proj)
    mis = np.maximum(np.abs(P - us[:, None]), np.abs(Q - ws[:, None])).max(axis=0)
    th0 = float(thetas[np.argmin(mis)])

    def obj(p):
        tha, thb, a, b = p
        da = np.array([np.cos(tha), np.sin(tha)])[:dim] if dim == 2 else np.array([np.cos(tha)])
        db = np.array([np.cos(thb), np.sin(thb)])[:dim] if dim == 2 else np.array([np.cos(thb)])
        P, Q = _pair_s(xi, xi @ da - a, xi @ db - b)
        return max(np.abs(P - uvals).max(), np.abs(Q - wvals).max())

    res = minimize(obj, np.array([th0, th0, 0.0, 0.0]), method="Nelder-Mead",
                   options=NM_OPTIONS)
    return res.x, float(res.fun)


def fit_flatness(u: ScalarField, w: ScalarField, center, radius: float, mode: str) -> FlatnessFit:
    """Fit (u, w) on B_radius(center) against half-space profiles.

    mode "R": independent stable profiles P(alpha; a), Q(beta; b);
    mode "S": the coupled unstable pair.  Minimizes the rescaled sup misfit
    max(|u - P|, |w - Q|) / radius^2 over directions and offsets.
    """
    if mode not in ("R", "S"):
        raise FreeBoundaryError(f"mode must be 'R' or 'S', got {mode!r}")
    lat = u.lattice
    dim = lat.dim
    c = np.asarray(center, float).reshape(dim)
    xi, keep = _ball_samples(u, c, radius)
    if len(xi) < 4:
        raise FreeBoundaryError("not enough nodes inside the fitting ball")
    uv = u.values.ravel()[keep] / radius**2
    wv = w.values.ravel()[keep] / radius**2
    scale = max(np.abs(uv).max(), np.abs(wv).max())
    if scale < 1e-14:
        return FlatnessFit(None, None, 0.0, 0.0, float(scale), mode, c, radius,
                           degenerate=True)
    if mode == "R":
        tha, a, fa = _fit_single_r(xi, uv, dim)
        thb, b, fb = _fit_single_r(xi, wv, dim)
        eps = max(fa, fb)
        alpha = Direction.from_angle(tha) if dim == 2 else Direction([np.cos(tha)])
        beta = Direction.from_angle(thb) if dim == 2 else Direction([np.cos(thb)])
    else:
        (tha, thb, a, b), eps = _fit_pair_s(xi, uv, wv, dim)
        if dim == 1:
            tha = 0.0 if np.cos(tha) >= 0 else np.pi
            thb = 0.0 if np.cos(thb) >= 0 else np.pi
        alpha = Direction.from_angle(tha) if dim == 2 else Direction([np.cos(tha)])
        beta = Direction.from_angle(thb) if dim == 2 else Direction([np.cos(thb)])
    return FlatnessFit(alpha, beta, float(a), float(b), float(eps), mode, c, float(radius))


def fit_half_space(fld: ScalarField, center, radius: float):
    """Single-field variant of the mode-R fit (for the plain obstacle problem)."""
    lat = fld.lattice
    xi, keep = _ball_samples(fld, np.asarray(center, float), radius)
    vv = fld.values.ravel()[keep] / radius**2
    th, a, eps = _fit_single_r(xi, vv, lat.dim)
    d = Direction.from_angle(th) if lat.dim == 2 else Direction([np.cos(th)])
    return d, float(a), float(eps)


def width_profile(gamma: GammaSet, direction: Direction, offset: float, radii):
    """Width of a gamma set about the hyperplane {x . direction = offset}.

    Rows are (r, width, width*(-ln r)/r, width/r); a radius that captures no
    gamma points gets NaN widths rather than 0.
    """
    radii = np.asarray(radii, float)
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise FreeBoundaryError("radii must be positive and increasing")
    rows = []
    pts = gamma.points
    if len(pts):
        dist = np.linalg.norm(pts, axis=1)
        dev = np.abs(pts @ direction.components - offset)
    for r in radii:
        if len(pts) == 0 or not np.any(dist <= r):
            rows.append((float(r), np.nan, np.nan, np.nan))
            continue
        wdt = float(dev[dist <= r].max())
        rows.append((float(r), wdt, wdt * (-np.log(r)) / r, wdt / r))
    return rows


def _frame_transform(alpha: Direction, beta: Direction):
    """Orthogonal map T with T alpha, T beta in the symmetric frame.

    Returns (T, framed_alpha, framed_beta); raises when the pair cannot be
    framed (angle gap >= pi, or mismatched 1D signs).
    """
    dim = alpha.dim
    if dim == 1:
        sa, sb = alpha.components[0], beta.components[0]
        if sa * sb < 0:
            raise FreeBoundaryError("1D directions of opposite sign cannot be framed")
        T = np.array([[1.0 if sa > 0 else -1.0]])
        e = Direction([1.0])
        return T, e, e
    tha, thb = alpha.angle(), beta.angle()
    half = 0.5 * np.arctan2(np.sin(tha - thb), np.cos(tha - thb))
    if abs(half) >= np.pi / 2 - 1e-9:
        raise FreeBoundaryError("directions are anti-parallel; no symmetric frame")
    mu = tha - half
    cmu, smu = np.cos(-mu), np.sin(-mu)
    T = np.array([[cmu, -smu], [smu, cmu]])
    if np.sin(half) < 0:
        T = np.array([[1.0, 0.0], [0.0, -1.0]]) @ T
        half = -half
    fa = Direction.from_angle(half)
    fb = Direction.from_angle(-half)
    return T, fa, fb


def check_trapping(u: ScalarField, w: ScalarField, fit: FlatnessFit, shift_constant: float,
                   margin_tol: float = 1e-8):
    """Verify the approximate-solution sandwich around (u, w) for a flat fit.

    mode R: (Phi, Psi) translated by -+ A*eps*alpha must bracket the pair;
    mode S: the same with offsets shifted to (a -+ A*eps, b +- A*eps).
    Checked on B_{radius/2}(center); returns (ok, worst signed margin).
    """
    if fit.degenerate or fit.alpha is None:
        raise FreeBoundaryError("cannot check trapping for a degenerate fit")
    if fit.epsilon >= 0.05:
        raise FreeBoundaryError(
            f"fit epsilon {fit.epsilon:.3g} is not in the flat regime (< 0.05)"
        )
    A = float(shift_constant)
    eps = fit.epsilon
    T, fa, fb = _frame_transform(fit.alpha, fit.beta)
    xi, keep = _ball_samples(u, fit.center, fit.radius / 2.0)
    uv = u.values.ravel()[keep] / fit.radius**2
    wv = w.values.ravel()[keep] / fit.radius**2
    # offsets were fitted at unit scale of the full ball; points here live in
    # units of fit.radius as well
    xi = xi * 0.5  # _ball_samples rescaled by radius/2; convert to fit units
    xhat = xi @ T.T
    if fit.mode == "R":
        shift = A * eps * fa.components
        lo = eval_approx(1, fa, fb, fit.a, fit.b, xhat - shift)
        hi = eval_approx(1, fa, fb, fit.a, fit.b, xhat + shift)
    else:
        lo = eval_approx(2, fa, fb, fit.a - A * eps, fit.b + A * eps, xhat)
        hi = eval_approx(2, fa, fb, fit.a + A * eps, fit.b - A * eps, xhat)
    margins = [
        (uv - lo[0]).min(), (hi[0] - uv).min(),
        (wv - lo[1]).min(), (hi[1] - wv).min(),
    ]
    margin = float(min(margins))
    return margin >= -margin_tol, margin
