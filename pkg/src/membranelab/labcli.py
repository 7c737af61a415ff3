"""Experiment driver: config parsing, named pipelines, deterministic reports.

Configs are flat ``key = value`` text files (lists are comma separated);
every run echoes the fully resolved config, including defaults, into
``summary.json`` so reports are self-describing.  All verdict thresholds
live in the VERDICT constants block below; experiments always write the
raw series next to the verdicts so a report can be re-judged without
re-solving.

Determinism contract: a rerun with the same config produces byte-identical
files for any worker count (MEMBRANE_LAB_WORKERS only controls how
independent sub-tasks are batched; results are assembled in a fixed
order).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classify as _classify
from . import energy as _energy
from . import freeboundary as _fb
from . import harmonic as _harmonic
from . import solver as _solver
from .grid import make_lattice
from .profiles import Direction, ProfileSpec, SymMatrix

__all__ = ["ExperimentConfig", "ReportBundle", "run_experiment", "write_report", "main"]

WORKERS_ENV = "MEMBRANE_LAB_WORKERS"

# --- verdict thresholds (documented in one place so reports can be re-judged)
VERDICT = {
    "energy_ratio_tol": 1e-3,      # |W_k/W_0 - target| per family
    "energy_spread_tol": 1e-3,     # parameter-independence spread per family
    "clog_band_max": 4.0,          # max/min of width * (-ln r) / r across scales
    "linear_band_max": 4.0,        # width / r spread that C^{1,alpha} would keep
    "min_scales": 4,               # dyadic scales required for a width verdict
    "monotone_slack_coeff": _energy.MONOTONE_SLACK_COEFF,
    "remainder_band_ratio": _harmonic.REMAINDER_BAND_RATIO,
    "remainder_log_slope_tol": _harmonic.REMAINDER_LOG_SLOPE_TOL,
    "obstacle_decay_factor": 0.9,  # width/r must shrink by this per halving
}

_DEFAULTS = {
    "dim": 2,
    "half_width": 1.0,
    "spacing": 2.0**-6,
    "profile": "SH",
    "perturb_amplitude": 0.0,
    "phi_cos": [],
    "phi_sin": [],
    "psi_cos": [],
    "psi_sin": [],
    "radii": [],
    "inner_radius": 0.5,
    "seed": 0,
    "tolerance": 1e-10,
    "max_sweeps": 0,  # 0 = solver default
    "outdir": "membrane-lab-out",
    "forces": [1.0, 0.0, -1.0],
    "parabola_spread": 0.1,
    "offset": 0.0,
}


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)


@dataclass
class ReportBundle:
    experiment: str
    config: dict
    tables: dict  # name -> (header list, rows list-of-tuples)
    summary: dict
    passed: bool


def _parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip() != ""]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config(path) -> ExperimentConfig:
    """Read a flat key = value config file."""
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        raw[key.strip()] = _parse_value(val)
    if "experiment" not in raw:
        raise ConfigError(f"{path}: missing 'experiment' key")
    name = str(raw["experiment"])
    values = dict(_DEFAULTS)
    for k, v in raw.items():
        if k == "experiment":
            continue
        if k not in _DEFAULTS:
            raise ConfigError(f"unknown config key {k!r}")
        if isinstance(_DEFAULTS[k], list) and not isinstance(v, list):
            v = [v]
        values[k] = v
    return ExperimentConfig(experiment=name, values=values, raw=raw)


def _workers() -> int:
    try:
        n = int(os.environ.get(WORKERS_ENV, "1"))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer")
    return max(1, n)


def _pmap(fn, items):
    """Order-preserving map, threaded when MEMBRANE_LAB_WORKERS > 1."""
    items = list(items)
    n = _workers()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# boundary data builders


def _canonical_profile(name: str, dim: int) -> ProfileSpec:
    e1 = Direction([1.0] + [0.0] * (dim - 1))
    eye = np.eye(dim)
    if name == "SH":
        return ProfileSpec.sh(e1)
    if name == "UH":
        return ProfileSpec.uh(e1)
    if name == "parabola":
        return ProfileSpec.parabola(SymMatrix(eye / dim), SymMatrix(-eye / dim))
    if name == "hybrid":
        return ProfileSpec.hybrid_eb(e1, SymMatrix(eye / dim))
    raise ConfigError(f"unknown profile {name!r} (SH | UH | parabola | hybrid)")


def _tapered(fn):
    """Multiply angular data by max(cos t, 0)^2.

    The taper matches the trace of the half-space profiles, so the ordering
    of the perturbed boundary data reduces to bounds on the Fourier
    polynomial alone and stays valid at useful amplitudes.
    """

    def wrapped(theta):
        th = np.asarray(theta, float)
        return np.maximum(np.cos(th), 0.0) ** 2 * fn(th)

    return wrapped


def _perturbations(cfg: ExperimentConfig):
    """(phi, psi) boundary callables on the angle, or (None, None).

    phi and psi are taper * (truncated Fourier polynomial); the coefficient
    lists steer the boundary functionals gamma_1 and gamma_2 linearly.
    """
    amp = float(cfg["perturb_amplitude"])
    if amp == 0.0:
        return None, None, amp
    pc, ps = list(cfg["phi_cos"]), list(cfg["phi_sin"])
    qc, qs = list(cfg["psi_cos"]), list(cfg["psi_sin"])
    if not any([pc, ps, qc, qs]):
        # seed-generated generic perturbation: shared curvature harmonic
        # cos(3t) with the constant chosen so gamma_1 vanishes (the fitted
        # free boundary stays near the center), plus a sin(2t) component in
        # psi - phi so the gamma_2 functionals differ
        rng = np.random.default_rng(int(cfg["seed"]))
        c3 = rng.uniform(1.6, 2.0)
        s2 = rng.uniform(0.15, 0.22)
        # gamma_1(taper cos 3t) / gamma_1(taper) = 0.2501 / 0.8488
        pc = [-0.2947 * c3, 0.0, 0.0, c3]
        qc = list(pc)
        qs = [0.0, s2]
    base_phi = _harmonic.fourier_boundary(pc, ps)
    base_psi = _harmonic.fourier_boundary(qc, qs)
    phi = _harmonic.BoundaryFunction(_tapered(base_phi), base_phi.bound)
    psi = _harmonic.BoundaryFunction(_tapered(base_psi), base_psi.bound)
    return phi, psi, amp


def _boundary_arrays(cfg: ExperimentConfig, lattice, mask):
    """Membrane boundary data: canonical profile plus angular perturbation.

    Interior (masked) values are zeroed so the solve starts from scratch and
    reruns are independent of the profile samples inside.
    """
    spec = _canonical_profile(str(cfg["profile"]), lattice.dim)
    stack = _solver.stack_from_profile(spec, lattice, mask=mask)
    arrays = [f.values.copy() for f in stack.fields]
    phi, psi, amp = _perturbations(cfg)
    if phi is not None:
        pts = lattice.points()
        theta = np.arctan2(pts[:, 1], pts[:, 0]) if lattice.dim == 2 else np.where(
            pts[:, 0] >= 0, 0.0, np.pi
        )
        du1 = (amp * phi(theta)).reshape(lattice.shape)
        du3 = (-amp * psi(theta)).reshape(lattice.shape)
        arrays[0] += du1
        arrays[2] += du3
        arrays[1] = -arrays[0] - arrays[2]
    for a in arrays:
        a[mask] = 0.0
    return arrays, spec, (phi, psi, amp)


def _solve(cfg: ExperimentConfig, forces=None):
    lattice = make_lattice(int(cfg["dim"]), float(cfg["half_width"]), float(cfg["spacing"]))
    mask = lattice.ball_mask()
    arrays, spec, pert = _boundary_arrays(cfg, lattice, mask)
    if forces is None:
        forces = [1.0, 0.0, -1.0]
    prob = _solver.MembraneProblem(
        forces=forces,
        lattice=lattice,
        boundary_values=arrays,
        mask=mask,
        tolerance=float(cfg["tolerance"]),
        max_sweeps=int(cfg["max_sweeps"]) or None,
    )
    stack, report = _solver.solve_membranes(prob)
    if not report.converged:
        raise ExperimentError("membrane solve did not converge within max_sweeps")
    return stack, report, spec, pert


def _intersection_points(stack, inner_radius: float):
    """Clustered Gamma_1 cap Gamma_2 points inside the inner ball."""
    lat = stack.lattice
    h = lat.spacing
    contact = _fb.contact_sets(stack)
    g1 = _fb.extract_gamma(contact[0], lat, "Gamma1")
    g2 = _fb.extract_gamma(contact[1], lat, "Gamma2")
    if len(g1) == 0 or len(g2) == 0:
        return [], g1, g2
    # with contact tolerance h^2 each discrete contact set can overshoot the
    # continuum free boundary by ~h, so coincident boundaries report gamma
    # edges up to ~3h apart
    pts = []
    for p in g1.points:
        d = np.linalg.norm(g2.points - p, axis=1).min()
        if d <= 3.0 * h and np.linalg.norm(p) <= inner_radius:
            pts.append(0.5 * (p + g2.points[np.argmin(np.linalg.norm(g2.points - p, axis=1))]))
    if not pts:
        return [], g1, g2
    pts = np.asarray(pts)
    # greedy clustering at 4h so one physical intersection reports once
    chosen = []
    for p in pts[np.argsort(np.linalg.norm(pts, axis=1))]:
        if all(np.linalg.norm(p - q) > 4 * h for q in chosen):
            chosen.append(p)
    return chosen, g1, g2


def _limit_direction(stack, center, radii_fit):
    """Limiting normal of Gamma_1 from per-scale fits via the 1/|log r| law.

    The fitted u-normal drifts like theta(r) = theta_lim + c / |log r|;
    extrapolate from the two smallest reliable scales.
    """
    u, w = stack.pair_view()
    fits = []
    for r in radii_fit:
        f = _fb.fit_flatness(u, w, center, r, "R")
        fits.append((r, f.alpha.angle()))
    (r1, t1), (r2, t2) = fits[-2], fits[-1]  # two smallest scales
    L1, L2 = -np.log(r1), -np.log(r2)
    denom = 1.0 / L1 - 1.0 / L2
    if abs(denom) < 1e-12:
        theta_lim = t2
    else:
        c = (t1 - t2) / denom
        theta_lim = t2 - c / L2
    return float(theta_lim)


def _width_rows(stack, center, direction_theta, radii):
    """Gamma_1 width rows about the given normal, offset de-biased.

    The offset is the median projection of the gamma points inside the
    smallest radius; it removes the uniform ~1.4h shift the finite contact
    tolerance imprints on the extracted edge midpoints.
    """
    contact = _fb.contact_sets(stack)
    g1 = _fb.extract_gamma(contact[0], stack.lattice, "Gamma1")
    recentered = _fb.GammaSet(points=g1.points - np.asarray(center), label="Gamma1")
    d = Direction.from_angle(direction_theta)
    offset = 0.0
    if len(recentered.points):
        dist = np.linalg.norm(recentered.points, axis=1)
        small = dist <= min(radii)
        if small.any():
            offset = float(np.median(recentered.points[small] @ d.components))
    return _fb.width_profile(recentered, d, offset, radii), g1


def _band_verdicts(rows, h):
    """(clog_in_band, linear_spread_fails, n_valid) for width rows.

    Rows with width below one cell are unresolvable and excluded.
    """
    valid = [(r, wdt, c3, c4) for (r, wdt, c3, c4) in rows if np.isfinite(wdt) and wdt > h]
    if len(valid) < VERDICT["min_scales"]:
        return False, False, len(valid)
    clog = np.array([c3 for (_, _, c3, _) in valid])
    lin = np.array([c4 for (_, _, _, c4) in valid])
    clog_ok = bool(clog.max() / clog.min() <= VERDICT["clog_band_max"])
    lin_fail = bool(lin.max() / lin.min() > VERDICT["linear_band_max"])
    return clog_ok, lin_fail, len(valid)


# ---------------------------------------------------------------------------
# experiments


def _exp_energy_table(cfg: ExperimentConfig) -> ReportBundle:
    dim = int(cfg["dim"])
    spacing = float(cfg["spacing"])
    tab = _energy.energy_table(dim, spacing, seed=int(cfg["seed"]))
    targets = (1.0, 1.5, 1.75, 2.0)
    rows = [
        ("SH", tab.W0, tab.ratios[0]),
        ("UH", tab.W1, tab.ratios[1]),
        ("hybrid", tab.W2, tab.ratios[2]),
        ("parabola", tab.W3, tab.ratios[3]),
    ]
    ratio_err = max(abs(r - t) for r, t in zip(tab.ratios, targets))
    spread = max(tab.spreads.values())
    passed = ratio_err <= VERDICT["energy_ratio_tol"] and spread <= VERDICT["energy_spread_tol"]
    summary = {
        "W": {"W0": tab.W0, "W1": tab.W1, "W2": tab.W2, "W3": tab.W3},
        "ratios": list(tab.ratios),
        "max_ratio_error": ratio_err,
        "family_spreads": tab.spreads,
        "verdicts": {"ratios_within_tol": passed},
    }
    return ReportBundle("energy-table", dict(cfg.values),
                        {"table": (["family", "W", "ratio"], rows)}, summary, passed)


def _exp_clog_width(cfg: ExperimentConfig) -> ReportBundle:
    if int(cfg["dim"]) != 2:
        raise ConfigError("clog-width runs in dimension 2")
    stack, report, _, _ = _solve(cfg)
    h = stack.lattice.spacing
    inner = float(cfg["inner_radius"])
    points, g1, g2 = _intersection_points(stack, inner)
    if not points:
        raise ExperimentError("no free-boundary intersection found in the inner ball")
    p_star = points[0]
    fit_radii = sorted({max(8 * h, r) for r in (0.2, 0.1)}, reverse=True)
    theta_lim = _limit_direction(stack, p_star, fit_radii)
    radii = [float(r) for r in cfg["radii"]] or [0.09, 0.18, 0.36, 0.72]
    radii = [r for r in sorted(radii) if np.abs(p_star).max() + r <= 1.0 - 1e-9]
    rows, g1_full = _width_rows(stack, p_star, theta_lim, radii)
    clog_ok, lin_fail, n_valid = _band_verdicts(rows, h)
    passed = clog_ok and lin_fail
    summary = {
        "intersection_point": [float(v) for v in p_star],
        "theta_limit": theta_lim,
        "sweeps": report.sweeps,
        "n_valid_scales": n_valid,
        "verdicts": {"clog_band_bounded": clog_ok, "linear_band_fails": lin_fail},
    }
    tables = {
        "width": (["r", "width", "width_clog", "width_over_r"], rows),
        "gamma1": (_gamma_header(2), [tuple(p) + ("Gamma1",) for p in g1_full.points]),
    }
    return ReportBundle("clog-width", dict(cfg.values), tables, summary, passed)


def _gamma_header(dim):
    return (["x1", "label"] if dim == 1 else ["x1", "x2", "label"])


def _exp_generic_regular(cfg: ExperimentConfig) -> ReportBundle:
    if int(cfg["dim"]) != 2:
        raise ConfigError("generic-regular runs in dimension 2")
    phi, psi, amp = _perturbations(cfg)
    if phi is None:
        raise ConfigError("generic-regular needs perturb_amplitude > 0")
    g1_phi, g2_phi = _harmonic.gamma_functionals(phi)
    g1_psi, g2_psi = _harmonic.gamma_functionals(psi)
    d1, d2 = abs(g1_phi - g1_psi), abs(g2_phi - g2_psi)
    stack, report, _, _ = _solve(cfg)
    h = stack.lattice.spacing
    inner = float(cfg["inner_radius"])
    sweep = [float(r) for r in cfg["radii"]] or [0.1, 0.2, 0.3, 0.4, 0.5]
    all_points, g1s, g2s = _intersection_points(stack, max(sweep))
    sweep_rows = [
        (r, sum(1 for p in all_points if np.linalg.norm(p) <= r)) for r in sorted(sweep)
    ]
    inside = [p for p in all_points if np.linalg.norm(p) <= inner]
    observed = 1 if not inside else 2
    summary = {
        "gamma1_phi": g1_phi, "gamma2_phi": g2_phi,
        "gamma1_psi": g1_psi, "gamma2_psi": g2_psi,
        "gamma1_gap": d1, "gamma2_gap": d2,
        "separation_radius_estimate": (2.0 * d1 / d2 if d2 > 0 else np.inf),
        "observed_alternative": observed,
        "n_intersections_inner": len(inside),
        "sweeps": report.sweeps,
    }
    tables = {
        "radius_sweep": (["r", "n_intersections"], sweep_rows),
    }
    passed = True
    if observed == 2:
        p_star = inside[0]
        fit_radii = sorted({max(8 * h, r) for r in (0.2, 0.1)}, reverse=True)
        theta_lim = _limit_direction(stack, p_star, fit_radii)
        radii = [r for r in (0.09, 0.18, 0.36, 0.72)
                 if np.abs(p_star).max() + r <= 1.0 - 1e-9]
        rows, _ = _width_rows(stack, p_star, theta_lim, radii)
        clog_ok, lin_fail, n_valid = _band_verdicts(rows, h)
        tables["width"] = (["r", "width", "width_clog", "width_over_r"], rows)
        summary["verdicts"] = {
            "clog_band_bounded": clog_ok,
            "linear_band_fails": lin_fail,
            "n_valid_scales": n_valid,
        }
        passed = clog_ok and lin_fail
    else:
        summary["verdicts"] = {"intersection_free_inner_ball": True}
    return ReportBundle("generic-regular", dict(cfg.values), tables, summary, passed)


def _exp_sing1_instability(cfg: ExperimentConfig) -> ReportBundle:
    stack, report, _, pert = _solve(cfg)
    h = stack.lattice.spacing
    inner = float(cfg["inner_radius"])
    amp = pert[2]
    points, g1, g2 = _intersection_points(stack, inner)
    radii = [float(r) for r in cfg["radii"]] or [max(8 * h, 0.15), 0.25]

    def classify(p):
        try:
            return _classify.classify_point(stack, p, radii)
        except _classify.ClassifyError:
            return _classify.PointClass("Undetermined", np.nan, None, np.nan, np.asarray(p))

    classes = _pmap(classify, points)
    counts = {}
    for pc in classes:
        counts[pc.verdict] = counts.get(pc.verdict, 0) + 1
    n_sing1 = counts.get("Sing1", 0)
    if amp > 0:
        passed = n_sing1 == 0
    else:
        center = next((pc for pc in classes if np.linalg.norm(pc.center) <= 2 * h), None)
        passed = center is not None and center.verdict == "Sing1"
    rows = [
        tuple(float(v) for v in pc.center) + (pc.verdict, pc.energy, pc.epsilon)
        for pc in classes
    ]
    dim = stack.lattice.dim
    header = (["x1"] if dim == 1 else ["x1", "x2"]) + ["verdict", "energy", "eps"]
    summary = {
        "perturb_amplitude": amp,
        "counts": counts,
        "n_points": len(points),
        "sweeps": report.sweeps,
        "verdicts": {"no_sing1" if amp > 0 else "center_is_sing1": passed},
    }
    return ReportBundle("sing1-instability", dict(cfg.values),
                        {"points": (header, rows)}, summary, passed)


def _parabola_stack_mats(forces, dim, spread):
    """Ordered diagonal quadratic stack with trace(A_k) = f_k."""
    N = len(forces)
    mats = []
    for k, f in enumerate(forces):
        s = spread * (N - 1 - k) / max(N - 1, 1)
        if dim == 1:
            mats.append(SymMatrix([[float(f)]]))
        else:
            mats.append(SymMatrix(np.diag([f / 2.0 + s, f / 2.0 - s])))
    return mats


def _exp_monneau(cfg: ExperimentConfig) -> ReportBundle:
    dim = int(cfg["dim"])
    forces = [float(f) for f in cfg["forces"]]
    lattice = make_lattice(dim, float(cfg["half_width"]), float(cfg["spacing"]))
    mask = lattice.ball_mask()
    mats = _parabola_stack_mats(forces, dim, float(cfg["parabola_spread"]))
    exact = _solver.stack_from_quadratics(mats, forces, lattice, mask=mask)
    arrays = [f.values.copy() for f in exact.fields]
    for a in arrays:
        a[mask] = 0.0
    prob = _solver.MembraneProblem(
        forces=forces, lattice=lattice, boundary_values=arrays, mask=mask,
        tolerance=float(cfg["tolerance"]),
        max_sweeps=int(cfg["max_sweeps"]) or None,
    )
    stack, report = _solver.solve_membranes(prob)
    if not report.converged:
        raise ExperimentError("membrane solve did not converge within max_sweeps")
    radii = [float(r) for r in cfg["radii"]] or [0.1, 0.2, 0.3, 0.4, 0.5]
    series = _energy.monneau_series(stack, mats, np.zeros(dim), sorted(radii))
    passed = series.monotone
    rows = list(zip(series.radii, series.values, ["Monneau"] * len(series.radii)))
    summary = {
        "forces": forces,
        "monneau_values": [float(v) for v in series.values],
        "slack": series.slack,
        "sweeps": report.sweeps,
        "verdicts": {"monneau_nondecreasing": passed},
    }
    return ReportBundle("monneau-sing2", dict(cfg.values),
                        {"series": (["r", "value", "kind"], rows)}, summary, passed)


def _exp_obstacle_flatness(cfg: ExperimentConfig) -> ReportBundle:
    dim = int(cfg["dim"])
    lattice = make_lattice(dim, float(cfg["half_width"]), float(cfg["spacing"]))
    mask = lattice.ball_mask()
    h = lattice.spacing
    e1 = Direction([1.0] + [0.0] * (dim - 1))
    spec = ProfileSpec.obstacle_half(e1, float(cfg["offset"]))
    pts = lattice.points()
    vals = np.asarray(_profile_scalar(spec, pts), float).reshape(lattice.shape)
    amp = float(cfg["perturb_amplitude"])
    if amp > 0 and dim == 2:
        theta = np.arctan2(pts[:, 1], pts[:, 0]).reshape(lattice.shape)
        vals = vals + amp * (1.0 + np.cos(theta))  # keeps the data non-negative
    vals[mask] = 0.0
    fld, report = _solver.solve_obstacle(vals, lattice,
                                         tolerance=float(cfg["tolerance"]),
                                         mask=mask)
    contact = (fld.values <= h * h) & mask
    gamma = _fb.extract_gamma(contact, lattice, "dGamma")
    if len(gamma) == 0:
        raise ExperimentError("no obstacle free boundary detected")
    p_star = gamma.points[np.argmin(np.linalg.norm(gamma.points, axis=1))]
    direction, a_fit, eps = _fb.fit_half_space(fld, p_star, min(0.4, 0.5 - np.abs(p_star).max()))
    recentered = _fb.GammaSet(points=gamma.points - p_star, label="dGamma")
    radii = [float(r) for r in cfg["radii"]] or [0.05, 0.1, 0.2, 0.4]
    rows = _fb.width_profile(recentered, direction, 0.0, sorted(radii))
    valid = [(r, wdt, c3, c4) for (r, wdt, c3, c4) in rows if np.isfinite(wdt)]
    decays = [
        b[3] <= max(VERDICT["obstacle_decay_factor"] * a[3], h)
        for a, b in zip(valid[1:], valid[:-1])
    ]
    passed = bool(decays and all(decays))
    summary = {
        "point": [float(v) for v in p_star],
        "fit_eps": eps,
        "sweeps": report.sweeps,
        "verdicts": {"graph_norm_decays": passed},
    }
    return ReportBundle("obstacle-flatness", dict(cfg.values),
                        {"width": (["r", "width", "width_clog", "width_over_r"], rows)},
                        summary, passed)


def _profile_scalar(spec, pts):
    from .profiles import eval_profile

    return eval_profile(spec, pts)


def _exp_aux_function(cfg: ExperimentConfig) -> ReportBundle:
    radii = [float(r) for r in cfg["radii"]] or [0.25, 0.125, 0.0625]
    tab = _harmonic.aux_remainder_check(radii)
    tab_nolog = _harmonic.aux_remainder_check(radii, a2_override=0.0)
    a1, a2 = tab.a1, tab.a2
    passed = tab.passed and not tab_nolog.passed and a1 > 0 and a2 > 0
    rows = [(r, c) for r, c in zip(tab.radii, tab.constants)]
    summary = {
        "A1": a1,
        "A2": a2,
        "band_ratio": tab.band_ratio,
        "log_slope": tab.log_slope,
        "log_slope_without_log_term": tab_nolog.log_slope,
        "verdicts": {
            "remainder_bounded": tab.passed,
            "log_term_necessary": not tab_nolog.passed,
        },
    }
    return ReportBundle("aux-function", dict(cfg.values),
                        {"remainder": (["r", "C"], rows)}, summary, passed)


EXPERIMENTS = {
    "energy-table": _exp_energy_table,
    "clog-width": _exp_clog_width,
    "generic-regular": _exp_generic_regular,
    "sing1-instability": _exp_sing1_instability,
    "monneau-sing2": _exp_monneau,
    "obstacle-flatness": _exp_obstacle_flatness,
    "aux-function": _exp_aux_function,
}


def run_experiment(config: ExperimentConfig) -> ReportBundle:
    """Run a registered experiment pipeline on a parsed config."""
    name = config.experiment
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {name!r}; registered: {', '.join(sorted(EXPERIMENTS))}"
        )
    return EXPERIMENTS[name](config)


# ---------------------------------------------------------------------------
# report writing


def _fmt12(x) -> str:
    return format(float(x), ".12g")


def _round_floats(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, float):
        return float(_fmt12(obj)) if np.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _round_floats(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_round_floats(v) for v in obj.tolist()]
    return obj


def write_report(bundle: ReportBundle, directory) -> list:
    """Write ``<dir>/<experiment>/<table>.csv`` files plus summary.json.

    Numbers carry 12 significant digits; row order is fixed by construction,
    so identical bundles serialize byte-identically.
    """
    base = Path(directory) / bundle.experiment
    base.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(bundle.tables):
        header, rows = bundle.tables[name]
        p = base / f"{name}.csv"
        with open(p, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                cells = [
                    c if isinstance(c, str) else _fmt12(c)
                    for c in row
                ]
                fh.write(",".join(cells) + "\n")
        paths.append(p)
    summary = {
        "experiment": bundle.experiment,
        "config": _round_floats(bundle.config),
        "passed": bool(bundle.passed),
        **_round_floats(bundle.summary),
    }
    p = base / "summary.json"
    with open(p, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# CLI


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="membrane-lab",
        description="Membrane-system experiment driver (deterministic CSV/JSON reports).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="flat key = value config file")
    p_val = sub.add_parser("validate", help="parse and echo a config")
    p_val.add_argument("config")
    sub.add_parser("list-experiments", help="print registered experiment names")
    args = parser.parse_args(argv)

    if args.command == "list-experiments":
        for name in sorted(EXPERIMENTS):
            print(name)
        return 0
    try:
        cfg = parse_config(args.config)
    except (ConfigError, OSError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1
    if args.command == "validate":
        if cfg.experiment not in EXPERIMENTS:
            print(f"error: unknown experiment {cfg.experiment!r}", file=sys.stderr)
            return 1
        print(json.dumps({"experiment": cfg.experiment, **_round_floats(cfg.values)},
                         indent=2, sort_keys=True))
        return 0
    try:
        bundle = run_experiment(cfg)
        paths = write_report(bundle, cfg["outdir"])
    except (ConfigError, ExperimentError, ValueError, OSError) as ex:
        # ValueError covers module precondition violations (solver ordering,
        # hull containment, ...), surfaced with the failing message
        print(f"error: {ex}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0 if bundle.passed else 2


if __name__ == "__main__":
    sys.exit(main())
