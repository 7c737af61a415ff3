"""Closed-form solutions of the three-membrane system and their relatives.

Implements the homogeneous profile families (stable/unstable half-space,
hybrid, parabola), the translated/rotated half-space pairs used for
flatness classes, and the piecewise-quadratic approximate solution pairs
(Phi, Psi) built from them.  Everything here is an exact pointwise formula;
validation of the algebraic constraints on the parameters is a separate
reporting operation so callers can inspect violations.

Conventions: the middle membrane is always u2 = -u1 - u3 (zero-sum
normalization for forces (1, 0, -1)); the pair view of a triple is
(u, w) = (u1, -u3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Direction",
    "SymMatrix",
    "ProfileSpec",
    "ConstraintCheck",
    "ValidationReport",
    "validate_spec",
    "eval_profile",
    "eval_approx",
]

_UNIT_TOL = 1e-12
_PSD_TOL = -1e-10
_FRAME_TOL = 1e-10


class ProfileError(ValueError):
    """Invalid profile parameters."""


@dataclass(frozen=True)
class Direction:
    """Unit vector in R^d (norm within 1e-12 of 1)."""

    components: np.ndarray

    def __init__(self, components):
        c = np.asarray(components, float).reshape(-1)
        object.__setattr__(self, "components", c)
        n = float(np.linalg.norm(c))
        if abs(n - 1.0) > _UNIT_TOL:
            raise ProfileError(f"direction norm {n} not within {_UNIT_TOL} of 1")

    @classmethod
    def from_angle(cls, theta: float) -> "Direction":
        return cls(np.array([np.cos(theta), np.sin(theta)]))

    @classmethod
    def normalized(cls, components) -> "Direction":
        c = np.asarray(components, float).reshape(-1)
        n = np.linalg.norm(c)
        if n == 0:
            raise ProfileError("cannot normalize the zero vector")
        return cls(c / n)

    @property
    def dim(self) -> int:
        return self.components.size

    def angle(self) -> float:
        if self.dim == 1:
            return 0.0 if self.components[0] > 0 else np.pi
        return float(np.arctan2(self.components[1], self.components[0]))

    def dot(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, float) @ self.components


@dataclass(frozen=True)
class SymMatrix:
    """Symmetric d x d matrix stored by its upper triangle."""

    upper: tuple

    def __init__(self, entries):
        m = np.asarray(entries, float)
        if m.ndim == 2:
            if m.shape[0] != m.shape[1]:
                raise ProfileError("matrix must be square")
            iu = np.triu_indices(m.shape[0])
            up = tuple(m[iu])
        elif m.ndim == 1:
            up = tuple(m)  # already an upper triangle, row by row
        else:
            raise ProfileError("entries must be a matrix or an upper triangle")
        object.__setattr__(self, "upper", up)

    @property
    def dim(self) -> int:
        k = len(self.upper)
        d = int((np.sqrt(8 * k + 1) - 1) / 2)
        if d * (d + 1) != 2 * k:
            raise ProfileError(f"{k} entries is not an upper triangle")
        return d

    @property
    def full(self) -> np.ndarray:
        d = self.dim
        m = np.zeros((d, d))
        iu = np.triu_indices(d)
        m[iu] = self.upper
        m.T[iu] = self.upper
        return m

    @property
    def trace(self) -> float:
        d = self.dim
        m = self.full
        return float(np.trace(m))

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.full)[0])

    def quad(self, points: np.ndarray) -> np.ndarray:
        """x . M x, vectorized over rows of ``points``."""
        pts = np.atleast_2d(np.asarray(points, float))
        return np.einsum("ni,ij,nj->n", pts, self.full, pts)


# variant tags
SH = "SH"
UH = "UH"
HYBRID_EB = "HybridEB"
HYBRID_BE = "HybridBE"
PARABOLA = "Parabola"
HALF_PAIR_R = "HalfPairR"
HALF_PAIR_S = "HalfPairS"
APPROX1 = "Approx1"
APPROX2 = "Approx2"
OBSTACLE_HALF = "ObstacleHalf"

_TRIPLE_KINDS = (SH, UH, HYBRID_EB, HYBRID_BE, PARABOLA)
_PAIR_KINDS = (HALF_PAIR_R, HALF_PAIR_S, APPROX1, APPROX2)


@dataclass(frozen=True)
class ProfileSpec:
    """Tagged closed-form solution descriptor.

    Exactly the parameters belonging to ``kind`` are set; use the
    classmethod constructors.
    """

    kind: str
    e: Direction | None = None
    A: SymMatrix | None = None
    B: SymMatrix | None = None
    alpha: Direction | None = None
    beta: Direction | None = None
    a: float = 0.0
    b: float = 0.0

    @classmethod
    def sh(cls, e: Direction) -> "ProfileSpec":
        return cls(SH, e=e)

    @classmethod
    def uh(cls, e: Direction) -> "ProfileSpec":
        return cls(UH, e=e)

    @classmethod
    def hybrid_eb(cls, e: Direction, B: SymMatrix) -> "ProfileSpec":
        return cls(HYBRID_EB, e=e, B=B)

    @classmethod
    def hybrid_be(cls, B: SymMatrix, e: Direction) -> "ProfileSpec":
        return cls(HYBRID_BE, e=e, B=B)

    @classmethod
    def parabola(cls, A: SymMatrix, B: SymMatrix) -> "ProfileSpec":
        return cls(PARABOLA, A=A, B=B)

    @classmethod
    def half_pair_r(cls, alpha, beta, a, b) -> "ProfileSpec":
        return cls(HALF_PAIR_R, alpha=alpha, beta=beta, a=float(a), b=float(b))

    @classmethod
    def half_pair_s(cls, alpha, beta, a, b) -> "ProfileSpec":
        return cls(HALF_PAIR_S, alpha=alpha, beta=beta, a=float(a), b=float(b))

    @classmethod
    def approx1(cls, alpha, beta, a, b) -> "ProfileSpec":
        return cls(APPROX1, alpha=alpha, beta=beta, a=float(a), b=float(b))

    @classmethod
    def approx2(cls, alpha, beta, a, b) -> "ProfileSpec":
        return cls(APPROX2, alpha=alpha, beta=beta, a=float(a), b=float(b))

    @classmethod
    def obstacle_half(cls, alpha: Direction, a: float) -> "ProfileSpec":
        return cls(OBSTACLE_HALF, alpha=alpha, a=float(a))

    @property
    def is_triple(self) -> bool:
        return self.kind in _TRIPLE_KINDS

    @property
    def is_pair(self) -> bool:
        return self.kind in _PAIR_KINDS


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    margin: float  # >= 0 means satisfied; negative is the violation size


@dataclass(frozen=True)
class ValidationReport:
    spec: ProfileSpec
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def _unit_check(name, vec: Direction | None):
    if vec is None:
        return ConstraintCheck(name, False, -np.inf)
    m = _UNIT_TOL - abs(np.linalg.norm(vec.components) - 1.0)
    return ConstraintCheck(name, m >= 0, m)


def _trace_check(name, mat: SymMatrix, target: float, tol=1e-10):
    m = tol - abs(mat.trace - target)
    return ConstraintCheck(name, m >= 0, m)


def _psd_check(name, mat: np.ndarray):
    lam = float(np.linalg.eigvalsh(mat)[0])
    return ConstraintCheck(name, lam >= _PSD_TOL, lam)


def validate_spec(spec: ProfileSpec) -> ValidationReport:
    """Check the algebraic constraints of a profile family, with margins."""
    checks: list[ConstraintCheck] = []
    k = spec.kind
    if k in (SH, UH):
        checks.append(_unit_check("|e| = 1", spec.e))
    elif k in (HYBRID_EB, HYBRID_BE):
        checks.append(_unit_check("|e| = 1", spec.e))
        checks.append(_trace_check("trace(B) = 1", spec.B, 1.0))
        ee = np.outer(spec.e.components, spec.e.components)
        checks.append(_psd_check("3B - e(x)e psd", 3.0 * spec.B.full - ee))
    elif k == PARABOLA:
        checks.append(_trace_check("trace(A) = 1", spec.A, 1.0))
        checks.append(_trace_check("trace(B) = -1", spec.B, -1.0))
        checks.append(_psd_check("2A + B psd", 2.0 * spec.A.full + spec.B.full))
        checks.append(_psd_check("-(A + 2B) psd", -(spec.A.full + 2.0 * spec.B.full)))
    elif k in _PAIR_KINDS:
        checks.append(_unit_check("|alpha| = 1", spec.alpha))
        checks.append(_unit_check("|beta| = 1", spec.beta))
        if k in (APPROX1, APPROX2):
            m = _frame_margin(spec.alpha, spec.beta)
            checks.append(ConstraintCheck("symmetric frame", m >= -_FRAME_TOL, m))
    elif k == OBSTACLE_HALF:
        checks.append(_unit_check("|alpha| = 1", spec.alpha))
    else:
        raise ProfileError(f"unknown profile kind {k!r}")
    return ValidationReport(spec, tuple(checks))


def _frame_margin(alpha: Direction, beta: Direction) -> float:
    """Negative of the worst violation of alpha1 = beta1 > 0, alpha2 = -beta2 >= 0."""
    a, b = alpha.components, beta.components
    if alpha.dim == 1:
        return -max(abs(a[0] - 1.0), abs(b[0] - 1.0))
    viol = max(abs(a[0] - b[0]), abs(a[1] + b[1]), -a[0], -a[1])
    return -viol


def _maxsq(t):
    return np.maximum(t, 0.0) ** 2


def _minsq(t):
    return np.minimum(t, 0.0) ** 2


def eval_profile(spec: ProfileSpec, point):
    """Evaluate a profile at one point or many.

    Triple kinds return (u1, u2, u3); pair kinds return (P, Q) (resp.
    (Phi, Psi) for approximate pairs); ObstacleHalf returns a scalar field.
    """
    rep = validate_spec(spec)
    if not rep.ok:
        raise ProfileError(
            "invalid spec: " + "; ".join(c.name for c in rep.failures())
        )
    pts = np.asarray(point, float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    k = spec.kind
    if k == SH:
        t = spec.e.dot(pts)
        u1 = 0.5 * _maxsq(t)
        u3 = -u1
    elif k == UH:
        t = spec.e.dot(pts)
        u1 = 0.5 * _minsq(t) + 0.25 * _maxsq(t)
        u3 = -0.25 * _minsq(t) - 0.5 * _maxsq(t)
    elif k == HYBRID_EB:
        t = spec.e.dot(pts)
        q = spec.B.quad(pts)
        u1 = 0.25 * _maxsq(t) + 0.25 * q
        u3 = -0.5 * q
    elif k == HYBRID_BE:
        t = spec.e.dot(pts)
        q = spec.B.quad(pts)
        u1 = 0.5 * q
        u3 = -0.25 * _maxsq(t) - 0.25 * q
    elif k == PARABOLA:
        u1 = 0.5 * spec.A.quad(pts)
        u3 = 0.5 * spec.B.quad(pts)
    elif k == HALF_PAIR_R:
        P = 0.5 * _maxsq(spec.alpha.dot(pts) - spec.a)
        Q = 0.5 * _maxsq(spec.beta.dot(pts) - spec.b)
        return _squeeze_pair(P, Q, single)
    elif k == HALF_PAIR_S:
        ta = spec.alpha.dot(pts) - spec.a
        tb = spec.beta.dot(pts) - spec.b
        P = 0.5 * _minsq(ta) + 0.25 * _maxsq(tb)
        Q = 0.25 * _minsq(ta) + 0.5 * _maxsq(tb)
        return _squeeze_pair(P, Q, single)
    elif k in (APPROX1, APPROX2):
        case = 1 if k == APPROX1 else 2
        Phi, Psi = eval_approx(case, spec.alpha, spec.beta, spec.a, spec.b, pts)
        return _squeeze_pair(Phi, Psi, single)
    elif k == OBSTACLE_HALF:
        v = 0.5 * _maxsq(spec.alpha.dot(pts) - spec.a)
        return float(v[0]) if single else v
    else:  # pragma: no cover - guarded by validate_spec
        raise ProfileError(f"unknown profile kind {k!r}")
    u2 = -u1 - u3
    if single:
        return float(u1[0]), float(u2[0]), float(u3[0])
    return u1, u2, u3


def _squeeze_pair(P, Q, single):
    if single:
        return float(P[0]), float(Q[0])
    return P, Q


def eval_approx(case: int, alpha: Direction, beta: Direction, a: float, b: float, point):
    """Approximate solution pair (Phi, Psi) for half-space data, branch-wise.

    ``case`` 1 approximates the stable pair (P, Q) = half_pair_r(alpha, beta;
    a, b); ``case`` 2 the unstable pair half_pair_s.  Requires the symmetric
    frame alpha1 = beta1 > 0, alpha2 = -beta2 >= 0 (rotate first if needed).
    The three sign tests selecting the branches are
    {alpha2*x2 >= (a-b)/2}, {(2 alpha - beta).x < 2a - b} and
    {(2 beta - alpha).x < 2b - a}.
    """
    if _frame_margin(alpha, beta) < -_FRAME_TOL:
        raise ProfileError("alpha, beta do not satisfy the symmetric frame condition")
    pts = np.asarray(point, float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    a = float(a)
    b = float(b)
    ta = alpha.dot(pts) - a
    tb = beta.dot(pts) - b
    alpha2 = alpha.components[1] if alpha.dim > 1 else 0.0
    x2 = pts[:, 1] if alpha.dim > 1 else np.zeros(len(pts))
    region1 = alpha2 * x2 >= 0.5 * (a - b)
    kink = 2.0 * alpha2 * x2 - a + b
    test_a = (2.0 * alpha.dot(pts) - beta.dot(pts)) < 2.0 * a - b
    test_b = (2.0 * beta.dot(pts) - alpha.dot(pts)) < 2.0 * b - a

    if case == 1:
        Phi = np.where(
            region1,
            0.5 * _maxsq(ta),
            np.where(test_a, 0.25 * _maxsq(tb), 0.5 * ta**2 + 0.5 * kink**2),
        )
        Psi = np.where(
            region1,
            np.where(test_b, 0.25 * _maxsq(ta), 0.5 * tb**2 + 0.5 * kink**2),
            0.5 * _maxsq(tb),
        )
    elif case == 2:
        P = 0.5 * _minsq(ta) + 0.25 * _maxsq(tb)
        Q = 0.25 * _minsq(ta) + 0.5 * _maxsq(tb)
        Phi = np.where(
            region1,
            P,
            np.where(test_a, 0.5 * ta**2 + kink**2, 0.25 * tb**2 + 0.5 * kink**2),
        )
        Psi = np.where(
            region1,
            Q,
            np.where(test_b, 0.25 * ta**2 + 0.5 * kink**2, 0.5 * tb**2 + kink**2),
        )
    else:
        raise ProfileError(f"case must be 1 or 2, got {case}")
    return _squeeze_pair(Phi, Psi, single)
