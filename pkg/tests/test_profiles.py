import numpy as np
import pytest

from membranelab.profiles import (
    Direction,
    ProfileError,
    ProfileSpec,
    SymMatrix,
    eval_approx,
    eval_profile,
    validate_spec,
)

E1_2D = Direction([1.0, 0.0])
E1_1D = Direction([1.0])


def test_direction_norm_enforced():
    with pytest.raises(ProfileError):
        Direction([1.0, 0.5])
    d = Direction.normalized([3.0, 4.0])
    assert np.allclose(d.components, [0.6, 0.8])


def test_symmatrix_storage_symmetry():
    m = SymMatrix(np.array([[1.0, 2.0], [2.0, 3.0]]))
    assert np.array_equal(m.full, m.full.T)
    assert m.trace == pytest.approx(4.0)


def test_validate_parabola_trace_failure():
    spec = ProfileSpec.parabola(SymMatrix(np.eye(2) / 2), SymMatrix(np.zeros((2, 2))))
    rep = validate_spec(spec)
    assert not rep.ok
    assert any("trace(B)" in c.name for c in rep.failures())


def test_validate_sh_passes():
    assert validate_spec(ProfileSpec.sh(E1_2D)).ok


def test_validate_hybrid_psd_margin():
    # 3B - e(x)e = I - e(x)e has eigenvalues {0, 1}: psd check passes at the
    # boundary; the trace-1 constraint correctly rejects B = I/3 in 2D
    spec = ProfileSpec.hybrid_eb(Direction.from_angle(0.7), SymMatrix(np.eye(2) / 3))
    rep = validate_spec(spec)
    by_name = {c.name: c for c in rep.checks}
    assert by_name["3B - e(x)e psd"].passed
    assert abs(by_name["3B - e(x)e psd"].margin) < 1e-10
    assert not by_name["trace(B) = 1"].passed


def test_validate_hybrid_valid_instance():
    spec = ProfileSpec.hybrid_eb(Direction.from_angle(0.7), SymMatrix(np.eye(2) / 2))
    assert validate_spec(spec).ok


def test_eval_sh_at_unit_point():
    assert eval_profile(ProfileSpec.sh(E1_2D), np.array([1.0, 0.0])) == pytest.approx(
        (0.5, 0.0, -0.5)
    )


def test_eval_uh_at_unit_point():
    u1, u2, u3 = eval_profile(ProfileSpec.uh(E1_2D), np.array([1.0, 0.0]))
    assert (u1, u2, u3) == pytest.approx((0.25, 0.25, -0.5))


def test_eval_parabola_at_ones():
    spec = ProfileSpec.parabola(SymMatrix(np.eye(2) / 2), SymMatrix(-np.eye(2) / 2))
    assert eval_profile(spec, np.array([1.0, 1.0])) == pytest.approx((0.5, 0.0, -0.5))


def test_eval_triple_sum_zero():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-1, 1, size=(50, 2))
    for spec in (
        ProfileSpec.sh(Direction.from_angle(0.4)),
        ProfileSpec.uh(Direction.from_angle(-1.1)),
        ProfileSpec.hybrid_eb(E1_2D, SymMatrix(np.eye(2) / 2)),
        ProfileSpec.parabola(SymMatrix(np.eye(2) / 2), SymMatrix(-np.eye(2) / 2)),
    ):
        u1, u2, u3 = eval_profile(spec, pts)
        assert np.abs(u1 + u2 + u3).max() < 1e-14


def test_eval_invalid_spec_raises():
    bad = ProfileSpec.parabola(SymMatrix(np.eye(2)), SymMatrix(-np.eye(2)))
    with pytest.raises(ProfileError):
        eval_profile(bad, np.array([0.0, 0.0]))


def test_uh_ordering_and_contact_sides():
    # equality sets: u1 = u2 on {x.e >= 0}, u2 = u3 on {x.e <= 0}
    e = Direction.from_angle(0.3)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, size=(200, 2))
    u1, u2, u3 = eval_profile(ProfileSpec.uh(e), pts)
    assert np.all(u1 >= u2 - 1e-15) and np.all(u2 >= u3 - 1e-15)
    t = e.dot(pts)
    assert np.abs((u1 - u2)[t >= 0]).max() == 0.0
    assert np.abs((u2 - u3)[t <= 0]).max() == 0.0
    assert np.all((u1 - u2)[t < -1e-3] > 0)
    assert np.all((u2 - u3)[t > 1e-3] > 0)


# --- approximate solutions ----------------------------------------------


def test_approx1_1d_kink_values():
    # both Psi branches agree at the kink 2b - a
    phi, psi = eval_approx(1, E1_1D, E1_1D, 0.0, 0.1, np.array([0.2]))
    assert phi == pytest.approx(0.02, abs=1e-15)
    assert psi == pytest.approx(0.01, abs=1e-15)


def test_approx1_degenerates_to_pair():
    alpha = Direction.from_angle(0.0)
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1, 1, size=(100, 2))
    phi, psi = eval_approx(1, alpha, alpha, 0.05, 0.05, pts)
    P, Q = eval_profile(ProfileSpec.half_pair_r(alpha, alpha, 0.05, 0.05), pts)
    assert np.abs(phi - P).max() < 1e-15
    assert np.abs(psi - Q).max() < 1e-15


def test_approx2_1d_kink_value():
    phi, _ = eval_approx(2, E1_1D, E1_1D, 0.1, 0.0, np.array([0.2]))
    assert phi == pytest.approx(0.015, abs=1e-15)


def test_approx2_matches_pair_when_ordered():
    # a <= b puts every point in the exact-pair region
    alpha = Direction.from_angle(0.0)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-1, 1, size=(100, 2))
    phi, psi = eval_approx(2, alpha, alpha, -0.03, 0.08, pts)
    P, Q = eval_profile(ProfileSpec.half_pair_s(alpha, alpha, -0.03, 0.08), pts)
    assert np.abs(phi - P).max() < 1e-15
    assert np.abs(psi - Q).max() < 1e-15


def test_approx_frame_violation_raises():
    with pytest.raises(ProfileError):
        eval_approx(1, Direction.from_angle(0.3), Direction.from_angle(0.2), 0, 0, np.zeros(2))


def _sym_frame_pair(rng, gap_max=0.2):
    half = rng.uniform(0, gap_max / 2)
    return Direction.from_angle(half), Direction.from_angle(-half)


@pytest.mark.parametrize("case", [1, 2])
def test_approx_c11_matching(case):
    # values and first differences stay O(h) across region interfaces
    rng = np.random.default_rng(6)
    h = 1e-4
    for _ in range(20):
        alpha, beta = _sym_frame_pair(rng)
        a, b = rng.uniform(-0.1, 0.1, size=2)
        x = rng.uniform(-1, 1, size=(400, 2))
        for dx in (np.array([h, 0.0]), np.array([0.0, h])):
            f0 = np.stack(eval_approx(case, alpha, beta, a, b, x))
            f1 = np.stack(eval_approx(case, alpha, beta, a, b, x + dx))
            f2 = np.stack(eval_approx(case, alpha, beta, a, b, x + 2 * dx))
            second = np.abs(f2 - 2 * f1 + f0) / h**2
            # bounded second differences = C^{1,1}; kinks give O(1/h) spikes
            assert second.max() < 50.0


@pytest.mark.parametrize("case", [1, 2])
def test_approx_error_bound_single_constant(case):
    # max |(Phi,Psi) - (P,Q)| <= C (|alpha-beta|^2 + |a-b|^2) with one C:
    # the fitted constants stay within a tight band over generic draws
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(100):
        half = rng.uniform(0.025, 0.1)
        alpha = Direction.from_angle(half)
        beta = Direction.from_angle(-half)
        gap = np.linalg.norm(alpha.components - beta.components)
        a = rng.uniform(-0.05, 0.05)
        d = rng.uniform(0.05, 0.2)
        b = a - d if case == 2 else a + d * rng.choice([-1, 1])
        x = rng.uniform(-1, 1, size=(500, 2))
        phi, psi = eval_approx(case, alpha, beta, a, b, x)
        maker = ProfileSpec.half_pair_r if case == 1 else ProfileSpec.half_pair_s
        P, Q = eval_profile(maker(alpha, beta, a, b), x)
        mis = max(np.abs(phi - P).max(), np.abs(psi - Q).max())
        ratios.append(mis / (gap**2 + (a - b) ** 2))
    ratios = np.asarray(ratios)
    assert ratios.max() / ratios.min() <= 10.0
    assert ratios.max() < 10.0  # a uniform dimensional constant exists
