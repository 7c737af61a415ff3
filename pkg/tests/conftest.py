import numpy as np
import pytest

from membranelab.grid import make_lattice
from membranelab.profiles import Direction, ProfileSpec, SymMatrix
from membranelab.solver import MembraneProblem, solve_membranes, stack_from_profile


def canonical_spec(name, dim):
    e1 = Direction([1.0] + [0.0] * (dim - 1))
    eye = np.eye(dim)
    return {
        "SH": ProfileSpec.sh(e1),
        "UH": ProfileSpec.uh(e1),
        "parabola": ProfileSpec.parabola(SymMatrix(eye / dim), SymMatrix(-eye / dim)),
        "hybrid": ProfileSpec.hybrid_eb(e1, SymMatrix(eye / dim)),
    }[name]


def solve_profile_problem(spec, dim, spacing, forces=(1.0, 0.0, -1.0), tolerance=1e-10):
    """Solve with boundary data sampled from ``spec``; interior starts at zero."""
    lat = make_lattice(dim, 1.0, spacing)
    exact = stack_from_profile(spec, lat)
    arrays = [f.values.copy() for f in exact.fields]
    for a in arrays:
        a[exact.mask] = 0.0
    prob = MembraneProblem(forces=np.asarray(forces, float), lattice=lat,
                           boundary_values=arrays, tolerance=tolerance)
    stack, report = solve_membranes(prob)
    return stack, report, exact


@pytest.fixture(scope="session")
def solved():
    """Session cache of canonical solved instances keyed (name, dim, spacing)."""
    cache = {}

    def get(name, dim, spacing):
        key = (name, dim, float(spacing))
        if key not in cache:
            spec = canonical_spec(name, dim)
            cache[key] = solve_profile_problem(spec, dim, spacing)
        return cache[key]

    return get
