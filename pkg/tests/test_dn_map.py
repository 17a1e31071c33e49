import numpy as np
import pytest

from doublephase.dn_map import (DNQuery, PLapCache, pairing, pairing_plap)
from doublephase.errors import FieldMismatchError
from doublephase.forward import ProblemSpec, plaplace_spec, solve_dirichlet
from doublephase.linear_elliptic import harmonic_extension, solve_V
from doublephase.mesh import NodalField, boundary_values
from doublephase.tensorops import ExponentPair
from tests.conftest import gaussian_bump


def test_dirichlet_energy_sign(mesh32):
    spec = plaplace_spec(mesh32, 2.0)
    f = boundary_values(mesh32, lambda x, y: np.cos(np.pi * x) * y)
    val = pairing(DNQuery(spec, f, f))
    assert val > 0.0


def test_plane_wave_unit_pairing(mesh32):
    # u = z.x with |z| = 1: <L_0 f, f> = |Omega| |z|^p = 1
    spec = plaplace_spec(mesh32, 3.0, delta=0.0)
    f = boundary_values(mesh32, lambda x, y: x)
    assert pairing(DNQuery(spec, f, f)) == pytest.approx(1.0, abs=1e-10)


def test_extension_independence(mesh32, rng):
    spec = ProblemSpec(ExponentPair(2.0, 3.0), gaussian_bump(mesh32))
    f = boundary_values(mesh32, lambda x, y: x + 0.3 * np.sin(np.pi * y))
    g = boundary_values(mesh32, lambda x, y: y - 0.2 * x)
    omega1 = harmonic_extension(mesh32, g)
    bump = np.zeros(mesh32.n_nodes)
    bump[mesh32.interior_nodes] = rng.normal(size=len(mesh32.interior_nodes))
    omega2 = NodalField(mesh32, omega1.values + bump)
    sol = solve_dirichlet(spec, f)
    v1 = pairing(DNQuery(spec, f, g, omega1), solution=sol)
    v2 = pairing(DNQuery(spec, f, g, omega2), solution=sol)
    assert abs(v1 - v2) <= 10 * spec.newton_tol * max(
        1.0, np.abs(bump).max()) * max(1.0, abs(v1))


def test_omega_trace_validated(mesh16):
    spec = plaplace_spec(mesh16, 2.0)
    f = boundary_values(mesh16, lambda x, y: x)
    g = boundary_values(mesh16, lambda x, y: y)
    with pytest.raises(FieldMismatchError):
        DNQuery(spec, f, g, NodalField.zeros(mesh16))


def test_pairing_linear_in_g(mesh32):
    spec = ProblemSpec(ExponentPair(2.5, 1.5), gaussian_bump(mesh32))
    f = boundary_values(mesh32, lambda x, y: x - y)
    g1 = boundary_values(mesh32, lambda x, y: np.sin(np.pi * x))
    g2 = boundary_values(mesh32, lambda x, y: y * y)
    sol = solve_dirichlet(spec, f)
    lhs = pairing(DNQuery(spec, f, g1 + 2.0 * g2), solution=sol)
    rhs = (pairing(DNQuery(spec, f, g1), solution=sol)
           + 2.0 * pairing(DNQuery(spec, f, g2), solution=sol))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


def test_self_pairing_nonnegative(mesh32, rng):
    spec = ProblemSpec(ExponentPair(1.5, 2.5), gaussian_bump(mesh32))
    for _ in range(3):
        c = rng.normal(size=2)
        f = boundary_values(
            mesh32, lambda x, y: c[0] * x + c[1] * np.cos(np.pi * y))
        assert pairing(DNQuery(spec, f, f)) >= -10 * spec.newton_tol


def test_monotone_in_coefficient(mesh32):
    f = boundary_values(mesh32, lambda x, y: x + 0.2 * np.sin(2 * np.pi * y))
    a1 = gaussian_bump(mesh32, amplitude=2.0)
    a2 = gaussian_bump(mesh32, amplitude=0.5)
    v1 = pairing(DNQuery(ProblemSpec(ExponentPair(2, 3), a1), f, f))
    v2 = pairing(DNQuery(ProblemSpec(ExponentPair(2, 3), a2), f, f))
    assert v1 >= v2 - 1e-8


def test_plap_scaling_shortcut(mesh32):
    p = 3.0
    cache = PLapCache(mesh32, p)
    f = boundary_values(mesh32, lambda x, y: x + 0.1 * np.cos(np.pi * y))
    g = boundary_values(mesh32, lambda x, y: y)
    base = pairing_plap(mesh32, p, f, g, 1.0, cache)
    spec0 = plaplace_spec(mesh32, p)
    direct = pairing(DNQuery(spec0, f, g))
    assert base == pytest.approx(direct, rel=1e-12)
    # 2^{p-1} = 4
    assert pairing_plap(mesh32, p, f, g, 2.0, cache) == pytest.approx(
        4.0 * base, rel=1e-12)
    # re-solve oracle across small scales
    for eps in (1e-1, 1e-2, 1e-3):
        direct = pairing(DNQuery(spec0, eps * f, g))
        shortcut = pairing_plap(mesh32, p, f, g, eps, cache)
        assert abs(shortcut - direct) <= 10 * spec0.newton_tol * max(
            abs(shortcut), eps ** (p - 1))
    # odd homogeneity for negative scale
    assert pairing_plap(mesh32, p, f, g, -1.0, cache) == pytest.approx(
        -base, rel=1e-12)


def test_v_extension_matches_harmonic_extension_pairing(mesh32):
    # extension-independence with a non-harmonic extension produced by
    # the linearized solver
    spec = ProblemSpec(ExponentPair(2.0, 3.0), gaussian_bump(mesh32))
    f = boundary_values(mesh32, lambda x, y: x)
    g = boundary_values(mesh32, lambda x, y: np.cos(np.pi * x) + y)
    v0 = NodalField.from_function(mesh32, lambda x, y: x)
    omega = solve_V(3.0, v0, g)
    sol = solve_dirichlet(spec, f)
    v1 = pairing(DNQuery(spec, f, g), solution=sol)
    v2 = pairing(DNQuery(spec, f, g, omega), solution=sol)
    assert abs(v1 - v2) <= 1e-8 * max(1.0, abs(v1))
