import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointres.errors import DomainError, RegimeError
from pointres.potentials import (
    POSITIVE_MASS, REGISTRY_NAMES, ZERO_MASS, CouplingSchedule, RadialFunction, asymmetric_part,
    check_part, coupling_lambda, default_grid, dipole, disc, effective_potential, get_potential,
    halfdisc, phi_r, radial_part, rescale,
)


@pytest.mark.parametrize("name", ["disc", "halfdisc", "dipole", "phiR:1.5", "phiR:1.01", "-phiR:1.5"])
def test_registry_invariants(name):
    phi = get_potential(name).check()
    assert phi.support_radius > 0


def test_registry_names_and_errors():
    assert "disc" in REGISTRY_NAMES
    with pytest.raises(DomainError):
        get_potential("square")
    with pytest.raises(DomainError):
        get_potential("phiR:abc")
    with pytest.raises(DomainError):
        get_potential("-disc")
    with pytest.raises(DomainError):
        phi_r(1.0)


def test_masses():
    assert disc().mass() == pytest.approx(math.pi, rel=1e-13)
    assert halfdisc().mass() == pytest.approx(math.pi / 2, rel=1e-13)
    assert abs(phi_r(1.5).mass()) < 1e-12
    assert abs(dipole().mass()) < 1e-12


def test_zero_mass_check_rejects_mislabeled():
    from dataclasses import replace

    bad = replace(disc(), mass_class=ZERO_MASS)
    with pytest.raises(DomainError):
        bad.check()


def test_radial_average_of_halfdisc():
    r = np.array([0.2, 0.9, 1.2])
    np.testing.assert_allclose(halfdisc().radial_average(r), [0.5, 0.5, 0.0])


def test_radial_part_and_asymmetric_part():
    phi = dipole()
    bar = radial_part(phi)
    r = np.array([0.3, 0.7])
    np.testing.assert_allclose(bar(r), phi.radial_average(r), atol=1e-12)
    hat = asymmetric_part(phi)
    z = 0.6 * np.exp(1j * np.linspace(0, 2 * np.pi, 7, endpoint=False))
    np.testing.assert_allclose(hat(z), 0.6 * np.cos(np.angle(z)), atol=1e-12)
    assert abs(hat.mass()) < 1e-12


def test_check_part_radial_is_zero():
    chk = check_part(disc())
    assert np.all(chk.values == 0)


def test_check_part_halfdisc_mean():
    # the check part integrates to the energy of the asymmetric part
    from pointres.logenergy import energy_bracket

    chk = check_part(halfdisc())
    assert chk.integrate_area() == pytest.approx(energy_bracket(asymmetric_part(halfdisc())), rel=2e-3)


def test_radial_function_arithmetic():
    g = np.linspace(0, 1, 11)
    f = RadialFunction(g, g**2)
    h = f + 2.0 * f
    assert h(0.5) == pytest.approx(0.75)
    assert f.support_radius == 1.0
    assert RadialFunction(g, 1 - g).integrate_area() == pytest.approx(math.pi / 3, rel=1e-12)
    with pytest.raises(DomainError):
        RadialFunction(np.array([0.0, 0.0]), np.array([1.0, 1.0]))


def test_default_grid_doubles_breaks():
    g = default_grid(1.5, (1.0,))
    assert 1.0 in g and np.any(np.isclose(g, 1.0 + 1e-12, rtol=0, atol=1e-15))
    assert np.all(np.diff(g) > 0)


def test_coupling_schedules():
    z = CouplingSchedule(ZERO_MASS, 0.5, lam=1.0, lambda_prime=2.0)
    L = 4.0
    expected = math.pi / 3.0 * (0.5 / L + 2.0 / L**1.5 + 1.0 / L**2)
    assert coupling_lambda(z, math.exp(-L), 3.0) == pytest.approx(expected)
    p = CouplingSchedule(POSITIVE_MASS, 1.0, lam=0.5)
    assert coupling_lambda(p, math.exp(-L), math.pi) == pytest.approx(1 / L + 0.5 / L**2)
    with pytest.raises(DomainError):
        CouplingSchedule(ZERO_MASS, 1.5)
    with pytest.raises(DomainError):
        CouplingSchedule(POSITIVE_MASS, 1.0, lambda_prime=1.0)
    with pytest.raises(DomainError):
        coupling_lambda(p, 1.0, 1.0)


def test_effective_potential_regime():
    with pytest.raises(RegimeError):
        effective_potential(phi_r(1.5), CouplingSchedule(ZERO_MASS, 0.5), 0.01)
    f = effective_potential(disc(), CouplingSchedule(POSITIVE_MASS, 1.0), 0.01)
    assert f(0.5) == 1.0 and f(1.01) == 0.0


@given(st.floats(0.05, 0.9), st.floats(1e-6, 0.99), st.floats(-1.5, 1.5))
@settings(max_examples=30, deadline=None)
def test_rescale_identity(eps, a, theta):
    # points kept off the half-disc boundary
    phi = halfdisc()
    z = a * complex(math.cos(theta), math.sin(theta))
    assert rescale(phi, eps)(eps * z) == pytest.approx(phi(z) / eps**2)


@given(st.floats(0.1, 5.0))
@settings(max_examples=20, deadline=None)
def test_scaled_and_dilated_mass(c):
    phi = disc()
    assert phi.scaled(c).mass() == pytest.approx(c * math.pi, rel=1e-12)
    assert phi.dilated(c).mass() == pytest.approx(math.pi / c**2, rel=1e-12)


def test_rescale_preserves_mass():
    assert rescale(disc(), 0.1).mass() == pytest.approx(math.pi, rel=1e-12)
