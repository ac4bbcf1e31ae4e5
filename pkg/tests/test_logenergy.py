import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointres.errors import DomainError, RegimeError, SingularityError
from pointres.logenergy import (
    MultipoleCalculus, c_phi_scan, criticality_constants, double_log_integral, energy_bracket,
    k_op, kappa, log_potential, phi_r_log_potential, phi_r_moment, phi_r_root,
)
from pointres.potentials import dipole, disc, get_potential, halfdisc, phi_r
from pointres.specfun import EULER_GAMMA

# brackets of -phi_1.5 from exact symbolic integration (sympy)
NEG_PHI15 = {"energy": 2.030779243294831, "cross_1": 1.487479694759637, "cross_2": 0.6670786710635176}

# <<phi_R (kappa * phi_R)^j>> from mpmath radial quadrature at 40 digits
PHI_R_MOMENTS = [
    (1.01, 1, 0.00032153945282846875), (1.01, 2, -2.1901502207345787e-6),
    (1.5, 1, 2.0307792432948309), (1.5, 2, -1.4874796947596369),
    (2.0, 1, 15.991821523318875), (2.0, 2, -38.197487824130678),
]


def test_kappa():
    assert kappa(1.0) == 0.0
    assert kappa(math.e) == pytest.approx(-1 / math.pi)
    with pytest.raises(SingularityError):
        kappa(0j)


@pytest.mark.parametrize("a", [0.0, 0.3, 1.0, 2.0, 5.0])
def test_disc_potential_closed_form(a):
    expected = max(1 - a * a, 0) / 2 + math.log(1 / max(a, 1.0))
    assert k_op(disc(), None, complex(a)) == pytest.approx(expected, abs=1e-10)


def test_disc_potential_outside_is_log():
    # outside the support kappa * 1_B1 = log(1/|z|)
    assert k_op(disc(), None, 2.0) == pytest.approx(-math.log(2.0), abs=1e-10)


def test_log_potential_radial_shortcut_matches_pointwise():
    pts = np.array([0.4, 0.4j, -0.4, 1.2 + 0.1j])
    vals = log_potential(disc(), pts)
    assert vals[0] == vals[1] == vals[2]
    assert vals[3] == pytest.approx(k_op(disc(), None, pts[3]), abs=1e-13)


def test_disc_energy():
    assert energy_bracket(disc()) == pytest.approx(math.pi / 4, rel=1e-12)
    assert double_log_integral(disc()) == pytest.approx(-math.pi**2 / 4, rel=1e-12)


@pytest.mark.parametrize("R, j, ref", PHI_R_MOMENTS)
def test_phi_r_moment_closed_form(R, j, ref):
    assert phi_r_moment(R, j) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("R", [1.01, 1.5, 2.0])
def test_phi_r_moment_quadrature(R):
    p = phi_r(R)
    assert energy_bracket(p) == pytest.approx(phi_r_moment(R, 1), rel=1e-9)
    c = criticality_constants(p)
    assert c.cross_1 == pytest.approx(phi_r_moment(R, 2), rel=1e-8, abs=1e-15)


def test_phi_r_log_potential():
    r = np.array([0.0, 0.5, 1.0, 1.3, 1.5, 2.0])
    direct = log_potential(phi_r(1.5), r)
    np.testing.assert_allclose(phi_r_log_potential(1.5, r), direct, atol=1e-10)


def test_phi_r_moment_errors():
    with pytest.raises(DomainError):
        phi_r_moment(1.0, 1)
    with pytest.raises(DomainError):
        phi_r_moment(1.5, 3)


def test_phi_r_root_absent():
    # the second moment is negative for every R > 1
    with pytest.raises(DomainError):
        phi_r_root()


@given(st.floats(1.001, 4.0))
@settings(max_examples=50, deadline=None)
def test_phi_r_second_moment_negative(R):
    assert phi_r_moment(R, 2) < 0


def test_phi_r_root_wide_bracket():
    with pytest.raises(DomainError):
        phi_r_root(1.01, 3.0)


def test_criticality_constants_neg_phi15():
    c = criticality_constants(get_potential("-phiR:1.5"), lambda_prime=0.3, lam=0.2)
    assert c.energy == pytest.approx(NEG_PHI15["energy"], rel=1e-10)
    assert c.cross_1 == pytest.approx(NEG_PHI15["cross_1"], rel=1e-10)
    assert c.cross_2 == pytest.approx(NEG_PHI15["cross_2"], rel=1e-9)
    c_phi = math.sqrt(math.pi) * NEG_PHI15["cross_1"] / NEG_PHI15["energy"] ** 1.5
    assert c.c_phi == pytest.approx(c_phi, rel=1e-10)
    assert c.c_phi_alt == pytest.approx(c.c_phi, rel=1e-9)
    assert c.c_lambda_prime == pytest.approx(-0.3 - c_phi)
    assert c.cross_sign_ok
    q = 3.0
    expected = (-0.2 - math.log(math.sqrt(2 / q)) + EULER_GAMMA
                + 1.5 * math.pi * c.cross_1**2 / c.energy**3 - math.pi * c.cross_2 / c.energy**2)
    assert c.c_lambda_q(q) == pytest.approx(expected, rel=1e-13)


def test_sign_flip_of_cross_terms():
    plus = criticality_constants(phi_r(1.5))
    minus = criticality_constants(get_potential("-phiR:1.5"))
    assert plus.energy == pytest.approx(minus.energy, rel=1e-13)
    assert plus.cross_1 == pytest.approx(-minus.cross_1, rel=1e-13)
    # the second cross bracket is quartic in phi
    assert plus.cross_2 == pytest.approx(minus.cross_2, rel=1e-13)
    assert not plus.cross_sign_ok


def test_q_threshold_is_root():
    c = criticality_constants(get_potential("-phiR:1.5"), lam=1.0)
    q0 = c.q_threshold()
    assert c.c_lambda_q(q0) == pytest.approx(0.0, abs=1e-12)
    assert c.c_lambda_q(2 * q0) > 0 > c.c_lambda_q(q0 / 2)
    with pytest.raises(DomainError):
        c.c_lambda_q(0.0)


def test_criticality_refuses_positive_mass():
    with pytest.raises(RegimeError):
        criticality_constants(disc())


def test_dipole_routes_agree():
    c = criticality_constants(dipole())
    assert c.c_phi_alt == pytest.approx(c.c_phi, rel=1e-8)


def test_multipole_potential_matches_direct():
    mc = MultipoleCalculus(halfdisc(), order=16, n_theta=64)
    pot = mc.potential(mc.sample(halfdisc()))
    # columns at angles 0 and pi, away from the jump line of the half disc
    pts = mc.points[::5, ::32]
    direct = log_potential(halfdisc(), pts)
    np.testing.assert_allclose(pot[::5, ::32], direct, atol=5e-3)
    mc_d = MultipoleCalculus(dipole(), order=24, n_theta=16)
    pot_d = mc_d.potential(mc_d.sample(dipole()))
    np.testing.assert_allclose(pot_d[::7, ::3], log_potential(dipole(), mc_d.points[::7, ::3]), atol=1e-10)


@given(st.floats(0.2, 5.0))
@settings(max_examples=15, deadline=None)
def test_energy_scaling(c):
    assert energy_bracket(disc().scaled(c)) == pytest.approx(c * c * math.pi / 4, rel=1e-11)


@given(st.floats(0.3, 3.0))
@settings(max_examples=15, deadline=None)
def test_energy_dilation(lam):
    # 1_{B_rho} with rho = 1 / lam has energy pi rho^4 (1/4 + log(1/rho))
    rho = 1.0 / lam
    expected = math.pi * rho**4 * (0.25 + math.log(lam))
    assert energy_bracket(disc().dilated(lam)) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_c_phi_scan_sign():
    rows = c_phi_scan([1.1, 1.5, 2.0])
    assert [R for R, _ in rows] == [1.1, 1.5, 2.0]
    assert all(c < 0 for _, c in rows)
    assert rows[1][1] == pytest.approx(-criticality_constants(get_potential("-phiR:1.5")).c_phi, rel=1e-10)
