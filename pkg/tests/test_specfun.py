import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointres.errors import DomainError, SingularityError
from pointres.specfun import (
    EULER_GAMMA, GREEN_REMAINDER_CONSTANT, SeriesControl, bessel_i0, bessel_j0, bessel_k0,
    first_zero_j0, green_expansion, green_g, green_radial, green_tilde, heat_kernel,
    k0_log_remainder, ring_kernel,
)

# reference values from mpmath at 40 digits
K0_REF = [
    (1e-6, 13.931442073626419413), (0.01, 4.7212447301610949651), (0.5, 0.92441907122766586178),
    (1.0, 0.42102443824070833334), (2.0, 0.11389387274953343565), (3.7, 0.015630659921626661612),
    (8.0, 0.0001464707052228153871), (20.0, 5.7412378153365242927e-10),
    (49.0, 9.3634406747595817138e-23), (75.0, 3.8701170455869118998e-34),
]
I0_REF = [
    (0.0, 1.0), (0.01, 1.000025000156250434), (1.0, 1.2660658777520083356), (5.0, 27.239871823604446895),
    (12.0, 18948.925349296308861), (29.0, 292520631785.69086627), (35.0, 107338818494514.06357),
    (60.0, 5.8940770556098011683e+24),
]
J0_REF = [
    (0.0, 1.0), (0.5, 0.93846980724081290423), (5.0, -0.17759677131433830435),
    (11.9, 0.025049441699589563728), (12.1, 0.069666773606807388498), (30.0, -0.086367983581040211336),
    (100.0, 0.019985850304223122424),
]


@pytest.mark.parametrize("x, ref", K0_REF)
def test_k0_matches_reference(x, ref):
    assert bessel_k0(x) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("x, ref", I0_REF)
def test_i0_matches_reference(x, ref):
    assert bessel_i0(x) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("x, ref", J0_REF)
def test_j0_matches_reference(x, ref):
    assert bessel_j0(x) == pytest.approx(ref, abs=1e-13)


def test_vectorized_matches_scalar():
    x = np.array([0.3, 2.5, 40.0, 70.0])
    np.testing.assert_array_equal(bessel_k0(x), [bessel_k0(v) for v in x])
    assert isinstance(bessel_k0(1.0), float)


def test_domain_errors():
    with pytest.raises(DomainError):
        bessel_k0(0.0)
    with pytest.raises(DomainError):
        bessel_i0(-1.0)
    with pytest.raises(DomainError):
        bessel_j0(-0.1)
    with pytest.raises(DomainError):
        SeriesControl(max_terms=4)


def test_first_zero():
    assert first_zero_j0() == pytest.approx(2.4048255576957727686, abs=1e-12)


@given(st.floats(min_value=1e-4, max_value=45.0))
@settings(max_examples=60, deadline=None)
def test_wronskian(x):
    # I0 K1 + I1 K0 = 1/x, with K1 = -K0' and I1 = I0' by central differences
    h = 1e-4 * min(x, 1.0)
    dk = (bessel_k0(x + h) - bessel_k0(x - h)) / (2 * h)
    di = (bessel_i0(x + h) - bessel_i0(x - h)) / (2 * h)
    w = -bessel_i0(x) * dk + di * bessel_k0(x)
    assert w * x == pytest.approx(1.0, rel=1e-6)


@given(st.floats(min_value=1e-3, max_value=40.0))
@settings(max_examples=60, deadline=None)
def test_k0_positive_decreasing(x):
    assert 0 < bessel_k0(1.01 * x) < bessel_k0(x)


def test_heat_kernel_normalized():
    from scipy.integrate import quad

    total, _ = quad(lambda r: 2 * np.pi * r * heat_kernel(1.3, r), 0, np.inf)
    assert total == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        heat_kernel(0.0, 1.0)


def test_green_is_laplace_transform_of_heat_kernel():
    from scipy.integrate import quad

    nu, d = 0.8, 0.7
    val, _ = quad(lambda t: math.exp(-nu * t) * heat_kernel(t, d), 0, np.inf, limit=200)
    assert green_g(nu, d, 0j) == pytest.approx(val, rel=1e-8)


def test_green_tilde_and_singularity():
    assert green_tilde(2.0, 0.5, 0j) == pytest.approx(0.5 * green_radial(1.0, 0.5))
    with pytest.raises(SingularityError):
        green_g(1.0, 0.3, 0.3)


def test_green_expansion_bound():
    for nu in (1e-6, 1e-3, 0.1):
        for d in np.geomspace(1e-4, 0.49 / math.sqrt(nu), 9):
            lead, bound = green_expansion(nu, d)
            assert abs(green_radial(nu, d) - lead) <= bound
    assert GREEN_REMAINDER_CONSTANT == 1.0
    with pytest.raises(DomainError):
        green_expansion(1.0, 1.0)


def test_ring_kernel_reference():
    assert ring_kernel(0.7, 0.4, 1.1) == pytest.approx(0.64557765159596459645, rel=1e-13)
    with pytest.raises(DomainError):
        ring_kernel(1.0, 0.0, 0.0)


@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0.01, 5.0))
@settings(max_examples=40, deadline=None)
def test_ring_kernel_symmetry(a, b, nu):
    # b^-1 V(a, b) is symmetric in (a, b)
    assert ring_kernel(nu, a, b) / b == pytest.approx(ring_kernel(nu, b, a) / a, rel=1e-12)


@pytest.mark.parametrize("x, ref", [(0.001, 2.0059218318427473857e-6), (0.5, 0.11534037500930810355),
                                    (2.0, 0.69110953765106629626), (5.0, 1.4971974951097305201)])
def test_k0_log_remainder(x, ref):
    assert k0_log_remainder(x) == pytest.approx(ref, rel=1e-12)


def test_k0_log_remainder_zero():
    assert k0_log_remainder(0.0) == 0.0
    assert EULER_GAMMA == pytest.approx(0.5772156649015329)
