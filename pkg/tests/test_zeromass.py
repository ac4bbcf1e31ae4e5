import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointres import zeromass as zm
from pointres.errors import DivergenceError, DomainError, RegimeError
from pointres.logenergy import criticality_constants
from pointres.potentials import (
    POSITIVE_MASS, ZERO_MASS, CouplingSchedule, disc, get_potential, halfdisc, phi_r,
)

# G_2{1_B1}(0) = (1/q)(1 - s K1(s)) at s = 2, from mpmath
G2_DISC_ORIGIN = 0.36013411818347756954

SUB = CouplingSchedule(ZERO_MASS, 0.5)


def operator(name="-phiR:1.5", L=8.0, q=2.0, schedule=SUB, **kw):
    return zm.build_operator(get_potential(name), schedule, math.exp(-L), q, **kw)


def test_green_source_origin():
    assert zm.green_source(disc(), 2.0, [0j])[0] == pytest.approx(G2_DISC_ORIGIN, rel=1e-13)


def test_green_source_radial_vs_plane():
    # the half disc exercises the plane route; its radial average is 1/2 on B_1
    pts = np.array([0.0, 0.3j, 0.8])
    plane = zm.green_source(halfdisc(), 2.0, pts)
    rotated = zm.green_source(halfdisc(), 2.0, -pts)
    radial = zm.green_source(disc(), 2.0, pts)
    np.testing.assert_allclose(plane + rotated, radial, rtol=1e-9)


def test_source_vector_zero_for_zero_g():
    op = operator()
    src = zm.source_vector(disc().scaled(1e-300), 2.0, op.eps, op)
    assert np.all(np.abs(src.values) < 1e-290)


def test_negative_coupling_refused():
    with pytest.raises(DomainError):
        operator(schedule=CouplingSchedule(ZERO_MASS, 0.5, lambda_prime=-50.0), L=4.0)


def test_operator_shape_and_refusals():
    op = operator()
    assert op.matrix.shape == (op.size, op.size)
    assert np.all(np.isfinite(op.matrix))
    with pytest.raises(RegimeError):
        zm.build_operator(disc(), SUB, 0.01, 2.0)
    with pytest.raises(RegimeError):
        zm.build_operator(phi_r(1.5), CouplingSchedule(POSITIVE_MASS, 0.5), 0.01, 2.0)
    with pytest.raises(DomainError):
        zm.build_operator(phi_r(1.5), SUB, 1.5, 2.0)
    with pytest.raises(DomainError):
        zm.build_operator(get_potential("dipole"), SUB, 0.01, 2.0, mode=zm.RADIAL)


def test_plane_mode_matches_radial():
    phi = get_potential("-phiR:1.5")
    eps = math.exp(-6)
    radial = zm.build_operator(phi, SUB, eps, 2.0, mode=zm.RADIAL)
    plane = zm.build_operator(phi, SUB, eps, 2.0, mode=zm.PLANE, order=16, n_theta=16)
    f_r = zm.f_infinity(radial, zm.source_vector(disc(), 2.0, eps, radial))
    f_p = zm.f_infinity(plane, zm.source_vector(disc(), 2.0, eps, plane))
    assert f_p.at_origin == pytest.approx(f_r.at_origin, rel=1e-7)


def test_picard_zero_kernel_returns_source():
    op = operator()
    op_zero = zm.NystromOperator(**{**op.__dict__, "matrix": np.zeros_like(op.matrix),
                                    "origin_row": np.zeros_like(op.origin_row)})
    src = zm.source_vector(disc(), 2.0, op.eps, op)
    st_ = zm.picard_iterate(op_zero, src, 4)
    for F in st_.iterates:
        np.testing.assert_array_equal(F, src.values)
    assert st_.alphas[1:] == [0.0] * 4
    with pytest.raises(DomainError):
        zm.picard_iterate(op, src, 0)


def test_picard_diffs_and_linearity():
    op = operator()
    s1 = zm.source_vector(disc(), 2.0, op.eps, op).values
    s2 = zm.source_vector(disc().dilated(2.0), 2.0, op.eps, op).values
    a = zm.picard_iterate(op, s1, 12)
    b = zm.picard_iterate(op, s2, 12)
    c = zm.picard_iterate(op, s1 + s2, 12)
    for fa, fb, fc in zip(a.iterates, b.iterates, c.iterates):
        np.testing.assert_allclose(fa + fb, fc, atol=1e-12 * np.abs(fc).max())
    for n, d in enumerate(a.diffs[1:], start=1):
        assert np.abs(d).max() == pytest.approx(a.alphas[n], rel=1e-12)


def test_alpha_ratio_near_mu_for_large_q():
    op = operator(q=100.0)
    st_ = zm.picard_iterate(op, zm.source_vector(disc(), 100.0, op.eps, op), 25)
    a = st_.alphas
    ratios = [a[n + 1] / a[n - 1] for n in range(10, 21)]
    assert all(abs(r - 0.5) < 0.05 for r in ratios)


def test_picard_overflow_is_reported():
    op = operator(schedule=CouplingSchedule(ZERO_MASS, 1.0, lambda_prime=50.0), q=2.0, L=4.0)
    with pytest.raises(DivergenceError) as info:
        zm.picard_iterate(op, zm.source_vector(disc(), 2.0, op.eps, op), 2000)
    assert info.value.value > zm.OVERFLOW


def test_decay_ratio_recovers_geometric_rate():
    alphas = 3.0 * 0.7 ** np.arange(40)
    assert zm.decay_ratio(alphas) == pytest.approx(0.7, rel=1e-12)
    # a rounding floor does not flatten the fit
    noisy = np.concatenate([alphas, np.full(200, 1e-16)])
    assert zm.decay_ratio(noisy) == pytest.approx(0.7, rel=1e-12)
    with pytest.raises(DomainError):
        zm.decay_ratio([1.0, 0.5])


def test_decay_ratio_matches_spectral_radius():
    op = operator()
    fi = zm.f_infinity(op, zm.source_vector(disc(), 2.0, op.eps, op), tol=1e-13)
    rho = max(abs(np.linalg.eigvals(op.matrix)))
    assert fi.ratio == pytest.approx(rho, rel=1e-3)


def test_f_infinity_matches_direct_solve():
    op = operator()
    fi = zm.f_infinity(op, zm.source_vector(disc(), 2.0, op.eps, op))
    assert fi.direct_gap < 1e-9
    assert fi.sup > 0 and fi.even_bound.shape == fi.values.shape


def test_f_infinity_subcritical_value_at_l8():
    # regression value; the limit 2 G_2{1_B1}(0) = 0.7203 is approached only like L^-1/2
    op = operator()
    fi = zm.f_infinity(op, zm.source_vector(disc(), 2.0, op.eps, op))
    assert fi.at_origin == pytest.approx(1.16047, rel=1e-4)


def test_scan_q_picks_smallest_decaying():
    q = zm.scan_q(get_potential("-phiR:1.5"), SUB, disc(), [4.0, 8.0])
    assert q == 2.0


def test_classify_regimes():
    phi = get_potential("-phiR:1.5")
    c = criticality_constants(phi)
    assert zm.classify(phi, SUB, 2.0) == (zm.SUBCRITICAL, 0.5)
    first = CouplingSchedule(ZERO_MASS, 1.0, lambda_prime=-c.c_phi - 1.0)
    regime, const = zm.classify(phi, first, 2.0)
    assert regime == zm.FIRST_CRITICAL and const == pytest.approx(1.0)
    second = CouplingSchedule(ZERO_MASS, 1.0, lambda_prime=-c.c_phi)
    regime, const = zm.classify(phi, second, 50.0)
    assert regime == zm.SECOND_CRITICAL
    assert const == pytest.approx(c.c_lambda_q(50.0))


def test_classify_refusals():
    phi = get_potential("-phiR:1.5")
    c = criticality_constants(phi)
    with pytest.raises(RegimeError):
        zm.classify(phi_r(1.5), CouplingSchedule(ZERO_MASS, 1.0), 2.0)
    with pytest.raises(RegimeError):
        zm.classify(phi, CouplingSchedule(ZERO_MASS, 1.0, lambda_prime=-c.c_phi + 1.0), 2.0)
    with pytest.raises(RegimeError):
        zm.classify(phi, CouplingSchedule(ZERO_MASS, 1.0, lambda_prime=-c.c_phi, lam=10.0), 2.0)


def test_limit_report_columns():
    rep = zm.LimitReport(zm.FIRST_CRITICAL, 2.0, np.array([4.0, 16.0]), np.array([2.0, 4.4]), 1.0,
                         np.zeros(2), np.zeros(2), np.zeros(2))
    np.testing.assert_allclose(rep.measured, [1.0, 1.1])
    np.testing.assert_allclose(rep.residual_times_rate, [0.0, 0.4])
    assert not rep.nonincreasing()
    assert len(rep.rows()) == 2


def test_limit_verify_refuses_bad_g():
    with pytest.raises(DomainError):
        zm.limit_verify(get_potential("-phiR:1.5"), SUB, phi_r(1.5), 2.0, [4.0])
    with pytest.raises(RegimeError):
        zm.limit_verify(disc(), SUB, disc(), 2.0, [4.0])


def test_recursion_example_holds():
    ok, trace = zm.recursion_bound_check(0.1, 0.5, 0.01, 0.25, 1.0, k_max=500)
    assert ok and trace.failed_at is None
    assert len(trace.b) == 501
    assert np.all(trace.b <= trace.bound * (1 + 1e-12))


def test_recursion_two_term_case():
    ok, _ = zm.recursion_bound_check(0.1, 0.5, 0.0, 0.25, 1.0)
    assert ok


def test_recursion_preconditions():
    with pytest.raises(DomainError, match=r"\(a\)"):
        zm.recursion_bound_check(0.1, 0.5, 0.0, 0.6, 1.0)
    with pytest.raises(DomainError, match=r"\(b\)"):
        zm.recursion_bound_check(0.1, 0.5, 0.1, 0.25, 1.0)
    with pytest.raises(DomainError, match=r"\(c\)"):
        zm.recursion_bound_check(0.1, 0.5, 0.01, 0.25, 0.05)
    with pytest.raises(DomainError):
        zm.recursion_bound_check(0.6, 0.5, 0.0, 0.25, 1.0)


@given(st.floats(0.0, 0.4), st.floats(0.05, 0.5), st.floats(0.05, 0.9))
@settings(max_examples=40, deadline=None)
def test_recursion_b_nonnegative(delta, delta_p, theta):
    if 4 * theta * delta_p >= 1:
        return
    delta_pp = (1 - theta) * delta_p / 14
    try:
        _, trace = zm.recursion_bound_check(delta, delta_p, delta_pp, theta, 1.0, k_max=50)
    except DomainError:
        return
    assert np.all(trace.b >= 0)
