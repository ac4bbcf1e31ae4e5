"""Fast invariant suite behind ``pointres selftest``."""

from __future__ import annotations

import math

import numpy as np
from scipy import special


def _bessel():
    from .specfun import bessel_i0, bessel_j0, bessel_k0

    x = np.array([1e-3, 0.3, 1.0, 2.0, 7.5, 20.0, 60.0])
    err = max(
        np.max(np.abs(bessel_k0(x) / special.k0(x) - 1)),
        np.max(np.abs(bessel_i0(x) / special.i0(x) - 1)),
        np.max(np.abs(bessel_j0(x) - special.j0(x))),
    )
    return float(err), 1e-12


def _disc_energy():
    from .logenergy import energy_bracket
    from .potentials import disc

    return abs(energy_bracket(disc()) - math.pi / 4), 1e-6


def _phi_r_moments():
    from .logenergy import _direct_brackets, phi_r_moment
    from .potentials import phi_r

    e, m2 = _direct_brackets(phi_r(1.5))
    return max(abs(e - phi_r_moment(1.5, 1)), abs(m2 - phi_r_moment(1.5, 2))), 1e-8


def _multipole_agreement():
    from .logenergy import criticality_constants
    from .potentials import phi_r

    c = criticality_constants(phi_r(1.5))
    return abs(c.c_phi - c.c_phi_alt), 1e-8


def _hitting_identity():
    from .besselres import r0_hitting, v_density

    err = 0.0
    for nu in (0.5, 2.0):
        for a in (0.2, 1.0, 2.5):
            for b in (0.4, 1.3):
                err = max(err, abs(r0_hitting(nu, a, b) * v_density(nu, b, b) / v_density(nu, a, b) - 1))
    return err, 1e-6


def _resolvent_mass():
    from .besselres import resolvent_mass

    val, tail = resolvent_mass(0.5, 0.7)
    return abs(val * 0.5 - 1) + tail, 1e-8


def _coefficient_routes():
    from .besselres import a_mulambda
    from .potentials import disc

    routes = a_mulambda(disc(), 1.0, 0.0, 2.0, 0.5, 0.5, return_routes=True)
    return abs(routes.direct - routes.sharp), 1e-8


def _picard_direct():
    from .potentials import ZERO_MASS, CouplingSchedule, disc, phi_r
    from .zeromass import build_operator, f_infinity, source_vector

    phi = phi_r(1.5).scaled(-1.0)
    op = build_operator(phi, CouplingSchedule(ZERO_MASS, 0.5), math.exp(-4.0), 2.0)
    res = f_infinity(op, source_vector(disc(), 2.0, op.eps, op))
    return res.direct_gap, 1e-9


def _recursion():
    from .zeromass import recursion_bound_check

    ok, _ = recursion_bound_check(0.1, 0.5, 0.01, 0.25, 1.0)
    return (0.0 if ok else 1.0), 0.5


CHECKS = (
    ("bessel functions against reference values", _bessel),
    ("unit disc log energy equals pi/4", _disc_energy),
    ("phi_R moments, quadrature vs closed form", _phi_r_moments),
    ("criticality constant, direct vs multipole", _multipole_agreement),
    ("hitting transform times diagonal density", _hitting_identity),
    ("resolvent total mass equals 1/nu", _resolvent_mass),
    ("expansion coefficient, two routes", _coefficient_routes),
    ("Picard limit vs direct solve", _picard_direct),
    ("geometric recursion bound", _recursion),
)


def run_checks() -> list[tuple[str, bool, float, float]]:
    out = []
    for name, fn in CHECKS:
        val, tol = fn()
        out.append((name, bool(val <= tol), float(val), float(tol)))
    return out
