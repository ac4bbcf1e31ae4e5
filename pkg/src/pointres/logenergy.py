"""Logarithmic potentials, energies and the zero-mass criticality constants.

Two independent discretizations are provided.  The direct route evaluates
kappa * (phi f) pointwise with the singular plane rule of ``quad`` and then
integrates over the support.  The multipole route expands every function in
angular Fourier modes, where convolution with the log kernel becomes a
one-dimensional radial integral per mode; it is exact for potentials whose
angular dependence is a trigonometric polynomial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from . import quad
from .errors import DomainError, RegimeError, SingularityError
from .potentials import POSITIVE_MASS, Potential, phi_r
from .specfun import EULER_GAMMA


def kappa(z):
    """(1/pi) log(1/|z|)."""
    r = np.abs(np.asarray(z, dtype=complex))
    if np.any(r == 0):
        raise SingularityError("kappa is singular at the origin")
    out = -np.log(r) / math.pi
    return float(out) if out.ndim == 0 else out


def k_op(phi: Potential, f, z: complex, **kw) -> float:
    """kappa * (phi f) evaluated at z."""
    if f is None:
        g = phi
    else:
        g = lambda w: phi(w) * np.asarray(f(w), dtype=float)  # noqa: E731
    val = quad.integrate_log_kernel(
        g, z, phi.support_radius, phi.radial_breaks, phi.angular_breaks, **kw)
    return val / math.pi


def log_potential(phi: Potential, points, f=None, f_radial: bool = True, **kw) -> NDArray:
    """kappa * (phi f) at many points.

    When phi is radial and f is radial (or absent) the potential is radial
    too, so it is computed once per distinct radius.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    if phi.is_radial and (f is None or f_radial):
        radii, inverse = np.unique(np.abs(pts), return_inverse=True)
        vals = np.array([k_op(phi, f, complex(r), **kw) for r in radii])
        return vals[inverse].reshape(pts.shape)
    return np.array([k_op(phi, f, complex(p), **kw) for p in pts.ravel()]).reshape(pts.shape)


def _outer_rule(phi: Potential) -> tuple[NDArray, NDArray]:
    if phi.angular_breaks:
        rule = quad.centered_rule(0j, phi.support_radius, phi.radial_breaks, phi.angular_breaks)
        return rule.points, rule.weights
    rule = quad.polar_rule(phi.support_radius, radial_breaks=phi.radial_breaks)
    if phi.is_radial:
        # angular integral is trivial: keep one node per radius
        return rule.radial_nodes.astype(complex), 2.0 * np.pi * rule.radial_weights
    return rule.points(), rule.weights()


def energy_bracket(phi: Potential) -> float:
    """Logarithmic energy: integral of phi * (kappa * phi)."""
    pts, w = _outer_rule(phi)
    pot = log_potential(phi, pts)
    return float(np.dot(w, phi(pts) * pot))


def _direct_brackets(phi: Potential) -> tuple[float, float]:
    pts, w = _outer_rule(phi)
    pot = log_potential(phi, pts)
    vals = phi(pts)
    return float(np.dot(w, vals * pot)), float(np.dot(w, vals * pot * pot))


def double_log_integral(phi: Potential) -> float:
    """Integral of phi(z') phi(z'') log|z' - z''| over the plane twice."""
    return -math.pi * energy_bracket(phi)


# ---------------------------------------------------------------------------
# multipole route


def _mode_kernel(m: int) -> Callable:
    if m == 0:
        return lambda t, x: 2.0 * x * -np.log(np.maximum(t, x))
    return lambda t, x: (2.0 / m) * x * (np.minimum(t, x) / np.maximum(t, x)) ** m


@dataclass
class MultipoleCalculus:
    """Polar grid (Gauss radially, uniform angularly) on which kappa-convolution
    is applied mode by mode.

    For radial potentials the grid collapses to one angle unless
    ``keep_angles`` is set (needed when the functions convolved are not radial).
    """

    phi: Potential
    order: int = 24
    n_theta: int = 64
    keep_angles: bool = False
    rule: quad.PiecewiseRule = field(init=False)
    theta: NDArray = field(init=False)
    _weights: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        M = self.phi.support_radius
        self.rule = quad.PiecewiseRule.build([0.0, *self.phi.radial_breaks, M], self.order)
        if self.phi.is_radial and not self.keep_angles:
            self.n_theta = 1
        self.theta = 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def points(self) -> NDArray:
        return self.rule.nodes[:, None] * np.exp(1j * self.theta)[None, :]

    def sample(self, f) -> NDArray:
        return np.asarray(f(self.points), dtype=float)

    def _mode_weights(self, m):
        if m not in self._weights:
            self._weights[m] = self.rule.product_weights(self.rule.nodes, _mode_kernel(m))
        return self._weights[m]

    def potential(self, values: NDArray) -> NDArray:
        """kappa * u on the grid, for u given by its grid values."""
        n = self.n_theta
        coef = np.fft.rfft(values, axis=1) / n
        scale = np.abs(coef).max() if coef.size else 0.0
        spec = np.zeros_like(coef)
        for m in range(coef.shape[1]):
            if n % 2 == 0 and m == n // 2 and m > 0:
                continue
            if np.abs(coef[:, m]).max() <= 1e-15 * scale:
                continue
            p = self._mode_weights(m) @ coef[:, m]
            spec[:, m] = p if m == 0 else 0.5 * p
        return np.fft.irfft(spec * n, n=n, axis=1)

    def integrate(self, values: NDArray) -> float:
        w = self.rule.weights * self.rule.nodes
        return float(w @ values.sum(axis=1)) * 2.0 * np.pi / self.n_theta

    def brackets(self) -> dict:
        vals = self.sample(self.phi)
        pot = self.potential(vals)
        u = vals * pot
        ku = self.potential(u)
        return {
            "energy": self.integrate(u),
            "cross_1": self.integrate(u * pot),
            "cross_2": self.integrate(u * ku),
        }


# ---------------------------------------------------------------------------
# criticality constants


def _c_from(energy, cross_1):
    return math.sqrt(math.pi) * cross_1 / energy**1.5


@dataclass(frozen=True)
class CriticalityConstants:
    """Constants deciding which zero-mass limit regime applies.

    ``c_phi_alt`` is the same constant from the multipole route; the two
    must agree to quadrature accuracy.
    """

    c_phi: float
    c_phi_alt: float
    c_lambda_prime: float
    energy: float
    cross_1: float
    cross_2: float
    lambda_prime: float
    lam: float

    def c_lambda_q(self, q: float) -> float:
        if not q > 0:
            raise DomainError("q must be positive")
        return (
            -self.lam
            - math.log(math.sqrt(2.0) / math.sqrt(q))
            + EULER_GAMMA
            + 1.5 * math.pi * self.cross_1**2 / self.energy**3
            - math.pi * self.cross_2 / self.energy**2
        )

    def q_threshold(self) -> float:
        """Smallest q with c_lambda_q(q) > 0 (the map is increasing in q)."""
        return 2.0 * math.exp(2.0 * (-self.c_lambda_q(2.0)))

    @property
    def cross_sign_ok(self) -> bool:
        """Whether the critical limits apply as stated (cross_1 >= 0).

        When this is False the critical regimes require -phi instead; the
        library reports this and never flips the sign itself.
        """
        return self.cross_1 >= 0

    def as_dict(self) -> dict:
        return {
            "c_phi": self.c_phi,
            "c_phi_alt": self.c_phi_alt,
            "c_lambda_prime": self.c_lambda_prime,
            "energy": self.energy,
            "cross_1": self.cross_1,
            "cross_2": self.cross_2,
            "lambda_prime": self.lambda_prime,
            "lambda": self.lam,
            "cross_sign_ok": self.cross_sign_ok,
        }


def criticality_constants(phi: Potential, lambda_prime: float = 0.0, lam: float = 0.0,
                          multipole: MultipoleCalculus | None = None) -> CriticalityConstants:
    if phi.mass_class == POSITIVE_MASS:
        raise RegimeError("criticality constants are defined for zero-mass potentials")
    energy, cross_1 = _direct_brackets(phi)
    mp = (multipole or MultipoleCalculus(phi)).brackets()
    c_phi = _c_from(energy, cross_1)
    return CriticalityConstants(
        c_phi=c_phi,
        c_phi_alt=_c_from(mp["energy"], mp["cross_1"]),
        c_lambda_prime=-lambda_prime - c_phi,
        energy=energy,
        cross_1=cross_1,
        cross_2=mp["cross_2"],
        lambda_prime=lambda_prime,
        lam=lam,
    )


# ---------------------------------------------------------------------------
# closed forms for phi_R = 1_{B_R} - R^2 1_{B_1}


def phi_r_moment(R: float, j: int) -> float:
    """Closed forms of <<phi_R (kappa * phi_R)^j>> for j = 1, 2."""
    if not R > 1:
        raise DomainError("phi_R needs R > 1")
    R2 = R * R
    lg = math.log(R)
    if j == 1:
        return 0.5 * math.pi * (R2 - R2 * R2) + math.pi * R2 * R2 * lg
    if j == 2:
        return (
            math.pi / 8.0 * R2 * (R2 * R2 - 1.0)
            - R2 * R2 * math.pi * (1.0 - 0.5 * R2) * lg
            - math.pi * R2**3 * lg * lg
        )
    raise DomainError("moment order must be 1 or 2")


def phi_r_log_potential(R: float, r) -> NDArray:
    """kappa * phi_R at radius r (closed form)."""
    r = np.asarray(r, dtype=float)
    R2 = R * R
    with np.errstate(divide="ignore"):
        inner = 0.5 * (R2 - 1.0) * r * r + R2 * math.log(1.0 / R)
        ring = 0.5 * (R2 - r * r) + R2 * np.log(np.where(r > 0, r, 1.0) / R)
    return np.where(r <= 1.0, inner, np.where(r <= R, ring, 0.0))


def phi_r_root(lo: float = 1.2, hi: float = 1.4, tol: float = 1e-13) -> float:
    """Radius in [lo, hi] at which <<phi_R (kappa * phi_R)^2>> changes sign.

    The moment is negative for every R > 1, so the default bracket has no
    root and DomainError is raised; the bisection is kept for brackets
    supplied with a genuine sign change.
    """
    flo = phi_r_moment(lo, 2)
    if (flo > 0) == (phi_r_moment(hi, 2) > 0):
        raise DomainError(f"second moment has no sign change on [{lo}, {hi}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = phi_r_moment(mid, 2)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def c_phi_scan(radii) -> list[tuple[float, float]]:
    """(R, c(phi_R)) along a list of radii, from the direct route."""
    out = []
    for R in radii:
        p = phi_r(R)
        e, c1 = _direct_brackets(p)
        out.append((float(R), _c_from(e, c1)))
    return out
