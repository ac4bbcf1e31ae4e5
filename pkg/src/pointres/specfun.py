"""Order-zero Bessel functions, the planar heat kernel and resolvent kernel.

Everything here is vectorized over numpy arrays and returns a Python float
for scalar input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, SingularityError

EULER_GAMMA = 0.57721566490153286061


@dataclass(frozen=True)
class SeriesControl:
    """Truncation control for the power series and asymptotic sums."""

    max_terms: int = 80
    abs_tol: float = 1e-17

    def __post_init__(self):
        if self.max_terms < 8:
            raise DomainError("max_terms must be at least 8")
        if not self.abs_tol > 0:
            raise DomainError("abs_tol must be positive")


DEFAULT_SERIES = SeriesControl()

# Branch points.  Below K0_SERIES_MAX the log-series for K0 loses at most a
# factor ~20 to cancellation; above it we use the cosh integral, and the
# Hankel asymptotic sum once its smallest term is below double precision.
K0_SERIES_MAX = 2.0
K0_ASYMPTOTIC_MIN = 50.0
I0_ASYMPTOTIC_MIN = 30.0
J0_SERIES_MAX = 4.0
J0_ASYMPTOTIC_MIN = 50.0
_K0_TRAPEZOID_NODES = 48


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _wrap(out, scalar):
    return float(out) if scalar else out


def _quarter_square_series(y, sign, ctl, harmonic=False):
    """Sum_k sign^k (y^2/4)^k/(k!)^2, optionally weighted by harmonic numbers."""
    u = sign * 0.25 * y * y
    term = np.ones_like(y)
    total = np.zeros_like(y) if harmonic else np.ones_like(y)
    h = 0.0
    for k in range(1, ctl.max_terms):
        term = term * u / (k * k)
        h += 1.0 / k
        add = term * h if harmonic else term
        total = total + add
        if np.all(np.abs(add) <= ctl.abs_tol * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _hankel_coefficients(n):
    # a_k = prod_{j<=k} (2j-1)^2 / (k! 8^k)
    coef = [1.0]
    for k in range(1, n):
        coef.append(coef[-1] * (2 * k - 1) ** 2 / (k * 8.0))
    return np.array(coef)


_HANKEL = _hankel_coefficients(30)


def _k0_series(x, ctl):
    i0 = _quarter_square_series(x, 1.0, ctl)
    tail = _quarter_square_series(x, 1.0, ctl, harmonic=True)
    return -(np.log(0.5 * x) + EULER_GAMMA) * i0 + tail


def _k0_cosh_integral(x):
    # K0(x) = int_0^inf exp(-x cosh t) dt; the trapezoid rule converges
    # geometrically because the integrand is analytic in a strip.
    upper = np.arccosh(1.0 + 40.0 / x)
    s = np.linspace(0.0, 1.0, _K0_TRAPEZOID_NODES)
    t = upper[:, None] * s[None, :]
    vals = np.exp(-x[:, None] * (np.cosh(t) - 1.0))
    vals[:, 0] *= 0.5
    vals[:, -1] *= 0.5
    h = upper / (_K0_TRAPEZOID_NODES - 1)
    return np.exp(-x) * h * vals.sum(axis=1)


def _k0_asymptotic(x):
    inv = 1.0 / x
    total = np.zeros_like(x)
    for k in range(len(_HANKEL) - 1, -1, -1):
        total = total * (-inv) + _HANKEL[k]
    return np.sqrt(np.pi / (2.0 * x)) * np.exp(-x) * total


def bessel_k0(x, ctl: SeriesControl = DEFAULT_SERIES):
    """Macdonald function K0 for x > 0."""
    arr, scalar = _as_array(x)
    if np.any(~(arr > 0)):
        raise DomainError("bessel_k0 requires x > 0")
    flat = arr.ravel()
    out = np.empty_like(flat)
    small = flat <= K0_SERIES_MAX
    large = flat > K0_ASYMPTOTIC_MIN
    mid = ~small & ~large
    if small.any():
        out[small] = _k0_series(flat[small], ctl)
    if mid.any():
        out[mid] = _k0_cosh_integral(flat[mid])
    if large.any():
        out[large] = _k0_asymptotic(flat[large])
    return _wrap(out.reshape(arr.shape), scalar)


def bessel_i0(x, ctl: SeriesControl = DEFAULT_SERIES):
    """Modified Bessel function I0 for x >= 0."""
    arr, scalar = _as_array(x)
    if np.any(~(arr >= 0)):
        raise DomainError("bessel_i0 requires x >= 0")
    flat = arr.ravel()
    out = np.empty_like(flat)
    small = flat <= I0_ASYMPTOTIC_MIN
    if small.any():
        out[small] = _quarter_square_series(flat[small], 1.0, ctl)
    big = ~small
    if big.any():
        y = flat[big]
        inv = 1.0 / y
        total = np.zeros_like(y)
        for k in range(len(_HANKEL) - 1, -1, -1):
            total = total * inv + _HANKEL[k]
        with np.errstate(over="ignore"):
            out[big] = np.exp(y) / np.sqrt(2.0 * np.pi * y) * total
    return _wrap(out.reshape(arr.shape), scalar)


def bessel_j0(x, ctl: SeriesControl = DEFAULT_SERIES):
    """Bessel function J0 for x >= 0.

    Alternating series for small x, the periodic trapezoid rule on
    (1/pi) int_0^pi cos(x sin t) dt in the middle range, Hankel sum beyond.
    """
    arr, scalar = _as_array(x)
    if np.any(~(arr >= 0)):
        raise DomainError("bessel_j0 requires x >= 0")
    flat = arr.ravel()
    out = np.empty_like(flat)
    small = flat <= J0_SERIES_MAX
    if small.any():
        out[small] = _quarter_square_series(flat[small], -1.0, ctl)
    big = flat > J0_ASYMPTOTIC_MIN
    mid = ~small & ~big
    if mid.any():
        # error is of order J_n(x), negligible once n exceeds x by ~40
        n = 2 * int(math.ceil(J0_ASYMPTOTIC_MIN)) + 40
        t = 2.0 * np.pi * np.arange(n) / n
        out[mid] = np.cos(flat[mid][:, None] * np.sin(t)[None, :]).mean(axis=1)
    if big.any():
        y = flat[big]
        p = np.zeros_like(y)
        q = np.zeros_like(y)
        n = len(_HANKEL) // 2
        for k in range(n - 1, -1, -1):
            sgn = -1.0 if k % 2 else 1.0
            p = p / (y * y) + sgn * _HANKEL[2 * k]
            q = q / (y * y) + sgn * _HANKEL[2 * k + 1]
        q = q / y
        phase = y - 0.25 * np.pi
        out[big] = np.sqrt(2.0 / (np.pi * y)) * (p * np.cos(phase) + q * np.sin(phase))
    return _wrap(out.reshape(arr.shape), scalar)


@lru_cache(maxsize=1)
def first_zero_j0(tol: float = 1e-13) -> float:
    """Smallest positive zero of J0, by bisection on [2, 3]."""
    lo, hi = 2.0, 3.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bessel_j0(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def heat_kernel(t, z, zp=0j):
    """Planar Brownian transition density (2 pi t)^-1 exp(-|z-z'|^2 / 2t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("heat_kernel requires t > 0")
    d2 = np.abs(np.asarray(z) - np.asarray(zp)) ** 2
    out = np.exp(-d2 / (2.0 * t)) / (2.0 * np.pi * t)
    return float(out) if np.ndim(out) == 0 else out


def green_radial(nu, d):
    """Resolvent density as a function of distance: K0(sqrt(2 nu) d) / pi."""
    if not nu > 0:
        raise DomainError("resolvent rate must be positive")
    d_arr, scalar = _as_array(d)
    if np.any(d_arr <= 0):
        raise SingularityError("resolvent kernel is singular at zero distance")
    return _wrap(np.asarray(bessel_k0(math.sqrt(2.0 * nu) * d_arr)) / np.pi, scalar)


def green_g(nu, z, zp):
    """Free nu-resolvent kernel G_nu(z, z') of planar Brownian motion."""
    d = np.abs(np.asarray(z, dtype=complex) - np.asarray(zp, dtype=complex))
    return green_radial(nu, d)


def green_tilde(q, z, zp):
    """Half-rate kernel G~_q = G_{q/2} / 2."""
    return 0.5 * green_g(0.5 * q, z, zp)


# Calibrated so the bound holds on the whole regime nu d^2 < 1/4 (see tests).
GREEN_REMAINDER_CONSTANT = 1.0


def green_expansion(nu: float, d: float) -> tuple[float, float]:
    """Leading log term of G_nu at distance d and a bound for the remainder."""
    if not (nu > 0 and d > 0):
        raise DomainError("green_expansion requires nu > 0 and d > 0")
    if nu * d * d >= 0.25:
        raise DomainError(f"nu*d^2 = {nu * d * d:.3g} is outside the small-distance regime")
    root = math.sqrt(nu) * d
    leading = (math.log(math.sqrt(2.0) / root) - EULER_GAMMA) / math.pi
    bound = GREEN_REMAINDER_CONSTANT * nu * d * d * math.log(1.0 / root)
    return leading, bound


def ring_kernel(nu, a, b):
    """Angular integral b * int G_nu(a, b e^{i theta}) d theta, in closed form.

    By the addition theorem for K0 only the zeroth mode survives, giving
    2 b I0(c min(a, b)) K0(c max(a, b)) with c = sqrt(2 nu).
    """
    if not nu > 0:
        raise DomainError("resolvent rate must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = math.sqrt(2.0 * nu)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    if np.any(hi <= 0):
        raise DomainError("ring kernel needs max(a, b) > 0")
    out = 2.0 * b * np.asarray(bessel_i0(c * lo)) * np.asarray(bessel_k0(c * hi))
    return float(out) if out.ndim == 0 else out


def k0_log_remainder(x, ctl: SeriesControl = DEFAULT_SERIES):
    """K0(x) + log(x/2) + gamma, which is O(x^2 log x) and vanishes at 0."""
    arr, scalar = _as_array(x)
    if np.any(arr < 0):
        raise DomainError("k0_log_remainder requires x >= 0")
    flat = arr.ravel()
    out = np.zeros_like(flat)
    small = (flat > 0) & (flat <= K0_SERIES_MAX)
    if small.any():
        y = flat[small]
        i0m1 = _quarter_square_series(y, 1.0, ctl) - 1.0
        tail = _quarter_square_series(y, 1.0, ctl, harmonic=True)
        out[small] = -(np.log(0.5 * y) + EULER_GAMMA) * i0m1 + tail
    big = flat > K0_SERIES_MAX
    if big.any():
        y = flat[big]
        out[big] = np.asarray(bessel_k0(y)) + np.log(0.5 * y) + EULER_GAMMA
    return _wrap(out.reshape(arr.shape), scalar)
