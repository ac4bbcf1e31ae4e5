"""Positive-mass machinery built on the two-dimensional Bessel process.

Radial resolvent densities, hitting-time transforms, the fixed-point
equation for the Feynman-Kac hitting functional R^f (solved by product
integration Nystrom), its disintegration over levels, the expansion
coefficients A_{mu,lambda} and the recovery of the critical resolvent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import quad
from .errors import DivergenceError, DomainError, EvaluationError, RegimeError
from .logenergy import energy_bracket
from .parallel import pmap
from .potentials import (
    POSITIVE_MASS,
    CouplingSchedule,
    Potential,
    RadialFunction,
    asymmetric_part,
    check_part,
    coupling_lambda,
    effective_potential,
)
from .specfun import (
    EULER_GAMMA,
    bessel_i0,
    bessel_j0,
    bessel_k0,
    first_zero_j0,
    green_tilde,
    ring_kernel,
)

NYSTROM_ORDER = 24
LEVEL_ORDER = 16
_ANGULAR_ORDER = 16
AGREEMENT_TOL = 1e-8

# Envelope constant for the small-rate expansion of the hitting transform,
# calibrated once at nu = 1e-6 on a, b in [0.01, 3] (max observed ratio 0.43)
# and frozen with margin.
HITTING_ENVELOPE_CONSTANT = 1.0


# ---------------------------------------------------------------------------
# resolvent densities and hitting transforms


def _angle_edges(a: float, b: float) -> NDArray:
    # dyadic refinement toward theta = 0, down to the scale where the
    # distance |a - b e^{i theta}| stops being dominated by |a - b|
    scale = abs(a - b) / math.sqrt(a * b)
    floor = max(0.25 * scale, 1e-14)
    edges = [math.pi]
    while edges[-1] > floor:
        edges.append(0.5 * edges[-1])
    edges.append(0.0)
    return np.array(edges[::-1])


def v_density(nu: float, a: float, b: float) -> float:
    """Radial nu-resolvent density V_nu(a, b) by angular quadrature.

    (b/pi) times the integral of K0(sqrt(2 nu)|a - b e^{i theta}|) over a full
    turn; the log singularity at theta = 0 (when a = b) is resolved by
    dyadic refinement.
    """
    if not nu > 0:
        raise DomainError("resolvent rate must be positive")
    if not (a > 0 and b > 0):
        raise DomainError("v_density needs a, b > 0")
    rule = quad.PiecewiseRule.build(_angle_edges(a, b), _ANGULAR_ORDER)
    th = rule.nodes
    d = np.sqrt((a - b) ** 2 + 4.0 * a * b * np.sin(0.5 * th) ** 2)
    c = math.sqrt(2.0 * nu)
    return float(2.0 * b / math.pi * np.dot(rule.weights, bessel_k0(c * d)))


def resolvent_mass(nu: float, a: float, tail: float = 50.0) -> tuple[float, float]:
    """Integral of v_density(nu, a, .) over (0, inf) and a bound on the cut tail.

    The level integral is cut at B = a + tail/sqrt(2 nu); the tail is bounded
    by 2 I0(c a) (B/c + 1/c^2) sqrt(pi/(2 c B)) e^{-c B}.
    """
    c = math.sqrt(2.0 * nu)
    B = a + tail / c
    edges = [0.0, a]
    x = a
    while x < min(1.0 / c, B):
        x = min(2.0 * x, B)
        edges.append(x)
    edges.extend(np.arange(x, B, 2.0 / c)[1:])
    edges.append(B)
    rule = quad.PiecewiseRule.build(edges, LEVEL_ORDER)
    vals = np.array([v_density(nu, a, b) for b in rule.nodes])
    bound = 2.0 * bessel_i0(c * a) * (B / c + 1.0 / c**2) * math.sqrt(math.pi / (2.0 * c * B)) * math.exp(-c * B)
    return float(rule.weights @ vals), float(bound)


def _r0(nu: float, a, b: float):
    c = math.sqrt(2.0 * nu)
    a = np.asarray(a, dtype=float)
    out = np.empty(a.shape)
    up = a <= b
    if np.any(up):
        out[up] = np.asarray(bessel_i0(c * a[up])) / bessel_i0(c * b)
    if np.any(~up):
        out[~up] = np.asarray(bessel_k0(c * a[~up])) / bessel_k0(c * b)
    return out


def r0_hitting(nu: float, a, b: float):
    """E_a[exp(-nu T_b)] for the two-dimensional Bessel process."""
    if not nu > 0:
        raise DomainError("resolvent rate must be positive")
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= 0) or not b > 0:
        raise DomainError("r0_hitting needs a, b > 0")
    out = _r0(nu, a_arr, b)
    return float(out) if out.ndim == 0 else out


def tilted_window(nu: float) -> float:
    """Upper end j_{0,1}/sqrt(2 nu) of the levels where the upward tilt is finite."""
    return first_zero_j0() / math.sqrt(2.0 * nu)


def r0_hitting_tilted(nu: float, a, b: float):
    """E_a[exp(+nu T_b)] for a <= b below the first zero of J0(. sqrt(2 nu))."""
    if not nu > 0:
        raise DomainError("tilt rate must be positive")
    a_arr = np.asarray(a, dtype=float)
    w = tilted_window(nu)
    if np.any(a_arr <= 0) or np.any(a_arr > b):
        raise DomainError("tilted hitting transform needs 0 < a <= b")
    if not b < w:
        raise DomainError(f"level b = {b:g} is outside the window b < j0,1/sqrt(2 nu) = {w:g}")
    c = math.sqrt(2.0 * nu)
    out = np.asarray(bessel_j0(c * a_arr)) / bessel_j0(c * b)
    return float(out) if out.ndim == 0 else out


def occupation_upper_bound(sup_rate: float, M: float, a, b: float):
    """Upper bound for R^f_{nu,b}(a), a >= b, when 0 <= f <= sup_rate on [0, M].

    Through the skew-product representation, the additive functional is
    dominated by sup_rate M^2 times the occupation time of (-inf, log M) by a
    one-dimensional Brownian motion run from log a to log b, whose
    exponential moment is cos(min(log(a/M), 0) k)/cos(log(b/M) k) with
    k = sqrt(2 sup_rate) M.
    """
    if sup_rate < 0 or not M > 0:
        raise DomainError("need sup_rate >= 0 and M > 0")
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr < b) or not b > 0:
        raise DomainError("occupation bound covers downward hitting, a >= b > 0")
    if b >= M or sup_rate == 0:
        out = np.ones_like(a_arr)
    else:
        k = math.sqrt(2.0 * sup_rate) * M
        if not abs(math.log(b / M)) * k < 0.5 * math.pi:
            raise DomainError(
                f"level b = {b:g} is outside the window |log(b/M)| < pi/(2 sqrt(2 sup_rate) M)")
        out = np.cos(np.minimum(np.log(a_arr / M), 0.0) * k) / math.cos(math.log(b / M) * k)
    return float(out) if out.ndim == 0 else out


def hitting_envelope(nu: float, a: float, b: float) -> float:
    """Envelope for |R0 - (1 - log-(b/a)/log(1/sqrt(2 nu)))| at small nu."""
    s = math.log(1.0 / math.sqrt(2.0 * nu))
    top = max(a, b)
    first = top * top * 2.0 * nu * max(math.log(1.0 / (top * math.sqrt(2.0 * nu))), 1.0)
    lm = max(math.log(a / b), 0.0)
    second = ((abs(math.log(b)) if a >= b else 0.0) + 1.0) * (lm + 1.0) / (s * s)
    return HITTING_ENVELOPE_CONSTANT * (first + second)


# ---------------------------------------------------------------------------
# the fixed point for R^f


def _breaks_of(f) -> tuple[float, tuple[float, ...]]:
    M = float(f.support_radius)
    return M, tuple(x for x in getattr(f, "breaks", ()) if 0 < x < M)


@dataclass
class HittingSolution:
    """Nystrom solution of the fixed-point equation for R^f_{nu,b}.

    ``values`` are R^f at ``rule.nodes``; calling the object evaluates the
    Nystrom interpolant R0(a)(1 - V{fR}(b)) + V{fR}(a) at any a >= 0.
    """

    b: float
    nu: float
    coupling: float
    rule: quad.PiecewiseRule | None
    values: NDArray
    v_fr_b: float
    residual: float
    _kernel: Callable | None = field(default=None, repr=False)

    @property
    def exponent_numerator(self) -> float:
        return 1.0 - self.v_fr_b

    def v_fr(self, a) -> NDArray:
        """V_nu{f R^f}(a)."""
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if self.rule is None:
            return np.zeros_like(a)
        return self.rule.product_weights(a, self._kernel) @ self.values

    def __call__(self, a):
        a_arr = np.atleast_1d(np.asarray(a, dtype=float))
        if np.any(a_arr < 0):
            raise DomainError("radius must be nonnegative")
        out = _r0(self.nu, a_arr, self.b) * self.exponent_numerator + self.v_fr(a_arr)
        return float(out[0]) if np.ndim(a) == 0 else out


def solve_rf(phi_eff: RadialFunction, coupling: float, nu: float, b: float,
             order: int = NYSTROM_ORDER, require_positive_exponent: bool = False) -> HittingSolution:
    """Solve R = R0 (1 - V{fR}(b)) + V{fR} with f = coupling * phi_eff.

    The unknown lives on a piecewise Gauss grid over the support of f, cut at
    the jumps of f and at b; V{f .} is applied by product integration of the
    closed-form ring kernel against the piecewise polynomial interpolant.
    """
    if not nu > 0:
        raise DomainError("resolvent rate must be positive")
    if not b > 0:
        raise DomainError("level b must be positive")
    M, brk = _breaks_of(phi_eff)
    if coupling == 0 or M == 0:
        return HittingSolution(b, nu, coupling, None, np.zeros(0), 0.0, 0.0)

    def kernel(t, x):
        return ring_kernel(nu, t, x) * coupling * phi_eff(x)

    edges = [0.0, *brk, M] + ([b] if b < M else [])
    rule = quad.PiecewiseRule.build(edges, order)
    W = rule.product_weights(np.append(rule.nodes, b), kernel)
    w_nodes, w_b = W[:-1], W[-1]
    r0 = _r0(nu, rule.nodes, b)
    A = np.eye(len(r0)) - (w_nodes - np.outer(r0, w_b))
    try:
        if np.linalg.cond(A) > 1e13:
            raise EvaluationError("Nystrom system is numerically singular", node=b)
        vals = np.linalg.solve(A, r0)
    except np.linalg.LinAlgError as exc:
        raise EvaluationError("singular Nystrom system", node=b) from exc
    v_b = float(w_b @ vals)
    if not math.isfinite(v_b):
        raise EvaluationError("V{fR}(b) is not finite", node=b)
    if require_positive_exponent and v_b >= 1.0:
        raise DivergenceError(f"1 - V{{fR}}(b) = {1 - v_b:.3e} <= 0 at b = {b:g}", index=b, value=1 - v_b)
    sol = HittingSolution(b, nu, coupling, rule, vals, v_b, 0.0, kernel)
    # consistency residual: Nystrom interpolant vs. segment polynomial off the nodes
    lo, hi = rule.edges[:-1], rule.edges[1:]
    chk = (lo[:, None] + (hi - lo)[:, None] * np.array([0.0, 0.25, 0.5, 0.75])[None, :]).ravel()
    chk = chk[chk > 0]
    poly = rule.interpolation_matrix(chk) @ vals
    sol.residual = float(np.max(np.abs(poly - sol(chk))))
    return sol


def inverse_local_time_transform(sol: HittingSolution, a: float, ell: float) -> float:
    """E_a[exp(-nu tau_ell + A_f(tau_ell))] at the inverse local time of level b."""
    if ell < 0:
        raise DomainError("local time must be nonnegative")
    vbb = ring_kernel(sol.nu, sol.b, sol.b)
    return float(sol(a) * math.exp(-ell * sol.exponent_numerator / vbb))


class HittingFamily:
    """Solutions of the fixed point for one f and rate, cached per level b."""

    def __init__(self, phi_eff: RadialFunction, coupling: float, nu: float, order: int = NYSTROM_ORDER):
        self.phi_eff = phi_eff
        self.coupling = coupling
        self.nu = nu
        self.order = order
        self._cache: dict[float, HittingSolution] = {}

    @property
    def breaks(self) -> tuple[float, ...]:
        M, brk = _breaks_of(self.phi_eff)
        return (*brk, M) if self.coupling != 0 else ()

    def solve(self, b: float) -> HittingSolution:
        b = float(b)
        if b not in self._cache:
            self._cache[b] = solve_rf(self.phi_eff, self.coupling, self.nu, b, self.order)
        return self._cache[b]


def disintegrate(family: HittingFamily, h, a, breaks: Sequence[float] = (), lower: float = 0.0,
                 upper: float | None = None, order: int = LEVEL_ORDER):
    """G^f_nu{h} at radius a, integrated level by level.

    The local-time integral is done in closed form,
    R^f_b(a) V(b, b)/(1 - V{fR^f}(b)), and the level b by Gauss quadrature
    cut at the jumps of h and f and at a.  ``a`` may be an array.
    """
    a_arr = np.atleast_1d(np.asarray(a, dtype=float))
    if upper is None:
        upper = float(h.support_radius)
    brk = tuple(getattr(h, "breaks", ())) + tuple(breaks) + family.breaks + tuple(a_arr)
    edges = [lower, *(x for x in brk if lower < x < upper), upper]
    rule = quad.PiecewiseRule.build(edges, order)
    sols = pmap(family.solve, rule.nodes)
    for s in sols:
        if s.exponent_numerator <= 0:
            raise DivergenceError(
                f"nonpositive excursion exponent 1 - V{{fR}}(b) = {s.exponent_numerator:.3e} at b = {s.b:g}",
                index=s.b, value=s.exponent_numerator)
    hv = np.asarray(h(rule.nodes), dtype=float)
    vbb = ring_kernel(family.nu, rule.nodes, rule.nodes)
    rows = np.array([s(a_arr) for s in sols])  # (n_b, n_a)
    den = np.array([s.exponent_numerator for s in sols])
    out = (rule.weights * hv * vbb / den) @ rows
    return float(out[0]) if np.ndim(a) == 0 else out


# ---------------------------------------------------------------------------
# expansion coefficients


def _profile(phi: Potential) -> Callable:
    return lambda r: phi.radial_average(np.asarray(r, dtype=float)).reshape(np.shape(r))


def _radial_rule(phi: Potential, cuts: Sequence[float] = (), order: int = NYSTROM_ORDER):
    M = phi.support_radius
    edges = [0.0, *phi.radial_breaks, *[c for c in cuts if 0 < c < M], M]
    return quad.PiecewiseRule.build(edges, order)


def _log_mean(phi: Potential, x: float) -> float:
    """Integral of phi_bar(z) log|x - z| over the plane, via the mean-value property."""
    rule = _radial_rule(phi, (x,))
    r = rule.nodes
    return float(rule.weights @ (2.0 * math.pi * r * _profile(phi)(r) * np.log(np.maximum(x, r))))


def _a_direct(phi: Potential, mu: float, lam: float, q: float, a: float, b: float, m: float, energy: float) -> float:
    M = phi.support_radius
    prof = _profile(phi)

    def bar(z):
        return prof(np.abs(z))

    breaks = tuple(phi.radial_breaks)
    logminus = quad.integrate_disc(
        lambda z: bar(z) * np.maximum(np.log(np.abs(z) / b), 0.0), M, radial_breaks=breaks + (b,))
    log_b = -quad.integrate_log_kernel(bar, complex(b), M, breaks)
    log_a = -quad.integrate_log_kernel(bar, complex(a), M, breaks)
    return (
        (mu * mu - mu) * logminus / m
        + (mu * mu * log_b - mu * log_a) / m
        + mu * (math.log(math.sqrt(2.0) / math.sqrt(q)) - EULER_GAMMA) + lam
        + mu * mu * math.pi * energy / (m * m)
    )


def _a_sharp(phi: Potential, mu: float, lam: float, q: float, a: float, b: float) -> float:
    prof = _profile(phi)
    rule = _radial_rule(phi, (b,))
    r = rule.nodes
    dens = 2.0 * math.pi * r * prof(r)
    m = float(rule.weights @ dens)
    const = mu * (math.log(math.sqrt(2.0) / math.sqrt(q)) - EULER_GAMMA) + lam
    a0_minus_a2 = -float(rule.weights @ (dens * np.maximum(np.log(r / b), 0.0))) / m
    hat_energy = 0.0 if phi.is_radial else energy_bracket(asymmetric_part(phi))
    a2 = mu * math.pi * hat_energy / (m * m)

    def a1(x):
        return const - mu * _log_mean(phi, x) / m

    outer = _radial_rule(phi)
    s = outer.nodes
    nested = float(outer.weights @ (2.0 * math.pi * s * prof(s) * np.array([_log_mean(phi, x) for x in s])))
    a3 = const - mu * nested / (m * m)
    return (mu - mu * mu) * a0_minus_a2 + a1(a) - mu * a1(b) + mu * (a2 + a3)


@dataclass(frozen=True)
class CoefficientRoutes:
    direct: float
    sharp: float

    @property
    def value(self) -> float:
        return self.direct

    @property
    def discrepancy(self) -> float:
        return abs(self.direct - self.sharp)


def a_mulambda(phi: Potential, mu: float, lam: float, q: float, a: float, b: float,
               return_routes: bool = False, energy: float | None = None):
    """First-order coefficient A_{mu,lambda}(a, b) of the positive-mass expansions.

    Computed twice: from its defining plane integrals (2D singular
    quadrature) and from the decomposition into radial and asymmetric parts
    (1D mean-value integrals plus the energy of the asymmetric part).  The two
    must agree to AGREEMENT_TOL.
    """
    if not (a > 0 and b > 0 and q > 0):
        raise DomainError("a_mulambda needs a, b, q > 0")
    m = phi.mass()
    if not m > 0:
        raise RegimeError("A_{mu,lambda} needs positive total mass")
    if energy is None:
        energy = energy_bracket(phi)
    routes = CoefficientRoutes(
        direct=_a_direct(phi, mu, lam, q, a, b, m, energy),
        sharp=_a_sharp(phi, mu, lam, q, a, b),
    )
    if routes.discrepancy > AGREEMENT_TOL * max(1.0, abs(routes.direct)):
        raise EvaluationError(
            f"A_mu,lambda routes disagree: {routes.direct!r} vs {routes.sharp!r}", node=(a, b))
    return routes if return_routes else routes.direct


def beta_of(phi: Potential, lam: float = 0.0, q_unused: float | None = None, energy: float | None = None) -> float:
    """The constant beta of the critical positive-mass limit."""
    m = phi.mass()
    if not m > 0:
        raise RegimeError("beta needs positive total mass")
    if energy is None:
        energy = energy_bracket(phi)
    # -m^-2 * double log integral = pi * energy / m^2
    return math.exp(2.0 * (math.pi * energy / (m * m) + 0.5 * math.log(2.0) + lam - EULER_GAMMA))


def limiting_kernel(q: float, beta: float, z, zp) -> float:
    """G~_q(z, z') + (4 pi / log(q/beta)) G~_q(z, 0) G~_q(z', 0)."""
    if not beta > 0:
        raise DomainError("beta must be positive")
    if not q > beta:
        raise DomainError(f"q = {q:g} must exceed beta = {beta:g} (resolvent set)")
    coef = 4.0 * math.pi / math.log(q / beta)
    return float(green_tilde(q, z, zp) + coef * green_tilde(q, z, 0j) * green_tilde(q, zp, 0j))


# ---------------------------------------------------------------------------
# expansion bookkeeping


def has_negative_part(phi: Potential) -> bool:
    rule = quad.centered_rule(0j, phi.support_radius, phi.radial_breaks, phi.angular_breaks)
    return bool(np.min(phi(rule.points)) < 0)


@dataclass(frozen=True)
class ExpansionDomain:
    """Cut-off level M_eps and the two admissible regions of (a, b)."""

    M_phi: float
    eps: float
    negative_part: bool = False

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise DomainError("eps must lie in (0, 1)")
        if not self.M_phi > 0:
            raise DomainError("M_phi must be positive")
        if self.negative_part and not self.L > 1:
            raise DomainError("need log(1/eps) > 1 when phi has a negative part")

    @property
    def L(self) -> float:
        return math.log(1.0 / self.eps)

    @property
    def M_eps(self) -> float:
        cut = 1.0 / math.log(self.L) if self.negative_part else self.L ** -0.75
        return min(0.5 * self.M_phi, cut)

    def in_geq(self, a: float, b: float) -> bool:
        return self.M_phi >= a >= b >= self.M_eps

    def in_leq(self, a: float, b: float) -> bool:
        return 0 < a <= b <= self.M_phi

    def contains(self, a: float, b: float) -> bool:
        return self.in_geq(a, b) or self.in_leq(a, b)

    @classmethod
    def for_potential(cls, phi: Potential, eps: float, M_phi: float | None = None) -> "ExpansionDomain":
        M = phi.support_radius if M_phi is None else M_phi
        if M < phi.support_radius:
            raise DomainError("M_phi must bound the support")
        return cls(M, eps, has_negative_part(phi))


@dataclass
class ExpansionReport:
    """Measured vs predicted values on a grid of L = log(1/eps)."""

    which: str
    L: NDArray
    a: NDArray
    b: NDArray
    measured: NDArray
    leading: NDArray
    coefficient: NDArray
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        for name in ("L", "a", "b", "measured", "leading", "coefficient"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.L)
        if any(len(getattr(self, k)) != n for k in ("a", "b", "measured", "leading", "coefficient")):
            raise DomainError("report columns must be aligned")

    @property
    def eps(self) -> NDArray:
        return np.exp(-self.L)

    @property
    def predicted(self) -> NDArray:
        coef = np.where(np.isnan(self.coefficient), 0.0, self.coefficient)
        return self.leading + coef / self.L

    @property
    def residual(self) -> NDArray:
        return self.measured - self.predicted

    @property
    def residual_x_logeps(self) -> NDArray:
        return self.residual * self.L

    @property
    def relative_error(self) -> NDArray:
        return np.abs(self.residual) / np.abs(self.predicted)

    def groups(self):
        keys = sorted(set(zip(self.a.tolist(), self.b.tolist())))
        for key in keys:
            idx = np.flatnonzero((self.a == key[0]) & (self.b == key[1]))
            yield key, idx[np.argsort(self.L[idx])]

    def decreasing(self) -> bool:
        """|residual * L| strictly decreases along L for every (a, b)."""
        ok = True
        for _, idx in self.groups():
            r = np.abs(self.residual_x_logeps[idx])
            ok &= bool(np.all(np.diff(r) < 0) or r.max() <= 1e-12)
        return ok

    def spread(self) -> dict[float, float]:
        """Per L: (max - min) of the measured values over the a-grid, relative to the prediction."""
        out = {}
        for L in np.unique(self.L):
            idx = self.L == L
            out[float(L)] = float(np.ptp(self.measured[idx]) / np.abs(self.predicted[idx]).max())
        return out

    def rows(self) -> list[dict]:
        cols = {
            "L": self.L, "eps": self.eps, "a": self.a, "b": self.b, "measured": self.measured,
            "predicted": self.predicted, "residual": self.residual,
            "residual_x_logeps": self.residual_x_logeps,
        }
        return [{k: float(v[i]) for k, v in cols.items()} for i in range(len(self.L))]


EXPANSIONS = ("asymp_U", "finalI", "Qf")


def _log_minus(x: float) -> float:
    return max(-math.log(x), 0.0)


def _effective(phi: Potential, schedule: CouplingSchedule, eps: float, check: RadialFunction | None):
    bar_grid = None if check is None else check.grid
    return effective_potential(phi, schedule, eps, grid=bar_grid, check=check)


def expansion_check(phi: Potential, mu: float, lam: float, q: float, a: float, b: float,
                    L_grid: Sequence[float], which: str, M_phi: float | None = None,
                    order: int = NYSTROM_ORDER) -> ExpansionReport:
    """Compare one of the three small-eps expansions with its numerical value.

    asymp_U: V_{q eps^2}(a, b) against the log-kernel approximation.
    finalI:  V{f R^f}(b) against mu + A(b, b)/L.
    Qf:      R^f(a) against 1 - ((1-mu) log-(b/a) + A(b, b) - A(a, b))/L.
    """
    if which not in EXPANSIONS:
        raise DomainError(f"which must be one of {EXPANSIONS}")
    if which == "finalI":
        a = b
    L_grid = [float(x) for x in L_grid]
    for L in L_grid:
        dom = ExpansionDomain.for_potential(phi, math.exp(-L), M_phi)
        if not dom.contains(a, b):
            raise DomainError(f"(a, b) = ({a:g}, {b:g}) is outside the expansion domain at L = {L:g}"
                              f" (M_eps = {dom.M_eps:.4g}, M_phi = {dom.M_phi:g})")
    measured, leading, coef = [], [], []
    if which == "asymp_U":
        for L in L_grid:
            eps = math.exp(-L)
            measured.append(v_density(q * eps * eps, a, b))
            # the log-kernel approximation has no separate 1/L term
            leading.append(2.0 * b * (L + math.log(math.sqrt(2.0 / q)) - EULER_GAMMA - math.log(max(a, b))))
            coef.append(0.0)
    else:
        if phi.mass_class != POSITIVE_MASS:
            raise RegimeError("the hitting expansions are for positive-mass potentials")
        m = phi.mass()
        energy = energy_bracket(phi)
        a_bb = a_mulambda(phi, mu, lam, q, b, b, energy=energy)
        a_ab = a_bb if a == b else a_mulambda(phi, mu, lam, q, a, b, energy=energy)
        schedule = CouplingSchedule(POSITIVE_MASS, mu, lam)
        check = None if phi.is_radial else check_part(phi)

        def one(L):
            eps = math.exp(-L)
            f = _effective(phi, schedule, eps, check)
            sol = solve_rf(f, coupling_lambda(schedule, eps, m), q * eps * eps, b, order)
            return sol.v_fr_b if which == "finalI" else sol(a)

        measured = pmap(one, L_grid)
        if which == "finalI":
            leading = [mu] * len(L_grid)
            coef = [a_bb] * len(L_grid)
        else:
            leading = [1.0] * len(L_grid)
            coef = [-((1.0 - mu) * _log_minus(b / a) + a_bb - a_ab)] * len(L_grid)
    n = len(L_grid)
    rep = ExpansionReport(which, L_grid, [a] * n, [b] * n, measured, leading, coef)
    if n > 1 and not rep.decreasing():
        rep.flags.append(f"residual*L is not decreasing along L for (a, b) = ({a:g}, {b:g})")
    return rep


def cutoff(m_eps: float) -> Callable:
    """Piecewise-linear ramp: 0 below m_eps, 1 above 2 m_eps."""
    return lambda r: np.clip((np.asarray(r, dtype=float) - m_eps) / m_eps, 0.0, 1.0)


def critical_recovery(phi: Potential, lam: float, q: float, L_grid: Sequence[float],
                      z_radii: Sequence[float] = (0.1, 0.5, 1.0), M_phi: float | None = None,
                      order: int = LEVEL_ORDER) -> ExpansionReport:
    """Lambda^2 G^f{phi_bar_bar upsilon}(z) at mu = 1 against 2 pi/(m log(q/beta)).

    Uses the level disintegration with the local-time integral in closed
    form.  beta comes from ``beta_of`` and is never fitted.
    """
    if phi.mass_class != POSITIVE_MASS or has_negative_part(phi):
        raise RegimeError("critical recovery needs a nonnegative potential with positive mass")
    m = phi.mass()
    energy = energy_bracket(phi)
    beta = beta_of(phi, lam, energy=energy)
    if not q > beta:
        raise DomainError(f"q = {q:g} must exceed beta = {beta:g}")
    target = 2.0 * math.pi / (m * math.log(q / beta))
    schedule = CouplingSchedule(POSITIVE_MASS, 1.0, lam)
    check = None if phi.is_radial else check_part(phi)
    z_radii = [float(z) for z in z_radii]
    if any(z <= 0 for z in z_radii):
        raise DomainError("z radii must be positive")
    Ls, As, meas = [], [], []
    for L in L_grid:
        L = float(L)
        eps = math.exp(-L)
        dom = ExpansionDomain.for_potential(phi, eps, M_phi)
        f = _effective(phi, schedule, eps, check)
        lam_eps = coupling_lambda(schedule, eps, m)
        fam = HittingFamily(f, lam_eps, q * eps * eps)
        ramp = cutoff(dom.M_eps)

        def h(r, f=f, ramp=ramp):
            return f(r) * ramp(r)

        try:
            vals = disintegrate(fam, h, z_radii, breaks=(dom.M_eps, 2 * dom.M_eps),
                                lower=dom.M_eps, upper=f.support_radius, order=order)
        except DivergenceError as exc:
            raise DivergenceError(f"L = {L:g}: {exc}", index=(L, exc.index), value=exc.value) from exc
        Ls += [L] * len(z_radii)
        As += z_radii
        meas += list(lam_eps**2 * np.asarray(vals))
    n = len(Ls)
    rep = ExpansionReport("critical", Ls, As, [float("nan")] * n, meas, [target] * n, [float("nan")] * n)
    return rep


def stable_q(phi: Potential, lam: float, L_grid: Sequence[float], q_values: Sequence[float],
             levels: int = 8) -> float | None:
    """Smallest q in q_values whose excursion exponents stay positive on the L-grid.

    The exponent 1 - V{fR^f}(b) is checked on a few levels b between M_eps
    and the support radius; returns None when no q qualifies.
    """
    m = phi.mass()
    schedule = CouplingSchedule(POSITIVE_MASS, 1.0, lam)
    check = None if phi.is_radial else check_part(phi)
    for q in sorted(q_values):
        ok = True
        for L in L_grid:
            eps = math.exp(-float(L))
            dom = ExpansionDomain.for_potential(phi, eps)
            f = _effective(phi, schedule, eps, check)
            lam_eps = coupling_lambda(schedule, eps, m)
            for b in np.linspace(dom.M_eps, f.support_radius, levels):
                if solve_rf(f, lam_eps, q * eps * eps, float(b)).exponent_numerator <= 0:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return float(q)
    return None


__all__ = [
    "v_density", "resolvent_mass", "r0_hitting", "r0_hitting_tilted", "tilted_window",
    "occupation_upper_bound", "hitting_envelope", "HittingSolution", "solve_rf",
    "inverse_local_time_transform", "HittingFamily", "disintegrate", "a_mulambda",
    "CoefficientRoutes", "beta_of", "limiting_kernel", "ExpansionDomain", "ExpansionReport",
    "expansion_check", "cutoff", "critical_recovery", "stable_q", "has_negative_part",
]
