"""Potentials, their radial decomposition and the coupling schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import quad
from .errors import DomainError, RegimeError

ZERO_MASS = "zero_mass"
POSITIVE_MASS = "positive_mass"

DEFAULT_GRID_POINTS = 256
_JUMP = 1e-12


@dataclass(frozen=True)
class Potential:
    """A bounded plane function with compact support and the metadata the
    quadratures need: the circles (``radial_breaks``) and rays from the
    origin (``angular_breaks``) across which it may jump."""

    name: str
    func: Callable[[NDArray[np.complex128]], NDArray]
    support_radius: float
    sup_bound: float
    mass_class: str
    is_radial: bool
    radial_breaks: tuple[float, ...] = ()
    angular_breaks: tuple[float, ...] = ()
    profile: Callable[[NDArray], NDArray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.support_radius > 0:
            raise DomainError("support radius must be positive")
        if self.mass_class not in (ZERO_MASS, POSITIVE_MASS):
            raise DomainError(f"unknown mass class {self.mass_class!r}")

    def __call__(self, z) -> NDArray:
        z = np.asarray(z, dtype=complex)
        out = np.asarray(self.func(z), dtype=float)
        return np.where(np.abs(z) <= self.support_radius, out, 0.0)

    def integrate(self, f=None, **kw) -> float:
        """Integral of phi * f over the support (f defaults to 1)."""
        if f is None:
            g = self
        else:
            g = lambda z: self(z) * f(z)  # noqa: E731
        return quad.integrate_disc(
            g, self.support_radius,
            radial_breaks=self.radial_breaks, angular_breaks=self.angular_breaks, **kw,
        )

    def mass(self) -> float:
        return self.integrate()

    def abs_mass(self) -> float:
        return quad.integrate_disc(
            lambda z: np.abs(self(z)), self.support_radius,
            radial_breaks=self.radial_breaks, angular_breaks=self.angular_breaks,
        )

    def radial_average(self, r) -> NDArray:
        """Angular average of the potential on circles of radius r."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.profile is not None:
            return np.where(r <= self.support_radius, self.profile(r), 0.0)
        return angular_average(self, r, self.angular_breaks)

    def check(self) -> "Potential":
        """Verify the mass-class and sup-bound invariants by quadrature."""
        m = self.mass()
        scale = math.pi * self.support_radius**2 * max(self.sup_bound, 1e-300)
        if self.mass_class == ZERO_MASS:
            if abs(m) > 1e-10 * scale:
                raise DomainError(f"{self.name}: declared zero mass but integral is {m:.3e}")
            if not self.abs_mass() > 0:
                raise DomainError(f"{self.name}: zero-mass potential vanishes identically")
        elif not m > 0:
            raise DomainError(f"{self.name}: declared positive mass but integral is {m:.3e}")
        rule = quad.polar_rule(self.support_radius, radial_breaks=self.radial_breaks)
        vals = np.abs(self(rule.points()))
        if vals.max() > self.sup_bound * (1 + 1e-12):
            raise DomainError(f"{self.name}: sup bound {self.sup_bound} exceeded")
        return self

    def scaled(self, c: float, name: str | None = None) -> "Potential":
        """The potential c * phi."""
        f, prof = self.func, self.profile
        cls = self.mass_class
        if c <= 0 and cls == POSITIVE_MASS:
            raise DomainError("scaling a positive-mass potential by c <= 0 leaves its class")
        return replace(
            self,
            name=name or f"{c:g}*{self.name}",
            func=lambda z: c * f(z),
            sup_bound=abs(c) * self.sup_bound,
            profile=None if prof is None else (lambda r: c * prof(r)),
        )

    def dilated(self, lam: float) -> "Potential":
        """The potential z -> phi(lam * z)."""
        if not lam > 0:
            raise DomainError("dilation factor must be positive")
        f, prof = self.func, self.profile
        return replace(
            self,
            name=f"{self.name}({lam:g}z)",
            func=lambda z: f(lam * np.asarray(z)),
            support_radius=self.support_radius / lam,
            radial_breaks=tuple(b / lam for b in self.radial_breaks),
            profile=None if prof is None else (lambda r: prof(lam * np.asarray(r))),
        )


def angular_average(f, r, angular_breaks: Sequence[float] = (), n: int = 48) -> NDArray:
    """(1/2 pi) * integral of f(r e^{i theta}) d theta, split at the given angles."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    cuts = np.sort(quad._wrap_angle(np.asarray(angular_breaks, dtype=float)))
    if len(cuts) == 0:
        theta = -np.pi + 2.0 * np.pi * (np.arange(2 * n) + 0.5) / (2 * n)
        w = np.full(2 * n, 1.0 / (2 * n))
    else:
        s, ws = quad.gauss_legendre(n)
        lo = cuts
        hi = np.append(cuts[1:], cuts[0] + 2.0 * np.pi)
        theta = (lo[:, None] + (hi - lo)[:, None] * s[None, :]).ravel()
        w = ((hi - lo)[:, None] * ws[None, :]).ravel() / (2.0 * np.pi)
    vals = np.asarray(f(r[:, None] * np.exp(1j * theta)[None, :]), dtype=float)
    return vals @ w


# ---------------------------------------------------------------------------
# radial functions


@dataclass(frozen=True)
class RadialFunction:
    """Piecewise-linear function of the radius.

    A jump at radius r is represented by two grid points r and r(1 + 1e-12);
    such radii are listed in ``breaks`` so that quadratures can split there.
    Outside the grid the function equals ``outside`` beyond the last point
    and the first value below the first point.
    """

    grid: NDArray
    values: NDArray
    breaks: tuple[float, ...] = ()
    outside: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise DomainError("grid and values must be 1-d arrays of equal length")
        if np.any(np.diff(g) <= 0) or g[0] < 0:
            raise DomainError("grid must be nonnegative and strictly increasing")
        if not np.all(np.isfinite(v)):
            raise DomainError("values must be finite")

    def __call__(self, r) -> NDArray:
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.grid, self.values, left=self.values[0], right=self.outside)

    @property
    def support_radius(self) -> float:
        nz = np.flatnonzero(self.values != 0)
        return float(self.grid[nz[-1]]) if len(nz) else 0.0

    def __add__(self, other: "RadialFunction") -> "RadialFunction":
        grid = np.union1d(self.grid, other.grid)
        return RadialFunction(
            grid, self(grid) + other(grid),
            tuple(sorted(set(self.breaks) | set(other.breaks))),
            self.outside + other.outside,
        )

    def __mul__(self, c: float) -> "RadialFunction":
        return RadialFunction(self.grid, c * self.values, self.breaks, c * self.outside)

    __rmul__ = __mul__

    def integrate_area(self, h=None, order: int = 24) -> float:
        """Integral over the plane of the radial function (times h(r) if given)."""
        edges = [0.0, *self.breaks, self.grid[-1]]
        rule = quad.PiecewiseRule.build(np.unique(np.concatenate([edges, self.grid])), order=4)
        vals = self(rule.nodes)
        if h is not None:
            vals = vals * h(rule.nodes)
        return float(2.0 * np.pi * np.dot(rule.weights * rule.nodes, vals))


def default_grid(M: float, breaks: Sequence[float] = (), n: int = DEFAULT_GRID_POINTS) -> NDArray:
    """Geometric near the origin, uniform beyond, with every break doubled."""
    n_geo = n // 8
    uniform = np.linspace(0.0, M, n - n_geo)
    geo = np.geomspace(1e-6 * M, uniform[1], n_geo, endpoint=False)
    pts = np.union1d(uniform, geo)
    for b in breaks:
        if 0 < b < M:
            pts = pts[np.abs(pts - b) > 2 * _JUMP * b]
            pts = np.union1d(pts, [b, b * (1 + _JUMP)])
    return pts


def _sample_with_jumps(fn, grid, breaks):
    # evaluate slightly inside each side of a jump
    x = grid.copy()
    for b in breaks:
        x[grid == b] = b * (1 - _JUMP)
        x[grid == b * (1 + _JUMP)] = b * (1 + 2 * _JUMP)
    return fn(x)


def radial_part(phi: Potential, grid=None) -> RadialFunction:
    """Angular average of phi sampled on a radial grid."""
    breaks = tuple(b for b in phi.radial_breaks if b < phi.support_radius)
    if grid is None:
        grid = default_grid(phi.support_radius, breaks)
    grid = np.asarray(grid, dtype=float)
    vals = _sample_with_jumps(phi.radial_average, grid, breaks)
    return RadialFunction(grid, vals, breaks)


def asymmetric_part(phi: Potential) -> Potential:
    """phi minus its radial part, as a (zero-mass) potential."""
    if phi.is_radial:
        return replace(phi, name=f"hat({phi.name})", func=lambda z: np.zeros(np.shape(z)),
                       sup_bound=0.0, mass_class=ZERO_MASS, profile=lambda r: np.zeros(np.shape(r)))
    f = phi.func
    avg = phi.radial_average
    return replace(
        phi,
        name=f"hat({phi.name})",
        func=lambda z: f(z) - avg(np.abs(z)).reshape(np.shape(z)),
        sup_bound=2.0 * phi.sup_bound,
        mass_class=ZERO_MASS,
        is_radial=False,
        profile=lambda r: np.zeros(np.shape(r)),
    )


def check_part(phi: Potential, grid=None, n_angular: int = 24) -> RadialFunction:
    """Radial average of phi_hat * (kappa * phi_hat), phi_hat = phi - radial part."""
    breaks = tuple(b for b in phi.radial_breaks if b < phi.support_radius)
    if grid is None:
        grid = default_grid(phi.support_radius, breaks, n=64)
    grid = np.asarray(grid, dtype=float)
    if phi.is_radial:
        return RadialFunction(grid, np.zeros_like(grid), breaks)
    hat = asymmetric_part(phi)

    def energy_density(z):
        z = np.asarray(z, dtype=complex)
        out = np.empty(z.shape)
        for idx, p in np.ndenumerate(z):
            h = float(hat(p))
            if h == 0.0:
                out[idx] = 0.0
                continue
            pot = quad.integrate_log_kernel(
                hat, p, hat.support_radius, hat.radial_breaks, hat.angular_breaks) / math.pi
            out[idx] = h * pot
        return out

    vals = _sample_with_jumps(
        lambda r: angular_average(energy_density, r, phi.angular_breaks, n=n_angular), grid, breaks)
    return RadialFunction(grid, vals, breaks)


# ---------------------------------------------------------------------------
# coupling schedules


@dataclass(frozen=True)
class CouplingSchedule:
    """Coupling constant Lambda_eps as a function of eps.

    Zero mass:      mu pi/(E L) + lambda' pi/(E L^{3/2}) + lambda pi/(E L^2)
    Positive mass:  mu pi/(m L) + lambda pi/(m L^2)
    with L = log(1/eps), E the logarithmic energy and m the mass.
    """

    regime: str
    mu: float
    lam: float = 0.0
    lambda_prime: float = 0.0

    def __post_init__(self):
        if self.regime not in (ZERO_MASS, POSITIVE_MASS):
            raise DomainError(f"unknown regime {self.regime!r}")
        if self.regime == ZERO_MASS and not 0 < self.mu <= 1:
            raise DomainError("zero-mass schedules need mu in (0, 1]")
        if self.regime == POSITIVE_MASS and not self.mu > 0:
            raise DomainError("positive-mass schedules need mu > 0")
        if self.regime == POSITIVE_MASS and self.lambda_prime != 0:
            raise DomainError("lambda' only enters zero-mass schedules")


def coupling_lambda(schedule: CouplingSchedule, eps: float, normalizer: float) -> float:
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    if not normalizer > 0:
        raise DomainError("energy/mass normalizer must be positive")
    L = math.log(1.0 / eps)
    c = math.pi / normalizer
    if schedule.regime == ZERO_MASS:
        return c * (schedule.mu / L + schedule.lambda_prime / L**1.5 + schedule.lam / L**2)
    return c * (schedule.mu / L + schedule.lam / L**2)


def effective_potential(phi: Potential, schedule: CouplingSchedule, eps: float,
                        grid=None, check: RadialFunction | None = None) -> RadialFunction:
    """phi_bar + Lambda_eps * phi_check on a radial grid."""
    if schedule.regime != POSITIVE_MASS:
        raise RegimeError("effective potential is defined for the positive-mass regime")
    bar = radial_part(phi, grid)
    if phi.is_radial:
        return bar
    lam = coupling_lambda(schedule, eps, phi.mass())
    chk = check if check is not None else check_part(phi, bar.grid)
    return RadialFunction(bar.grid, bar.values + lam * chk(bar.grid), bar.breaks)


# ---------------------------------------------------------------------------
# constructors and registry


def _indicator(radius):
    return lambda z: (np.abs(z) <= radius).astype(float)


def disc(radius: float = 1.0) -> Potential:
    return Potential(
        name="disc" if radius == 1.0 else f"disc:{radius:g}",
        func=_indicator(radius),
        support_radius=radius,
        sup_bound=1.0,
        mass_class=POSITIVE_MASS,
        is_radial=True,
        profile=lambda r: (np.asarray(r) <= radius).astype(float),
    )


def phi_r(R: float) -> Potential:
    """Zero-mass potential 1_{B_R} - R^2 1_{B_1}."""
    if not R > 1:
        raise DomainError("phi_R needs R > 1")
    R = float(R)

    def prof(r):
        r = np.asarray(r)
        return (r <= R).astype(float) - R * R * (r <= 1.0)

    return Potential(
        name=f"phiR:{R:g}",
        func=lambda z: prof(np.abs(z)),
        support_radius=R,
        sup_bound=R * R - 1.0 if R * R - 1.0 >= 1.0 else 1.0,
        mass_class=ZERO_MASS,
        is_radial=True,
        radial_breaks=(1.0,),
        profile=prof,
    )


def halfdisc() -> Potential:
    """Indicator of the right half of the unit disc."""
    return Potential(
        name="halfdisc",
        func=lambda z: ((np.abs(z) <= 1.0) & (np.real(z) > 0)).astype(float),
        support_radius=1.0,
        sup_bound=1.0,
        mass_class=POSITIVE_MASS,
        is_radial=False,
        angular_breaks=(-0.5 * math.pi, 0.5 * math.pi),
        profile=lambda r: 0.5 * (np.asarray(r) <= 1.0),
    )


DIPOLE_RADIAL_WEIGHT = 0.25


def dipole() -> Potential:
    """Re(z) on the unit disc plus a radial zero-mass correction.

    The radial term c(1_{B_1} - 4 1_{B_{1/2}}) keeps the total mass zero and
    makes the potential genuinely non-radial without being odd.
    """
    c = DIPOLE_RADIAL_WEIGHT

    def prof(r):
        r = np.asarray(r)
        return c * ((r <= 1.0).astype(float) - 4.0 * (r <= 0.5))

    return Potential(
        name="dipole",
        func=lambda z: np.where(np.abs(z) <= 1.0, np.real(z), 0.0) + prof(np.abs(z)),
        support_radius=1.0,
        sup_bound=1.0 + 3.0 * c,
        mass_class=ZERO_MASS,
        is_radial=False,
        radial_breaks=(0.5,),
        profile=prof,
    )


def rescale(phi: Potential, eps: float) -> Potential:
    """The potential eps^-2 phi(z / eps); mass is preserved."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    f, prof = phi.func, phi.profile
    inv2 = 1.0 / (eps * eps)
    return replace(
        phi,
        name=f"{phi.name}_eps",
        func=lambda z: inv2 * f(np.asarray(z) / eps),
        support_radius=eps * phi.support_radius,
        sup_bound=inv2 * phi.sup_bound,
        radial_breaks=tuple(eps * b for b in phi.radial_breaks),
        profile=None if prof is None else (lambda r: inv2 * prof(np.asarray(r) / eps)),
    )


def get_potential(name: str) -> Potential:
    """Look up a registered potential: disc, phiR:<R>, halfdisc, dipole (prefix '-' negates)."""
    if name.startswith("-"):
        base = get_potential(name[1:])
        if base.mass_class == POSITIVE_MASS:
            raise DomainError("negating a positive-mass potential is not supported")
        return base.scaled(-1.0, name=name)
    if name == "disc":
        return disc()
    if name == "halfdisc":
        return halfdisc()
    if name == "dipole":
        return dipole()
    if name.startswith("phiR:"):
        try:
            R = float(name.split(":", 1)[1])
        except ValueError as exc:
            raise DomainError(f"bad radius in {name!r}") from exc
        return phi_r(R)
    raise DomainError(f"unknown potential {name!r}")


REGISTRY_NAMES = ("disc", "phiR:<R>", "halfdisc", "dipole")
