"""Path simulation oracles for planar Brownian motion.

Brownian increments are exact Gaussians; the only discretization error is
the Riemann sum of the additive functional, which is refined by substepping
near the support of the potential.  Far from the support the step grows
with the squared distance so that an unseen excursion into the support has
probability below 1e-8 per step.

Randomness comes from counter-based Philox streams keyed by (seed, block)
with a fixed block size, so results do not depend on the thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .errors import DivergenceError, DomainError, RegimeError
from .logenergy import energy_bracket
from .parallel import pmap
from .potentials import POSITIVE_MASS, ZERO_MASS, CouplingSchedule, Potential, coupling_lambda, rescale

BLOCK_SIZE = 1000
SUBSTEPS = 25
NEAR_FACTOR = 2.0
FAR_SIGMAS = 6.0
MAX_SCALED_HORIZON = 1e7
BLOWUP = math.log(1e12)
MIN_KS_PATHS = 500

# Variance of Re(W_t) for the complex Brownian motion in the zero-mass
# limit law; with 1.0 the law of sqrt(2) Re(W_e) is Laplace with unit scale.
KK_RE_VARIANCE = 1.0


@dataclass(frozen=True)
class PathConfig:
    """Simulation controls; dt and horizon are in the simulated time units."""

    dt: float = 0.01
    horizon: float = 1e6
    n_paths: int = 2000
    seed: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise DomainError("dt and horizon must be positive")
        if self.dt > self.horizon / 100:
            raise DomainError("need dt <= horizon / 100")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise DomainError("n_paths must be a positive integer")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    seed: int

    def within(self, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr + slack


def _estimate(samples: NDArray, seed: int) -> McEstimate:
    n = len(samples)
    sd = float(np.std(samples, ddof=1)) if n > 1 else 0.0
    return McEstimate(float(np.mean(samples)), sd / math.sqrt(n), n, seed)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _blocks(n: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK_SIZE, n - b * BLOCK_SIZE)) for b in range((n + BLOCK_SIZE - 1) // BLOCK_SIZE)]


def _normal2(rng, n):
    x = rng.standard_normal((2, n))
    return x[0] + 1j * x[1]


def _run_block(rng, start: complex, horizons: NDArray, dt: float, func: Callable,
               support: float, weight: float = 1.0, guard: bool = False) -> tuple[NDArray, NDArray]:
    """Integrate weight * func along paths from start up to per-path horizons.

    Returns (functional values, end points).
    """
    n = len(horizons)
    pos = np.full(n, complex(start))
    A = np.zeros(n)
    left = horizons.astype(float).copy()
    near_r = NEAR_FACTOR * support
    active = np.flatnonzero(left > 0)
    while active.size:
        p = pos[active]
        d = np.abs(p)
        near = d < near_r
        h = np.minimum(left[active], np.where(near, dt, np.maximum(dt, ((d - support) / FAR_SIGMAS) ** 2)))
        far_i = active[~near]
        if far_i.size:
            pos[far_i] += np.sqrt(h[~near]) * _normal2(rng, far_i.size)
        near_i = active[near]
        if near_i.size:
            # all substeps at once: left-point Riemann sum along the fine path
            step = h[near] / SUBSTEPS
            inc = np.sqrt(step)[:, None] * _normal2(rng, near_i.size * SUBSTEPS).reshape(near_i.size, SUBSTEPS)
            start_pts = pos[near_i]
            path = start_pts[:, None] + np.cumsum(inc, axis=1)
            left_pts = np.concatenate([start_pts[:, None], path[:, :-1]], axis=1)
            A[near_i] += weight * step * np.asarray(func(left_pts), dtype=float).sum(axis=1)
            pos[near_i] = path[:, -1]
            if guard and np.max(A[near_i]) > BLOWUP:
                raise DivergenceError("exponential moment blowup: functional exceeds log(1e12)",
                                      value=float(np.max(A[near_i])))
        left[active] -= h
        active = active[left[active] > 1e-12 * horizons[active]]
    return A, pos


def _scaled_horizon(eps: float, t: float) -> float:
    if not (0 < eps < 1 and t > 0):
        raise DomainError("need 0 < eps < 1 and t > 0")
    T = t / (eps * eps)
    if T > MAX_SCALED_HORIZON:
        raise DomainError(f"scaled horizon {T:.3g} exceeds {MAX_SCALED_HORIZON:g} time units")
    return T


def additive_functional_samples(phi: Potential, eps: float, t: float, cfg: PathConfig,
                                z: complex = 0j, direct: bool = False) -> NDArray:
    """Samples of the integral of phi_eps(W_s) over [0, t] with W_0 = z.

    By Brownian scaling this equals the integral of phi(U_u) over
    [0, t/eps^2] with U_0 = z/eps, which is what is simulated unless
    ``direct`` is set (then phi_eps is integrated with step dt*eps^2).
    """
    T = _scaled_horizon(eps, t)
    if direct:
        pot, start, horizon, dt = rescale(phi, eps), z, t, cfg.dt * eps * eps
    else:
        pot, start, horizon, dt = phi, z / eps, T, cfg.dt
    if horizon > cfg.horizon * (eps * eps if direct else 1.0):
        raise DomainError("requested time exceeds the configured horizon")

    def one(block):
        b, n = block
        A, _ = _run_block(block_rng(cfg.seed, b), start, np.full(n, horizon), dt, pot, pot.support_radius)
        return A

    return np.concatenate(pmap(one, _blocks(cfg.n_paths)))


def kr_mean_oracle(eps: float, t: float, radius: float = 1.0) -> float:
    """Exact mean of the occupation time of B_radius by phi = 1_{B_radius} from 0, per unit area.

    E[A] = eps^{-2} * integral over [0, t] of (1 - exp(-eps^2 radius^2 / 2s)) ds.
    """
    from scipy.integrate import quad as _quad

    c = 0.5 * (eps * radius) ** 2
    val, _ = _quad(lambda s: -math.expm1(-c / s) if s > 0 else 1.0, 0.0, t, limit=200)
    return val / (eps * eps)


def _skew_stderr(n: int) -> float:
    return math.sqrt(6.0 * n * (n - 1) / ((n - 2) * (n + 1) * (n + 3)))


def kr_kk_distribution_check(phi: Potential, eps: float, t: float, cfg: PathConfig,
                             samples: NDArray | None = None) -> tuple[float, dict]:
    """KS distance of the normalized additive functional to its limit law.

    Positive mass: pi A / (m L) against Exp(1).  Zero mass:
    sqrt(pi / (E L)) A against the Laplace law of sqrt(2) Re(W_e).
    """
    if cfg.n_paths < MIN_KS_PATHS:
        raise DomainError(f"distribution check needs at least {MIN_KS_PATHS} paths")
    L = math.log(1.0 / eps)
    A = additive_functional_samples(phi, eps, t, cfg) if samples is None else np.asarray(samples)
    if phi.mass_class == POSITIVE_MASS:
        y = math.pi * A / (phi.mass() * L)
        law = stats.expon()
    elif phi.mass_class == ZERO_MASS:
        y = math.sqrt(math.pi / (energy_bracket(phi) * L)) * A
        law = stats.laplace(scale=math.sqrt(KK_RE_VARIANCE))
    else:
        raise RegimeError(f"unknown mass class {phi.mass_class!r}")
    ks = float(stats.kstest(y, law.cdf).statistic)
    n = len(y)
    summary = {
        "L": L, "n": n, "mean": float(y.mean()), "stderr": float(y.std(ddof=1) / math.sqrt(n)),
        "variance": float(y.var(ddof=1)), "skewness": float(stats.skew(y)),
        "skewness_stderr": _skew_stderr(n), "ks": ks, "law": law.dist.name,
    }
    return ks, summary


def fk_laplace_estimate(phi: Potential, schedule: CouplingSchedule, g: Potential, q: float,
                        eps: float, z: complex, cfg: PathConfig, energy: float | None = None) -> McEstimate:
    """Estimate the q-Laplace transform of E_z[exp(A(t)) g(W_t)].

    A is the additive functional of Lambda^{1/2} phi_eps (zero mass) or
    Lambda phi_eps (positive mass).  Times are drawn t ~ Exp(q) and the
    average of exp(A(t)) g(W_t) / q is returned.
    """
    if eps < 0.02:
        raise DomainError("direct simulation needs eps >= 0.02")
    if not q > 0:
        raise DomainError("q must be positive")
    if schedule.regime == ZERO_MASS:
        norm = energy if energy is not None else energy_bracket(phi)
        weight = math.sqrt(coupling_lambda(schedule, eps, norm))
    else:
        weight = coupling_lambda(schedule, eps, phi.mass())
    inv2 = 1.0 / (eps * eps)

    def one(block):
        b, n = block
        rng = block_rng(cfg.seed, b)
        times = rng.exponential(1.0 / q, n) * inv2
        if times.max() > cfg.horizon:
            raise DomainError("an exponential time exceeds the configured horizon")
        A, end = _run_block(rng, z / eps, times, cfg.dt, phi, phi.support_radius, weight, guard=True)
        return np.exp(A) * np.asarray(g(eps * end), dtype=float) / q

    vals = np.concatenate(pmap(one, _blocks(cfg.n_paths)))
    return _estimate(vals, cfg.seed)


def bessel_hitting_estimate(nu: float, a: float, b: float, cfg: PathConfig,
                            bridge: bool = False) -> tuple[McEstimate, float]:
    """Estimate E_a[exp(-nu T_b)] for the 2D Bessel process |W|.

    Crossings are detected on the time grid; with ``bridge`` a crossing
    between grid points is also accepted with the half-plane Brownian
    bridge probability.  Paths that do not hit before the horizon count as
    0.  Returns the estimate and the truncation bias bound exp(-nu horizon).
    """
    if not (nu > 0 and a > 0 and b > 0):
        raise DomainError("need nu, a, b > 0")
    inside = a < b

    def one(block):
        blk, n = block
        rng = block_rng(cfg.seed, blk)
        if a == b:
            return np.ones(n)
        pos = np.full(n, complex(a))
        t = np.zeros(n)
        out = np.zeros(n)
        live = np.arange(n)
        sq = math.sqrt(cfg.dt)
        while live.size:
            d0 = np.abs(pos[live]) - b
            pos[live] += sq * _normal2(rng, live.size)
            t[live] += cfg.dt
            d1 = np.abs(pos[live]) - b
            hit = (d1 >= 0) if inside else (d1 <= 0)
            if bridge:
                u = rng.random(live.size)
                hit |= u < np.exp(-2.0 * np.abs(d0 * d1) / cfg.dt)
            done = hit | (t[live] >= cfg.horizon)
            out[live[hit]] = np.exp(-nu * t[live[hit]])
            live = live[~done]
        return out

    vals = np.concatenate(pmap(one, _blocks(cfg.n_paths)))
    return _estimate(vals, cfg.seed), math.exp(-nu * cfg.horizon)
