"""Zero-mass resolvent: the scaled integral operator, its Picard series and
numerical verification of the three small-eps limits.

The resolvent at eps z solves F = G_q{g}(eps .) + T F with
T h(z) = Lambda^{1/2} * integral of G_q(eps z, eps z') phi(z') h(z') dz'.
Two discretizations are provided.  When phi and g are radial, T acts on
radial functions through the closed-form ring kernel at rate q eps^2 and is
discretized by product integration.  Otherwise G_q is split into the log
kernel (applied exactly mode by mode), a constant, and the smooth remainder
K0(x) + log(x/2) + gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import quad
from .errors import DivergenceError, DomainError, RegimeError
from .logenergy import MultipoleCalculus, _mode_kernel, criticality_constants, energy_bracket
from .parallel import pmap
from .potentials import ZERO_MASS, CouplingSchedule, Potential, coupling_lambda
from .specfun import EULER_GAMMA, green_radial, k0_log_remainder, ring_kernel

OVERFLOW = 1e12
Q_SCAN = (2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
DEFAULT_L_GRID = (4.0, 6.0, 8.0, 12.0, 16.0)
RADIAL = "radial"
PLANE = "plane"


@dataclass
class NystromOperator:
    """Discretized T on nodes covering supp(phi).

    ``matrix @ h`` gives T h at the nodes and ``origin_row @ h`` gives T h(0).
    Radial mode stores radii as points on the positive real axis.
    """

    mode: str
    nodes: NDArray
    weights: NDArray
    phi_values: NDArray
    matrix: NDArray
    origin_row: NDArray
    eps: float
    q: float
    coupling: float

    def __post_init__(self):
        n = len(self.nodes)
        if self.matrix.shape != (n, n) or self.origin_row.shape != (n,):
            raise DomainError("operator dimensions do not match the node count")
        if not np.all(np.isfinite(self.matrix)):
            raise DomainError("operator matrix has non-finite entries")

    @property
    def size(self) -> int:
        return len(self.nodes)

    def apply(self, h: NDArray) -> NDArray:
        return self.matrix @ h

    def phi_bracket(self, h: NDArray) -> float:
        """Integral of phi * h over the plane."""
        return float(np.dot(self.weights, self.phi_values * h))


def _radial_operator(phi: Potential, eps: float, q: float, root: float, order: int) -> NystromOperator:
    M = phi.support_radius
    rule = quad.PiecewiseRule.build([0.0, *phi.radial_breaks, M], order)
    nu = q * eps * eps

    def prof(x):
        return phi.radial_average(x).reshape(np.shape(x))

    def kernel(t, x):
        return ring_kernel(nu, t, x) * prof(x)

    W = rule.product_weights(np.append(rule.nodes, 0.0), kernel)
    r = rule.nodes
    return NystromOperator(
        mode=RADIAL,
        nodes=r.astype(complex),
        weights=2.0 * np.pi * r * rule.weights,
        phi_values=prof(r),
        matrix=root * W[:-1],
        origin_row=root * W[-1],
        eps=eps, q=q, coupling=root * root,
    )


def _plane_operator(phi: Potential, eps: float, q: float, root: float, order: int,
                    n_theta: int) -> NystromOperator:
    mc = MultipoleCalculus(phi, order=order, n_theta=n_theta, keep_angles=True)
    n = mc.n_theta
    theta = mc.theta
    pts = mc.points.ravel()
    w = (np.repeat(mc.rule.weights * mc.rule.nodes, n)) * (2.0 * np.pi / n)
    vals = np.asarray(phi(pts), dtype=float)
    # kappa-convolution as a dense matrix: sum over modes of W_m (x) C_m
    diff = theta[:, None] - theta[None, :]
    P = np.kron(mc._mode_weights(0), np.full((n, n), 1.0 / n))
    for m in range(1, (n + 1) // 2):
        P += np.kron(mc._mode_weights(m), np.cos(m * diff) / n)
    c = math.sqrt(2.0 * q) * eps
    const = (math.log(2.0 / c) - EULER_GAMMA) / math.pi
    wf = w * vals
    dist = np.abs(pts[:, None] - pts[None, :])
    smooth = k0_log_remainder(c * dist) / math.pi
    K = root * (const * wf[None, :] + P * vals[None, :] + smooth * wf[None, :])
    w0 = mc.rule.product_weights(np.array([0.0]), _mode_kernel(0))[0]
    origin = root * (const * wf + np.repeat(w0, n) / n * vals
                     + k0_log_remainder(c * np.abs(pts)) / math.pi * wf)
    return NystromOperator(PLANE, pts, w, vals, K, origin, eps, q, root * root)


def build_operator(phi: Potential, schedule: CouplingSchedule, eps: float, q: float,
                   mode: str | None = None, order: int = 24, n_theta: int = 32,
                   energy: float | None = None) -> NystromOperator:
    """Discretize T for potential phi at scale eps and rate q."""
    if phi.mass_class != ZERO_MASS or schedule.regime != ZERO_MASS:
        raise RegimeError("the zero-mass operator needs a zero-mass potential and schedule")
    if not (0 < eps < 1 and q > 0):
        raise DomainError("need 0 < eps < 1 and q > 0")
    if energy is None:
        energy = energy_bracket(phi)
    lam_eps = coupling_lambda(schedule, eps, energy)
    if lam_eps < 0:
        raise DomainError(f"coupling Lambda_eps = {lam_eps:.4g} is negative at eps = {eps:g}")
    root = math.sqrt(lam_eps)
    mode = mode or (RADIAL if phi.is_radial else PLANE)
    if mode == RADIAL:
        if not phi.is_radial:
            raise DomainError("radial mode needs a radial potential")
        return _radial_operator(phi, eps, q, root, order)
    if mode != PLANE:
        raise DomainError(f"unknown mode {mode!r}")
    return _plane_operator(phi, eps, q, root, order, n_theta)


# ---------------------------------------------------------------------------
# source term


def green_source(g: Potential, q: float, points) -> NDArray:
    """G_q{g} at the given plane points."""
    pts = np.atleast_1d(np.asarray(points, dtype=complex))
    M = g.support_radius
    if g.is_radial:
        radii, inverse = np.unique(np.abs(pts), return_inverse=True)

        def one(a):
            # graded toward b = a (log kink) and b = 0 (b log b at a = 0)
            rule = quad.PiecewiseRule.build([0.0, *g.radial_breaks, M], 24)
            b, w = rule.graded_rule(a) if a > 0 else rule.graded_rule(0.0)
            prof = g.radial_average(b).reshape(b.shape)
            return float(w @ (ring_kernel(q, a, b) * prof))

        vals = np.array(pmap(one, radii))
        return vals[inverse].reshape(pts.shape)

    def one_plane(z):
        rule = quad.centered_rule(z, M, g.radial_breaks, g.angular_breaks)
        d = np.abs(rule.points - z)
        safe = np.where(d > 0, d, 1.0)
        vals = np.where(d > 0, green_radial(q, safe), 0.0) * g(rule.points)
        return float(np.dot(rule.weights, vals))

    return np.array(pmap(one_plane, list(pts.ravel()))).reshape(pts.shape)


@dataclass
class Source:
    values: NDArray
    at_origin: float


def source_vector(g: Potential, q: float, eps: float, op: NystromOperator) -> Source:
    """G_q{g}(eps z) at the operator nodes, plus its value at z = 0."""
    vals = green_source(g, q, eps * op.nodes)
    s0 = float(green_source(g, q, [0j])[0])
    if np.any(vals < -1e-14):
        raise DomainError("source must come from a nonnegative g")
    return Source(vals, s0)


# ---------------------------------------------------------------------------
# Picard iteration


@dataclass
class PicardState:
    """Iterates F_n = source + T F_{n-1} and their sup-differences alpha_n."""

    source: NDArray
    iterates: list[NDArray]
    alphas: list[float]
    origin: list[float] = field(default_factory=list)

    @property
    def diffs(self) -> list[NDArray]:
        prev = [np.zeros_like(self.source)] + self.iterates[:-1]
        return [f - p for f, p in zip(self.iterates, prev)]


def picard_iterate(op: NystromOperator, source: Source | NDArray, n_max: int,
                   keep_all: bool = True) -> PicardState:
    """Run n_max Picard steps from F_0 = source.

    Raises DivergenceError at the first n with alpha_n above OVERFLOW.
    """
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    src = source.values if isinstance(source, Source) else np.asarray(source, dtype=float)
    s0 = source.at_origin if isinstance(source, Source) else float("nan")
    F = src.copy()
    state = PicardState(src, [F.copy()], [float(np.abs(F).max())], [s0])
    for n in range(1, n_max + 1):
        new = src + op.apply(F)
        alpha = float(np.abs(new - F).max())
        state.origin.append(s0 + float(op.origin_row @ F))
        F = new
        state.alphas.append(alpha)
        if keep_all:
            state.iterates.append(F.copy())
        else:
            state.iterates[-1:] = [F.copy()]
        if not alpha <= OVERFLOW:
            raise DivergenceError(f"Picard differences overflow at n = {n} (alpha = {alpha:.3e})",
                                  index=n, value=alpha)
    return state


def decay_ratio(alphas: Sequence[float], skip: int = 5, floor: float = 1e-12) -> float:
    """Per-step ratio from a least-squares fit of log alpha_n against n.

    Differences below floor * max(alpha) are rounding noise and cut off the
    fit window.
    """
    a = np.asarray(alphas, dtype=float)
    if a.size == 0:
        raise DomainError("no differences to fit")
    low = np.flatnonzero(a <= floor * a.max())
    a = a[skip:low[0] if len(low) else None]
    if len(a) < 3:
        raise DomainError("not enough differences to fit a ratio")
    n = np.arange(len(a))
    return float(math.exp(np.polyfit(n, np.log(a), 1)[0]))


@dataclass
class FInfinity:
    """Limit of the Picard series with convergence diagnostics."""

    values: NDArray
    at_origin: float
    iterations: int
    alphas: NDArray
    ratio: float
    even_bound: NDArray
    direct_gap: float

    @property
    def sup(self) -> float:
        return float(np.abs(self.values).max())


def f_infinity(op: NystromOperator, source: Source, tol: float = 1e-11, n_max: int = 200000,
               check_direct: bool = True) -> FInfinity:
    """Sum the Picard series until alpha_n < tol * |F_n|.

    Also accumulates the even-term diagnostic sum (2n + 2) D_{2n} and, if
    requested, compares with the direct solution of (I - T) F = source.
    """
    src = source.values
    F = src.copy()
    even = 2.0 * src  # n = 0 term: (2*0 + 2) D_0
    alphas = [float(np.abs(F).max())]
    converged = False
    for n in range(1, n_max + 1):
        new = src + op.apply(F)
        D = new - F
        F = new
        alpha = float(np.abs(D).max())
        alphas.append(alpha)
        if n % 2 == 0:
            even += (n + 2) * D
        if not alpha <= OVERFLOW:
            raise DivergenceError(f"Picard series diverges: alpha_{n} = {alpha:.3e}", index=n, value=alpha)
        if alpha <= tol * max(float(np.abs(F).max()), 1e-300):
            converged = True
            break
        if n >= 200 and n % 100 == 0 and decay_ratio(alphas[-100:], skip=0) >= 1.0:
            raise DivergenceError(f"no geometric decay of the Picard differences by n = {n}",
                                  index=n, value=alpha)
    if not converged:
        raise DivergenceError(f"Picard series not converged after {n_max} steps", index=n_max, value=alphas[-1])
    ratio = decay_ratio(alphas) if len(alphas) > 8 else 0.0
    gap = float("nan")
    if check_direct:
        direct = np.linalg.solve(np.eye(op.size) - op.matrix, src)
        gap = float(np.abs(direct - F).max() / np.abs(direct).max())
    at0 = source.at_origin + float(op.origin_row @ F)
    return FInfinity(F, at0, n, np.array(alphas), ratio, even, gap)


def scan_q(phi: Potential, schedule: CouplingSchedule, g: Potential, L_grid: Sequence[float],
           q_values: Sequence[float] = Q_SCAN, steps: int = 60, mode: str | None = None,
           energy: float | None = None) -> float | None:
    """Smallest q in q_values whose Picard differences decay geometrically on every L."""
    if energy is None:
        energy = energy_bracket(phi)
    for q in sorted(q_values):
        ok = True
        for L in L_grid:
            op = build_operator(phi, schedule, math.exp(-L), q, mode=mode, energy=energy)
            src = source_vector(g, q, op.eps, op)
            try:
                st = picard_iterate(op, src, steps, keep_all=False)
            except DivergenceError:
                ok = False
                break
            if not decay_ratio(st.alphas) < 1.0:
                ok = False
                break
        if ok:
            return float(q)
    return None


# ---------------------------------------------------------------------------
# the three limits


SUBCRITICAL = "subcritical"
FIRST_CRITICAL = "first_critical"
SECOND_CRITICAL = "second_critical"
CRITICAL_TOL = 1e-9


def classify(phi: Potential, schedule: CouplingSchedule, q: float, constants=None) -> tuple[str, float]:
    """Regime and the constant dividing G_q{g}(0) in the limit.

    Refuses (RegimeError) outside the hypotheses of the limits: at mu = 1 the
    cross term <<E(phi) K{1}>> must be nonnegative and the lambda' constant
    must not be negative; in the second critical case the q-constant must
    be positive.
    """
    if schedule.regime != ZERO_MASS:
        raise RegimeError("zero-mass limits need a zero-mass schedule")
    if schedule.mu < 1:
        return SUBCRITICAL, 1.0 - schedule.mu
    c = constants or criticality_constants(phi, schedule.lambda_prime, schedule.lam)
    if not c.cross_sign_ok:
        raise RegimeError("critical limits need <<E(phi) K{1}>> >= 0; use -phi instead")
    cl = c.c_lambda_prime
    if abs(cl) <= CRITICAL_TOL * max(1.0, abs(c.c_phi)):
        cq = c.c_lambda_q(q)
        if not cq > 0:
            raise RegimeError(f"second critical limit needs a positive q-constant; got {cq:.4g} at q = {q:g}"
                              f" (threshold q > {c.q_threshold():.4g})")
        return SECOND_CRITICAL, cq
    if cl < 0:
        raise RegimeError(f"mu = 1 needs the lambda' constant >= 0; got {cl:.4g}")
    return FIRST_CRITICAL, cl


NORMALIZER_POWER = {SUBCRITICAL: 0.0, FIRST_CRITICAL: 0.5, SECOND_CRITICAL: 1.0}
RATE_POWER = 0.5


@dataclass
class LimitReport:
    """Normalized F_infinity(0) against the predicted limit on an L-grid."""

    regime: str
    q: float
    L: NDArray
    F_at_0: NDArray
    predicted: float
    ratios: NDArray
    iterations: NDArray
    direct_gap: NDArray

    @property
    def eps(self) -> NDArray:
        return np.exp(-self.L)

    @property
    def normalizer(self) -> NDArray:
        return self.L ** NORMALIZER_POWER[self.regime]

    @property
    def measured(self) -> NDArray:
        return self.F_at_0 / self.normalizer

    @property
    def residual(self) -> NDArray:
        return self.measured - self.predicted

    @property
    def residual_times_rate(self) -> NDArray:
        return self.residual * self.L**RATE_POWER

    @property
    def relative_error(self) -> NDArray:
        return np.abs(self.residual) / abs(self.predicted)

    def nonincreasing(self) -> bool:
        r = np.abs(self.residual_times_rate)
        return bool(np.all(np.diff(r) <= 0))

    def rows(self) -> list[dict]:
        return [
            {"L": float(self.L[i]), "eps": float(self.eps[i]), "normalizer": float(self.normalizer[i]),
             "F_at_0": float(self.F_at_0[i]), "predicted": self.predicted,
             "residual": float(self.residual[i]), "residual_times_rate": float(self.residual_times_rate[i])}
            for i in range(len(self.L))
        ]


def limit_verify(phi: Potential, schedule: CouplingSchedule, g: Potential, q: float,
                 L_grid: Sequence[float] = DEFAULT_L_GRID, mode: str | None = None,
                 tol: float = 1e-11) -> LimitReport:
    """F_infinity(0) on the L-grid, normalized per regime, against the limit."""
    if phi.mass_class != ZERO_MASS:
        raise RegimeError("limit_verify needs a zero-mass potential")
    if g.mass_class == ZERO_MASS:
        raise DomainError("g must be nonnegative with positive integral")
    regime, const = classify(phi, schedule, q)
    g0 = float(green_source(g, q, [0j])[0])
    if not g0 > 0:
        raise DomainError("degenerate g: G_q{g}(0) = 0")
    if mode is None and not g.is_radial:
        mode = PLANE
    energy = energy_bracket(phi)

    def run(L):
        op = build_operator(phi, schedule, math.exp(-L), q, mode=mode, energy=energy)
        src = source_vector(g, q, op.eps, op)
        return f_infinity(op, src, tol=tol)

    L_grid = [float(x) for x in L_grid]
    res = pmap(run, L_grid)
    return LimitReport(
        regime, q, np.array(L_grid), np.array([r.at_origin for r in res]), g0 / const,
        np.array([r.ratio for r in res]), np.array([r.iterations for r in res]),
        np.array([r.direct_gap for r in res]),
    )


# ---------------------------------------------------------------------------
# geometric recursion


@dataclass
class RecursionTrace:
    b: NDArray
    bound: NDArray
    a: NDArray
    failed_at: int | None = None


def recursion_bound_check(delta: float, delta_p: float, delta_pp: float, theta: float,
                          b_star: float, j_seq: Sequence[float] = (), k_max: int = 500
                          ) -> tuple[bool, RecursionTrace]:
    """Iterate the six-term coefficient recursion and test b_k <= b*(1 - theta delta'/2)^k.

    Preconditions (a) 4 theta delta' < 1, (b) 14 delta'' <= (1 - theta) delta'
    and (c) the seed bounds b_k <= b*(1 - 2 theta delta')^k for k <= 4 are
    checked first; a violation raises DomainError naming the condition.
    The trace also carries a_{n+1,k} for n + 1 = len(j_seq) - 1.
    """
    for name, v in (("delta", delta), ("delta'", delta_p), ("delta''", delta_pp)):
        if not 0 <= v <= 1:
            raise DomainError(f"{name} must lie in [0, 1]")
    if delta + delta_p > 1:
        raise DomainError("need delta + delta' <= 1")
    if not 0 < theta < 1 or not b_star > 0:
        raise DomainError("need theta in (0, 1) and b* > 0")
    if not 4 * theta * delta_p < 1:
        raise DomainError("condition (a) fails: 4 theta delta' < 1")
    if not 14 * delta_pp <= (1 - theta) * delta_p:
        raise DomainError("condition (b) fails: 14 delta'' <= (1 - theta) delta'")
    b, c, d, e, f = delta, 1 - delta - delta_p, delta_pp, delta_pp, delta_pp
    bs = [b]
    for _ in range(k_max):
        b, c, d, e, f = b * delta + c, b * (1 - delta - delta_p) + d, b * delta_pp + e, b * delta_pp + f, b * delta_pp
        bs.append(b)
    bs = np.array(bs)
    k = np.arange(len(bs))
    seed = b_star * (1 - 2 * theta * delta_p) ** k[:5]
    if np.any(bs[:5] > seed):
        raise DomainError("condition (c) fails: seed bounds b_k <= b*(1 - 2 theta delta')^k, k <= 4")
    bound = b_star * (1 - theta * delta_p / 2) ** k
    j = np.asarray(j_seq, dtype=float)
    top = len(j) - 1
    a = np.array([j[top] + sum(bs[i] * j[top - 1 - i] for i in range(kk) if top - 1 - i >= 0)
                  for kk in range(len(bs))]) if len(j) else np.zeros(0)
    bad = np.flatnonzero(bs > bound * (1 + 1e-12))
    trace = RecursionTrace(bs, bound, a, int(bad[0]) if len(bad) else None)
    return trace.failed_at is None, trace
