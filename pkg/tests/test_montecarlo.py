import math

import numpy as np
import pytest
from scipy import stats

from pointres import montecarlo as mc
from pointres.besselres import r0_hitting
from pointres.errors import DivergenceError, DomainError
from pointres.potentials import POSITIVE_MASS, ZERO_MASS, CouplingSchedule, disc, get_potential

# E[A] for the unit disc at eps = 0.2, t = 1, from the exact-mean integral (scipy quad)
KR_MEAN_02 = 2.172387058986103
G2_DISC_ORIGIN = 0.36013411818347756954


def test_path_config_validation():
    with pytest.raises(DomainError):
        mc.PathConfig(dt=0.0)
    with pytest.raises(DomainError):
        mc.PathConfig(dt=1.0, horizon=50.0)
    with pytest.raises(DomainError):
        mc.PathConfig(n_paths=0)
    with pytest.raises(DomainError):
        mc.PathConfig(seed=-1)


def test_kr_mean_oracle_reference():
    assert mc.kr_mean_oracle(0.2, 1.0) == pytest.approx(KR_MEAN_02, rel=1e-10)
    # small eps: E[A] ~ (1/2) log(1/eps^2) + O(1)
    assert mc.kr_mean_oracle(math.exp(-3), 1.0) == pytest.approx(3.5582755378622955, rel=1e-9)


def test_samples_deterministic_and_blockwise():
    cfg = mc.PathConfig(n_paths=1200, seed=7)
    a = mc.additive_functional_samples(disc(), 0.3, 0.2, cfg)
    b = mc.additive_functional_samples(disc(), 0.3, 0.2, cfg)
    np.testing.assert_array_equal(a, b)
    # the first block does not depend on the total path count
    c = mc.additive_functional_samples(disc(), 0.3, 0.2, mc.PathConfig(n_paths=1000, seed=7))
    np.testing.assert_array_equal(a[:1000], c)
    d = mc.additive_functional_samples(disc(), 0.3, 0.2, mc.PathConfig(n_paths=1200, seed=8))
    assert not np.array_equal(a, d)


def test_additive_functional_mean_matches_oracle():
    A = mc.additive_functional_samples(disc(), 0.2, 1.0, mc.PathConfig(n_paths=2000, seed=1))
    stderr = A.std(ddof=1) / math.sqrt(len(A))
    assert abs(A.mean() - KR_MEAN_02) < 3 * stderr


def test_direct_and_scaled_agree_in_law():
    scaled = mc.additive_functional_samples(disc(), 0.2, 1.0, mc.PathConfig(n_paths=1000, seed=1))
    direct = mc.additive_functional_samples(disc(), 0.2, 1.0, mc.PathConfig(n_paths=1000, seed=2), direct=True)
    assert stats.ks_2samp(scaled, direct).pvalue > 1e-3


def test_horizon_guards():
    with pytest.raises(DomainError):
        mc.additive_functional_samples(disc(), 1e-5, 1.0, mc.PathConfig())
    with pytest.raises(DomainError):
        mc.additive_functional_samples(disc(), 0.1, 1.0, mc.PathConfig(horizon=10.0, dt=0.01))


def test_stderr_scales_like_inverse_sqrt_n():
    small = mc.fk_laplace_estimate(get_potential("-phiR:1.5").scaled(0.0), CouplingSchedule(ZERO_MASS, 0.5),
                                   disc(), 2.0, 0.2, 0j, mc.PathConfig(n_paths=500, seed=5), energy=1.0)
    big = mc.fk_laplace_estimate(get_potential("-phiR:1.5").scaled(0.0), CouplingSchedule(ZERO_MASS, 0.5),
                                 disc(), 2.0, 0.2, 0j, mc.PathConfig(n_paths=2000, seed=5), energy=1.0)
    assert small.stderr / big.stderr == pytest.approx(2.0, rel=0.3)


def test_fk_with_zero_potential_is_resolvent():
    est = mc.fk_laplace_estimate(get_potential("-phiR:1.5").scaled(0.0), CouplingSchedule(ZERO_MASS, 0.5),
                                 disc(), 2.0, 0.2, 0j, mc.PathConfig(n_paths=2000, seed=5), energy=1.0)
    assert est.within(G2_DISC_ORIGIN)
    assert est.n == 2000 and est.seed == 5


def test_fk_with_zero_g_vanishes():
    est = mc.fk_laplace_estimate(get_potential("-phiR:1.5"), CouplingSchedule(ZERO_MASS, 0.5),
                                 lambda z: np.zeros(np.shape(z)), 2.0, 0.2, 0j, mc.PathConfig(n_paths=300))
    assert est.mean == 0.0 and est.stderr == 0.0


def test_fk_guards():
    sched = CouplingSchedule(ZERO_MASS, 0.5)
    with pytest.raises(DomainError):
        mc.fk_laplace_estimate(get_potential("-phiR:1.5"), sched, disc(), 2.0, 0.01, 0j, mc.PathConfig())
    with pytest.raises(DomainError):
        mc.fk_laplace_estimate(get_potential("-phiR:1.5"), sched, disc(), 0.0, 0.2, 0j, mc.PathConfig())
    with pytest.raises(DivergenceError):
        mc.fk_laplace_estimate(disc(), CouplingSchedule(POSITIVE_MASS, 1.0, lam=1e3), disc(), 2.0,
                               0.2, 0j, mc.PathConfig(n_paths=200, seed=1))


def test_distribution_check_refuses_few_paths():
    with pytest.raises(DomainError):
        mc.kr_kk_distribution_check(disc(), 0.2, 1.0, mc.PathConfig(n_paths=100))


def test_distribution_check_summary():
    ks, summary = mc.kr_kk_distribution_check(disc(), math.exp(-1.5), 1.0, mc.PathConfig(n_paths=500, seed=3))
    assert summary["law"] == "expon" and summary["n"] == 500
    assert 0 < ks < 1
    ks_z, summary_z = mc.kr_kk_distribution_check(get_potential("-phiR:1.5"), math.exp(-1.5), 1.0,
                                                  mc.PathConfig(n_paths=500, seed=3))
    assert summary_z["law"] == "laplace"
    assert summary_z["skewness_stderr"] == pytest.approx(math.sqrt(6 / 500), rel=0.02)


def test_bessel_hitting_matches_closed_form():
    est, bias = mc.bessel_hitting_estimate(0.5, 2.0, 1.0, mc.PathConfig(dt=0.002, horizon=50.0, n_paths=1000, seed=4),
                                           bridge=True)
    assert est.within(r0_hitting(0.5, 2.0, 1.0), slack=bias)
    assert bias == pytest.approx(math.exp(-25.0))


def test_bessel_hitting_trivial_and_guards():
    est, _ = mc.bessel_hitting_estimate(1.0, 1.0, 1.0, mc.PathConfig(n_paths=10))
    assert est.mean == 1.0
    with pytest.raises(DomainError):
        mc.bessel_hitting_estimate(0.0, 1.0, 2.0, mc.PathConfig())


def test_block_rng_streams_differ():
    a = mc.block_rng(0, 0).standard_normal(4)
    b = mc.block_rng(0, 1).standard_normal(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, mc.block_rng(0, 0).standard_normal(4))
