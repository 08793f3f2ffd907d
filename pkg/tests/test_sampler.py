import math

import numpy as np
import pytest
from scipy.stats import normaltest

from mdeseries import sampler
from mdeseries.errors import NumericalError, ValidationError
from mdeseries.laurent import coefficients
from mdeseries.sampler import (
    EnsembleConfig,
    cumulant_assumption_report,
    eigenvalues,
    empirical_moments,
    empirical_stieltjes,
    goe_matrix,
    moment_convergence_study,
    nonincreasing_with_overlap,
    sample_batch,
    sample_seed,
    sample_W,
    third_cumulant,
)

SQRT2_MINUS_1 = math.sqrt(2) - 1


@pytest.fixture(scope="module")
def draws8():
    cfg = EnsembleConfig(8, 2.0, 1.0, base_seed=8)
    A = cfg.kernel()
    return cfg, np.array([sample_W(cfg, sample_seed(8, i), A) for i in range(10_000)])


def test_config_validation():
    with pytest.raises(ValidationError):
        EnsembleConfig(1, 1.0)
    with pytest.raises(ValidationError):
        EnsembleConfig(4, 0.0)
    with pytest.raises(ValidationError):
        EnsembleConfig(4, 1.0, base_seed=-1)


def test_seed_derivation_is_stable():
    assert sample_seed(0, 0) == sample_seed(0, 0)
    seeds = {sample_seed(3, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert sample_seed(3, 0) != sample_seed(4, 0)


def test_narrow_kernel_gives_scaled_goe():
    a, seed = 0.49, 123
    cfg = EnsembleConfig(6, 1e-3, a)
    W = sample_W(cfg, seed)
    G = goe_matrix(6, np.random.default_rng(seed))
    np.testing.assert_allclose(W, a * G, rtol=1e-14, atol=1e-15)


def test_draws_are_symmetric_and_deterministic():
    cfg = EnsembleConfig(12, 2.0, 1.0)
    W = sample_W(cfg, 99)
    assert np.array_equal(W, W.T)
    assert np.array_equal(W, sample_W(cfg, 99))


def test_entries_are_gaussian(draws8):
    _, W = draws8
    assert normaltest(W[:, 0, 0]).pvalue > 0.001


def test_sample_covariance_matches_operator(draws8):
    cfg, W = draws8
    n, draws = cfg.n, len(W)
    T = cfg.operator().dense()
    pairs = [(x, y) for x in range(n) for y in range(x, n)]
    for i, (x, y) in enumerate(pairs):
        for z, t in pairs[i:]:
            prod = W[:, x, y] * W[:, z, t]
            se = prod.std(ddof=1) / math.sqrt(draws)
            assert abs(prod.mean() - n * T[x, y, z, t]) <= 4 * se


def test_eigenvalue_edge_cases():
    np.testing.assert_array_equal(eigenvalues(np.zeros((5, 5))), 0)
    np.testing.assert_allclose(eigenvalues(np.eye(9)), 1 / 3, rtol=1e-15)


def test_eigenvalues_sum_to_trace():
    cfg = EnsembleConfig(30, 2.0, 1.0)
    for seed in range(5):
        W = sample_W(cfg, seed)
        lam = eigenvalues(W)
        assert np.all(np.diff(lam) >= 0)
        assert abs(lam.sum() - np.trace(W) / math.sqrt(30)) <= 1e-8


def test_moment_edge_cases():
    mean, se = empirical_moments(np.array([[0.3, -1.2, 2.0]]), 4)
    assert mean[0] == 1.0
    assert np.all(np.isnan(se))
    alt = np.tile([1.0, -1.0], 5)
    mean, _ = empirical_moments(alt, 6)
    np.testing.assert_allclose(mean[1::2], 0, atol=1e-15)
    np.testing.assert_array_equal(mean[0::2], 1)


def test_second_moment_matches_first_coefficient():
    cfg = EnsembleConfig(64, 2.0, 1.0, base_seed=3)
    batch = sample_batch(cfg, 200, threads=4)
    mean, se = batch.moments(2)
    reference = np.trace(coefficients(cfg.operator(), 1)[1]) / cfg.n
    assert abs(mean[2] - reference) <= 4 * se[2]


def test_stieltjes_edge_cases():
    assert empirical_stieltjes(np.zeros(7), 1j) == pytest.approx(1j)
    with pytest.raises(ValidationError):
        empirical_stieltjes(np.zeros(2), 1.0)
    lam = np.random.default_rng(0).standard_normal(50) * 3
    for z in (0.01j, 1 + 0.5j, -4 + 2j):
        assert empirical_stieltjes(lam, z).imag > 0


def test_goe_stieltjes_near_semicircle():
    # narrow kernel and unit amplitude is plain GOE; the O(1/N) bias stays below 4 SE at 200 samples
    cfg = EnsembleConfig(256, 1e-3, 1.0, base_seed=5)
    mean, se = sample_batch(cfg, 200, threads=4).stieltjes(2j)
    assert abs(mean - SQRT2_MINUS_1 * 1j) <= 4 * abs(se)


def test_batch_independent_of_thread_count():
    cfg = EnsembleConfig(40, 2.0, 1.0, base_seed=17)
    one = sample_batch(cfg, 30, threads=1)
    many = sample_batch(cfg, 30, threads=6)
    assert one.seeds == many.seeds
    assert np.array_equal(one.eigs, many.eigs)


def test_batch_aborts_when_samples_fail(monkeypatch):
    def broken(W):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(sampler, "eigenvalues", broken)
    with pytest.raises(NumericalError):
        sample_batch(EnsembleConfig(4, 1.0), 10)


def test_batch_needs_samples():
    with pytest.raises(ValidationError):
        sample_batch(EnsembleConfig(4, 1.0), 0)


def test_trend_rule():
    assert nonincreasing_with_overlap([3.0, 2.0, 1.0], [0.1, 0.1, 0.1])
    assert nonincreasing_with_overlap([1.0, 1.1, 0.5], [0.1, 0.1, 0.1])
    assert not nonincreasing_with_overlap([1.0, 2.0], [0.1, 0.1])
    assert not nonincreasing_with_overlap([1.0, 1.5], [float("nan"), float("nan")])


def test_small_study_structure():
    cfgs = [EnsembleConfig(n, 2.0, 1.0, base_seed=1) for n in (32, 16)]
    report = moment_convergence_study(cfgs, 4, 40, zs=(2j, 1 + 1j), threads=2)
    assert [r.n for r in report.moment_rows] == [16] * 4 + [32] * 4
    assert len(report.stieltjes_rows) == 4
    assert set(report.trends) == {"m1", "m2", "m3", "m4", "stieltjes(2j)", "stieltjes((1+1j))"}
    for row in report.moment_rows:
        if row.k % 2:
            assert row.reference == 0.0
            assert row.gap <= 4 * row.gap_se
    with pytest.raises(ValidationError):
        moment_convergence_study([EnsembleConfig(8, 1.0), EnsembleConfig(16, 2.0)], 2, 5)


def test_third_cumulant_vanishes():
    cfg = EnsembleConfig(8, 2.0, 1.0, base_seed=9)
    A = cfg.kernel()
    W = np.array([sample_W(cfg, sample_seed(9, i), A) for i in range(100_000)])
    est, se = third_cumulant(W[:, 0, 1], W[:, 1, 2], W[:, 2, 3])
    assert abs(est) <= 4 * se


def test_third_cumulant_detects_skew():
    rng = np.random.default_rng(0)
    x = rng.exponential(size=20_000)
    est, se = third_cumulant(x, x, x)
    assert est == pytest.approx(2.0, abs=5 * se)


def test_cumulant_report():
    # measured fit scales; the bound with (fitted_l, fitted_c) holds for every tuple by construction
    reports = {n: cumulant_assumption_report(EnsembleConfig(n, 2.0, 1.0)) for n in (8, 16, 32)}
    assert reports[8].fitted_l == pytest.approx(3.129159212248576, rel=1e-9)
    assert reports[32].fitted_l == pytest.approx(2.332727725299123, rel=1e-9)
    for rep in reports.values():
        assert 2.0 <= rep.fitted_l <= 4.0
        rs = np.arange(len(rep.profile))
        assert np.all(rep.profile <= rep.fitted_c * np.exp(-rs / rep.fitted_l) * (1 + 1e-12))
        assert rep.diagonal_variance > 0
        assert "vanish" in rep.higher_cumulants
