from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from ntksketch.errors import ConfigError, DomainError, NumericError, ShapeError
from ntksketch.kernels_exact import kappa0, kappa1, ntk_exact, ntk_gram
from ntksketch.random_features import (BlockWeights, NtkRandomFeatures, RandomFeatureConfig, conditional_cdf,
                                       gibbs_sample_directions, invert_conditional_cdf, leverage_sample_sizes,
                                       phi0_apply, phi1_apply, phi1_leverage_apply, rf_default_dims,
                                       spectral_audit, statistical_dimension)
from ntksketch.tensor_core import RngStream


def unit(d, rng):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def unit_rows(n, d, seed):
    X = np.random.default_rng(seed).standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def within_three_se(samples, truth) -> bool:
    samples = np.asarray(samples)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    return abs(samples.mean() - truth) <= 3 * se


def monte_carlo(apply, kind, y, z, rows=32, draws=500, tag=0):
    est = []
    for t in range(draws):
        W = BlockWeights(rows, y.size, RngStream(t, tag), kind=kind)
        est.append(apply(W, y) @ apply(W, z))
    return np.array(est)


# ---------------------------------------------------------------------------
# Single-layer features: unbiasedness against the arc-cosine closed forms
# ---------------------------------------------------------------------------


def test_phi0_orthogonal_pair_unbiased():
    y = np.zeros(16)
    z = np.zeros(16)
    y[0], z[1] = 1.0, 1.0
    assert within_three_se(monte_carlo(phi0_apply, "gaussian", y, z, tag=1), float(kappa0(0.0)))


def test_phi0_general_pair_unbiased():
    rng = np.random.default_rng(0)
    y, z = unit(16, rng), unit(16, rng)
    assert within_three_se(monte_carlo(phi0_apply, "gaussian", y, z, tag=2), float(kappa0(y @ z)))


def test_phi0_self_mean_near_one():
    x = unit(16, np.random.default_rng(1))
    assert within_three_se(monte_carlo(phi0_apply, "gaussian", x, x, tag=3), 1.0)


def test_phi0_zero_input_gives_zero():
    W = BlockWeights(20, 5, RngStream(4))
    assert np.all(phi0_apply(W, np.zeros(5)) == 0)


def test_phi1_general_pair_unbiased():
    rng = np.random.default_rng(2)
    y, z = unit(16, rng), 2.0 * unit(16, rng)
    truth = 2.0 * float(kappa1(y @ z / 2.0))
    assert within_three_se(monte_carlo(phi1_apply, "gaussian", y, z, tag=5), truth)


def test_phi1_parallel_and_antiparallel():
    x = unit(16, np.random.default_rng(3))
    assert within_three_se(monte_carlo(phi1_apply, "gaussian", x, x, tag=6), 1.0)
    W = BlockWeights(64, 16, RngStream(7))
    assert phi1_apply(W, x) @ phi1_apply(W, -x) == 0.0


def test_leverage_features_unbiased():
    rng = np.random.default_rng(4)
    y, z = unit(16, rng), unit(16, rng)
    assert within_three_se(monte_carlo(phi1_leverage_apply, "leverage", y, z, tag=8), float(kappa1(y @ z)))
    assert within_three_se(monte_carlo(phi1_leverage_apply, "leverage", y, y, tag=9), 1.0)


@pytest.mark.parametrize("apply,kind", [(phi1_apply, "gaussian"), (phi1_leverage_apply, "leverage")])
def test_relu_features_homogeneous_and_zero(apply, kind):
    x = np.random.default_rng(5).standard_normal(6)
    W = BlockWeights(40, 6, RngStream(10), kind=kind)
    assert np.allclose(apply(W, 3.5 * x), 3.5 * apply(W, x), rtol=1e-14, atol=0)
    assert np.all(apply(W, np.zeros(6)) == 0)


def test_weights_shape_errors():
    W = BlockWeights(10, 4, RngStream(11))
    with pytest.raises(ShapeError):
        phi1_apply(W, np.ones(5))


def test_streamed_and_cached_weights_agree():
    X = np.random.default_rng(6).standard_normal((3, 7))
    cached = BlockWeights(2500, 7, RngStream(12))
    streamed = BlockWeights(2500, 7, RngStream(12), cache_bytes=0)
    assert streamed._cache is None and cached._cache is not None
    assert np.array_equal(phi1_apply(cached, X), phi1_apply(streamed, X))
    assert np.array_equal(cached.matrix(), streamed.matrix())


def test_leverage_rows_are_unit():
    W = BlockWeights(50, 8, RngStream(13), kind="leverage")
    assert np.allclose(np.linalg.norm(W.matrix(), axis=1), 1.0, rtol=1e-14)


# ---------------------------------------------------------------------------
# Gibbs sampler
# ---------------------------------------------------------------------------


def test_cdf_at_zero_is_half():
    for z in (0.0, 0.3, 5.0, 1e6):
        assert conditional_cdf(0.0, z) == 0.5


def test_inverse_of_half_is_zero():
    assert np.all(np.abs(invert_conditional_cdf(np.full(4, 0.5), np.array([0, 1, 10, 100.0]))) <= 1e-10)


def test_cdf_derivative_matches_density_and_is_nonnegative():
    x = np.linspace(-6, 6, 601)
    h = 1e-5
    for z in (0.0, 0.5, 3.0, 40.0):
        fd = (conditional_cdf(x + h, z) - conditional_cdf(x - h, z)) / (2 * h)
        density = norm.pdf(x) * (z + x * x) / (z + 1)
        assert np.all(fd >= -1e-10)
        assert np.allclose(fd, density, rtol=0, atol=1e-8)


def test_cdf_limits():
    assert conditional_cdf(-12.0, 2.0) < 1e-20
    assert conditional_cdf(12.0, 2.0) == pytest.approx(1.0, abs=1e-20)


def test_inversion_accuracy():
    rng = np.random.default_rng(7)
    u = rng.uniform(1e-6, 1 - 1e-6, 10_000)
    z = rng.exponential(8.0, 10_000)
    assert np.max(np.abs(conditional_cdf(invert_conditional_cdf(u, z), z) - u)) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(u=st.floats(1e-9, 1 - 1e-9), z=st.floats(0, 1e4))
def test_inversion_property(u, z):
    x = invert_conditional_cdf(np.array([u]), z)
    assert abs(conditional_cdf(x, z)[0] - u) <= 1e-8


def test_inversion_errors():
    with pytest.raises(NumericError):
        invert_conditional_cdf(np.array([0.5]), -1.0)
    with pytest.raises(NumericError):
        invert_conditional_cdf(np.array([np.nan]), 1.0)
    with pytest.raises(NumericError):
        invert_conditional_cdf(np.array([1.0]), 0.0)
    with pytest.raises(NumericError, match="bracket"):
        invert_conditional_cdf(np.array([1e-300]), 0.0)


def test_gibbs_one_sweep_norm_moment():
    w = gibbs_sample_directions(8, 5000, 1, RngStream(14))
    mean_sq = np.mean(np.sum(w * w, axis=1))
    assert 8 < mean_sq < 12


def test_gibbs_more_sweeps_approach_target_moment():
    w = gibbs_sample_directions(8, 5000, 5, RngStream(15))
    assert np.mean(np.sum(w * w, axis=1)) == pytest.approx(10.0, abs=0.3)


def test_gibbs_deterministic_and_validated():
    a = gibbs_sample_directions(3, 10, 1, RngStream(16))
    assert np.array_equal(a, gibbs_sample_directions(3, 10, 1, RngStream(16)))
    with pytest.raises(ConfigError):
        gibbs_sample_directions(0, 10, 1, RngStream(16))
    with pytest.raises(ConfigError):
        gibbs_sample_directions(3, 10, 0, RngStream(16))


# ---------------------------------------------------------------------------
# Composed feature map
# ---------------------------------------------------------------------------


def test_default_dims_formulas():
    dims = rf_default_dims(2, 0.3, 0.2)
    log_l = math.log(10)
    assert dims["m0"] == math.ceil(4 / 0.09 * log_l) == 103
    assert dims["m1"] == math.ceil(64 / 0.0081 * log_l)
    assert dims["ms"] == math.ceil(4 / 0.09 * math.log(2 / 0.06) ** 3)


def test_config_validation():
    with pytest.raises(ConfigError):
        NtkRandomFeatures(RandomFeatureConfig(2, 0, 4, 4), 3, 0)
    with pytest.raises(ConfigError):
        NtkRandomFeatures(RandomFeatureConfig(2, 4, 4, 4, mode="other"), 3, 0)
    with pytest.raises(ConfigError):
        RandomFeatureConfig.from_targets(2, 0.0, 0.1)


def test_featurize_shapes_and_errors():
    f = NtkRandomFeatures(RandomFeatureConfig(2, 16, 32, 24), 5, 0)
    assert f.out_dim == 56
    assert f.featurize(np.ones((3, 5))).shape == (3, 56)
    assert f.featurize(np.ones(5)).shape == (56,)
    with pytest.raises(DomainError):
        f.featurize(np.zeros(5))
    with pytest.raises(ShapeError):
        f.featurize(np.ones(6))


def test_featurize_deterministic_and_homogeneous():
    X = np.random.default_rng(8).standard_normal((4, 5))
    cfg = RandomFeatureConfig(2, 16, 32, 24)
    a = NtkRandomFeatures(cfg, 5, 3).featurize(X)
    assert np.array_equal(a, NtkRandomFeatures(cfg, 5, 3).featurize(X))
    assert np.array_equal(NtkRandomFeatures(cfg, 5, 3).featurize(4.0 * X), 4.0 * a)


def test_depth_one_unbiased_against_exact():
    rng = np.random.default_rng(9)
    y, z = unit(8, rng), 1.5 * unit(8, rng)
    cfg = RandomFeatureConfig(1, 32, 32, 64)
    est = []
    for t in range(500):
        F = NtkRandomFeatures(cfg, 8, t).featurize(np.vstack([y, z]))
        est.append(F[0] @ F[1])
    assert within_three_se(est, ntk_exact(y, z, 1))


def test_self_kernel_concentrates():
    X = unit_rows(50, 16, 10) * 2.0
    F = NtkRandomFeatures(RandomFeatureConfig.from_targets(2, 0.3, 0.2, dim_scale=0.25), 16, 0).featurize(X)
    assert np.median(np.abs(np.sum(F * F, axis=1) / (3 * 4.0) - 1)) <= 0.15


def test_concentration_at_unit_constant_dims():
    Y, Z = unit_rows(200, 16, 11), unit_rows(200, 16, 12)
    exact = np.array([ntk_exact(y, z, 2) for y, z in zip(Y, Z)])
    cfg = RandomFeatureConfig.from_targets(2, 0.3, 0.2)
    violations = []
    for seed in range(3):
        F = NtkRandomFeatures(cfg, 16, seed).featurize(np.vstack([Y, Z]))
        est = np.sum(F[:200] * F[200:], axis=1)
        violations.append(np.abs(est - exact) > 0.3 * exact)
    assert np.mean(violations) <= 0.4


# ---------------------------------------------------------------------------
# Statistical dimension and spectral audit
# ---------------------------------------------------------------------------


def random_psd(n, rank, seed):
    A = np.random.default_rng(seed).standard_normal((n, rank))
    return A @ A.T


def test_statistical_dimension_examples():
    assert statistical_dimension(np.eye(7), 1.0) == pytest.approx(3.5, rel=1e-14)
    K = random_psd(6, 6, 13)
    assert statistical_dimension(K, 1e9) <= 6 * np.linalg.norm(K, 2) / 1e9 * 1.01
    direct = np.trace(K @ np.linalg.inv(K + 0.7 * np.eye(6)))
    assert statistical_dimension(K, 0.7) == pytest.approx(direct, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), lam=st.floats(1e-3, 1e3))
def test_statistical_dimension_range(seed, lam):
    s = statistical_dimension(random_psd(5, 3, seed), lam)
    assert 0 <= s <= 3 + 1e-9


def test_statistical_dimension_errors():
    with pytest.raises(ShapeError):
        statistical_dimension(np.array([[1.0, 2.0], [0.0, 1.0]]), 1.0)
    with pytest.raises(DomainError):
        statistical_dimension(np.eye(2), 0.0)


def test_audit_of_exact_factor_is_one():
    F = np.random.default_rng(14).standard_normal((10, 4))
    lo, hi = spectral_audit(F, F @ F.T, 0.5)
    assert abs(lo - 1) <= 1e-10 and abs(hi - 1) <= 1e-10


def test_audit_of_zero_features():
    K = random_psd(8, 3, 15)
    lam = 0.4
    lo, hi = spectral_audit(np.zeros((8, 5)), K, lam)
    assert lo == pytest.approx(lam / (np.linalg.eigvalsh(K)[-1] + lam), rel=1e-10)
    assert hi == pytest.approx(1.0, rel=1e-10)


def test_audit_errors():
    with pytest.raises(DomainError):
        spectral_audit(np.ones((3, 2)), np.eye(3), 0.0)
    with pytest.raises(ShapeError):
        spectral_audit(np.ones((4, 2)), np.eye(3), 1.0)


def test_audit_width_shrinks_with_feature_counts():
    X = unit_rows(64, 8, 16)
    lam = 0.1 * 64
    K = ntk_gram(X, 1)
    widths = []
    for m in (32, 128, 512):
        per_seed = []
        for seed in range(3):
            F = NtkRandomFeatures(RandomFeatureConfig(1, m, m, 512, mode="leverage"), 8, seed).featurize(X)
            lo, hi = spectral_audit(F, K, lam)
            per_seed.append(hi - lo)
        widths.append(np.median(per_seed))
    assert widths[0] >= widths[1] >= widths[2]


def test_leverage_sample_sizes():
    sizes = leverage_sample_sizes(n=100, d=8, lam=10.0, eps=0.5, delta=0.1, stat_dim=5.0, rank=8)
    log_term = math.log(16 * 5.0 / 0.1)
    assert sizes["m0"] == math.ceil(8 / 3 * 100 / (10 * 0.25) * log_term)
    assert sizes["m1"] == math.ceil(8 / 3 * 8 / 0.25 * 64 * log_term)
    with_norm = leverage_sample_sizes(100, 8, 10.0, 0.5, 0.1, 5.0, rank=8, x_norm_sq=20.0)
    assert with_norm["m1"] == math.ceil(8 / 3 * 8 / 0.25 * 2.0 * log_term)
    with pytest.raises(ConfigError):
        leverage_sample_sizes(100, 8, 10.0, 0.5, 0.1, 5.0)
    with pytest.raises(DomainError):
        leverage_sample_sizes(100, 8, 0.0, 0.5, 0.1, 5.0, rank=8)
