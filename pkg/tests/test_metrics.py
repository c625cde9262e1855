import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from zspatial.metrics import (
    InsufficientData, MetricsResult, bootstrap_ci, evaluate_pairs, fit_gmm, mutual_information, soft_demap,
    spectral_efficiency,
)


def bpsk_awgn_mi(es_n0_db: float) -> float:
    # equiprobable +-1, SNR taken against the noise variance in the signal dimension;
    # the quadrature component carries no information and drops out
    s2 = 10 ** (-es_n0_db / 10)

    def integrand(y):
        p = lambda m: math.exp(-(y - m) ** 2 / (2 * s2)) / math.sqrt(2 * math.pi * s2)
        p1, p0 = p(1.0), p(-1.0)
        return p1 * math.log2(2 * p1 / (p1 + p0)) if p1 > 0 else 0.0

    val, _ = integrate.quad(integrand, -1 - 40 * math.sqrt(s2), 1 + 40 * math.sqrt(s2), limit=200)
    return val


def test_fit_two_noiseless_classes():
    labels = np.repeat([0, 1], 20)
    y = np.where(labels == 0, 1.0, -1.0) + 0j
    g = fit_gmm(labels, y, 2)
    assert np.allclose(g.means, [[1, 0], [-1, 0]])
    assert np.all(np.linalg.eigvalsh(g.covs) > 0)
    assert np.max(g.covs) < 1e-10
    assert math.isclose(g.priors.sum(), 1.0)


def test_fit_isotropic_covariance():
    rng = np.random.default_rng(0)
    y = math.sqrt(0.05) * (rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000))
    g = fit_gmm(np.zeros(10_000, int), y, 1)
    assert np.allclose(np.diag(g.covs[0]), 0.05, rtol=0.1)


def test_fit_equivariance_under_label_permutation(rng):
    labels = rng.integers(0, 4, 400)
    y = np.exp(1j * np.pi / 2 * labels) + 0.1 * rng.standard_normal(400)
    perm = np.array([2, 0, 3, 1])
    a = fit_gmm(labels, y, 4)
    b = fit_gmm(perm[labels], y, 4)
    assert np.allclose(b.means[perm], a.means)


def test_fit_rejects_missing_classes():
    with pytest.raises(InsufficientData):
        fit_gmm(np.zeros(50, int), np.zeros(50, complex), 2)
    with pytest.raises(ValueError):
        fit_gmm(np.zeros(5, int), np.zeros(6, complex), 1, min_per_class=1)


def test_soft_demap_examples():
    labels = np.repeat(np.arange(4), 50)
    pts = np.array([1, 1j, -1, -1j])
    rng = np.random.default_rng(1)
    g = fit_gmm(labels, pts[labels] + 0.05 * (rng.standard_normal(200) + 1j * rng.standard_normal(200)), 4)
    assert soft_demap(g, 1j).max() > 0.999
    same = fit_gmm(np.repeat(np.arange(3), 30), np.tile(rng.standard_normal(30) + 0j, 3), 3)
    assert np.allclose(soft_demap(same, 0.3 + 0j), 1 / 3)
    d = rng.standard_normal(100)
    sym = fit_gmm(np.repeat([0, 1], 100), np.concatenate([1 + 0.3 * d, -1 - 0.3 * d]) + 0j, 2)
    post = soft_demap(sym, 0j)
    assert np.allclose(post, 0.5, atol=1e-12)


def test_deterministic_channel_gives_log2_m():
    labels = np.tile(np.arange(4), 100)
    y = np.array([1, 1j, -1, -1j])[labels]
    assert abs(mutual_information(fit_gmm(labels, y, 4), labels, y) - 2.0) < 0.01


def test_independent_output_gives_no_information():
    rng = np.random.default_rng(2)
    labels = rng.integers(0, 16, 20_000)
    y = rng.standard_normal(20_000) + 1j * rng.standard_normal(20_000)
    frames_l = np.split(labels, 20)
    frames_y = np.split(y, 20)
    assert evaluate_pairs(frames_l, frames_y, 16, 1.0, 1.0).mi_bits < 0.05


def test_bpsk_awgn_matches_integration_oracle():
    oracle = bpsk_awgn_mi(0.0)
    assert abs(oracle - 0.486) < 0.01
    rng = np.random.default_rng(3)
    n = 40_000
    labels = rng.integers(0, 2, n)
    y = (2.0 * labels - 1) + (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    res = evaluate_pairs(np.split(labels, 40), np.split(y, 40), 2, 20e9, 20e9)
    assert abs(res.mi_bits - oracle) < 0.02


def test_spectral_efficiency_examples():
    assert spectral_efficiency(7.5, 20e9, 20e9) == 7.5
    assert spectral_efficiency(4, 10, 20) == 2
    assert spectral_efficiency(0, 1, 1) == 0
    with pytest.raises(ValueError):
        spectral_efficiency(1, 1, 0)


def test_evaluate_pairs_contract():
    rng = np.random.default_rng(4)
    labels = rng.integers(0, 4, 4000)
    y = np.array([1, 1j, -1, -1j])[labels] + 0.4 * (rng.standard_normal(4000) + 1j * rng.standard_normal(4000))
    res = evaluate_pairs(np.split(labels, 20), np.split(y, 20), 4, 10.0, 20.0)
    assert isinstance(res, MetricsResult)
    assert 0 <= res.mi_bits <= 2
    assert math.isclose(res.eta, res.mi_bits / 2)
    assert res.ci_low <= res.eta <= res.ci_high
    assert res.n_symbols == 2000
    assert '"mi_bits"' in res.to_json(seed=0)
    with pytest.raises(InsufficientData):
        evaluate_pairs([labels], [y], 4, 1.0, 1.0)


def test_bootstrap_ci_shrinks_with_sqrt_n():
    rng = np.random.default_rng(5)
    frames = [rng.standard_normal(100) for _ in range(400)]
    lo1, hi1 = bootstrap_ci(frames[:100], n_boot=2000)
    lo2, hi2 = bootstrap_ci(frames, n_boot=2000)
    ratio = (hi1 - lo1) / (hi2 - lo2)
    assert abs(ratio - 2.0) / 2.0 < 0.3
    assert bootstrap_ci(frames[:1]) == (float(np.mean(frames[0])),) * 2


@settings(max_examples=25)
@given(angle=st.floats(0, 2 * math.pi), s=st.floats(0.1, 10), shear=st.floats(-1, 1),
       dx=st.floats(-5, 5), dy=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_affine_invariance(angle, s, shear, dx, dy, seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 4, 800)
    y = np.array([1, 1j, -1, -1j])[labels] + 0.5 * (rng.standard_normal(800) + 1j * rng.standard_normal(800))
    pts = np.stack([y.real, y.imag], axis=-1)
    a = s * np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]]) @ [[1, shear], [0, 1]]
    moved = pts @ a.T + [dx, dy]
    ref = evaluate_pairs(np.split(labels, 8), np.split(pts, 8), 4, 1.0, 1.0).mi_bits
    got = evaluate_pairs(np.split(labels, 8), np.split(moved, 8), 4, 1.0, 1.0).mi_bits
    assert abs(ref - got) < 1e-6


@settings(max_examples=25)
@given(M=st.sampled_from([2, 4, 8, 16]), noise=st.floats(0, 3), seed=st.integers(0, 2**16))
def test_rate_bounded_by_log2_m(M, noise, seed):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.repeat(np.arange(M), 10), rng.integers(0, M, 20 * M)])
    rng.shuffle(labels)
    pts = np.exp(2j * np.pi * np.arange(M) / M)
    y = pts[labels] + noise * (rng.standard_normal(labels.size) + 1j * rng.standard_normal(labels.size))
    g = fit_gmm(labels, y, M)
    mi = mutual_information(g, labels, y)
    assert 0.0 <= mi <= math.log2(M) + 1e-9
    post = soft_demap(g, y)
    assert np.allclose(post.sum(axis=1), 1.0)
