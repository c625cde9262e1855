"""Soft-decision evaluation with one full-covariance Gaussian per transmit class.

The mutual information estimate is the mismatched-decoding rate obtained by
using the fitted model as auxiliary channel:

    I = log2 M + mean_n log2 p(label_n | y_n)
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp


class InsufficientData(ValueError):
    pass


MIN_PER_CLASS = 8


@dataclass(frozen=True)
class GmmModel:
    means: np.ndarray  # (M, 2)
    covs: np.ndarray  # (M, 2, 2)
    priors: np.ndarray  # (M,)

    @property
    def M(self) -> int:
        return int(self.means.shape[0])


def _as_points(y) -> np.ndarray:
    y = np.asarray(y)
    if np.iscomplexobj(y):
        return np.stack([y.real.ravel(), y.imag.ravel()], axis=-1)
    y = y.reshape(-1, 2)
    return y.astype(np.float64)


def fit_gmm(labels, y, M: int, min_per_class: int = MIN_PER_CLASS) -> GmmModel:
    """Per-class sample mean and covariance of the received symbols ``y``.

    ``y`` is complex or an ``(N, 2)`` real array.  Covariances get a ridge of
    ``1e-8`` times the mean class variance, floored at ``1e-12`` times the mean
    received power so that noiseless classes stay invertible.
    """
    labels = np.asarray(labels).ravel()
    pts = _as_points(y)
    if pts.shape[0] != labels.size:
        raise ValueError("labels and received symbols differ in length")
    counts = np.bincount(labels, minlength=M)
    if counts.size > M:
        raise ValueError("label outside [0, M)")
    if np.any(counts < min_per_class):
        missing = np.flatnonzero(counts < min_per_class)
        raise InsufficientData(f"{missing.size} classes observed fewer than {min_per_class} times")
    means = np.zeros((M, 2))
    covs = np.zeros((M, 2, 2))
    for m in range(M):
        sel = pts[labels == m]
        means[m] = sel.mean(axis=0)
        d = sel - means[m]
        covs[m] = d.T @ d / (sel.shape[0] - 1)
    mean_var = float(np.mean(np.trace(covs, axis1=1, axis2=2)) / 2)
    floor = 1e-12 * float(np.mean(np.sum(pts**2, axis=1)))
    eps = max(1e-8 * mean_var, floor, np.finfo(float).tiny)
    covs = covs + eps * np.eye(2)
    return GmmModel(means, covs, np.full(M, 1.0 / M))


def log_likelihoods(g: GmmModel, y) -> np.ndarray:
    """``(N, M)`` matrix of natural-log class-conditional densities."""
    pts = _as_points(y)
    inv = np.linalg.inv(g.covs)
    _, logdet = np.linalg.slogdet(g.covs)
    d = pts[:, None, :] - g.means[None, :, :]
    maha = np.einsum("nmi,mij,nmj->nm", d, inv, d)
    return -0.5 * maha - 0.5 * logdet[None, :] - math.log(2 * math.pi)


def log_posteriors(g: GmmModel, y) -> np.ndarray:
    ll = log_likelihoods(g, y) + np.log(g.priors)[None, :]
    return ll - logsumexp(ll, axis=1, keepdims=True)


def soft_demap(g: GmmModel, y) -> np.ndarray:
    """Posterior class probabilities; a scalar input yields a length-M vector."""
    scalar = np.ndim(y) == 0
    post = np.exp(log_posteriors(g, np.atleast_1d(y)))
    return post[0] if scalar else post


def information_terms(g: GmmModel, labels, y) -> np.ndarray:
    """Per-symbol ``log2 M + log2 p(label | y)``; their mean is the rate estimate."""
    labels = np.asarray(labels).ravel()
    lp = log_posteriors(g, y)
    return math.log2(g.M) + lp[np.arange(labels.size), labels] / math.log(2)


def mutual_information(g: GmmModel, labels, y) -> float:
    mi = float(np.mean(information_terms(g, labels, y)))
    if mi > math.log2(g.M) + 1e-9:
        raise AssertionError(f"rate estimate {mi} exceeds log2 M")
    return max(mi, 0.0)


def spectral_efficiency(mi_bits: float, symbol_rate: float, occupied_bandwidth: float) -> float:
    if occupied_bandwidth <= 0:
        raise ValueError("occupied bandwidth must be positive")
    return mi_bits * symbol_rate / occupied_bandwidth


def bootstrap_ci(terms_per_frame: list[np.ndarray], n_boot=200, level=0.95, seed=0) -> tuple[float, float]:
    """Percentile interval of the pooled mean, resampling whole frames."""
    sums = np.array([float(np.sum(t)) for t in terms_per_frame])
    counts = np.array([t.size for t in terms_per_frame], dtype=float)
    if sums.size < 2:
        m = float(sums.sum() / counts.sum())
        return m, m
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, sums.size, size=(n_boot, sums.size))
    stats = sums[picks].sum(axis=1) / counts[picks].sum(axis=1)
    lo, hi = np.quantile(stats, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


@dataclass(frozen=True)
class MetricsResult:
    mi_bits: float
    eta: float
    n_symbols: int
    ci_low: float
    ci_high: float

    def to_json(self, **extra) -> str:
        return json.dumps({**extra, **asdict(self)}, sort_keys=True)


def evaluate_pairs(labels_per_frame, y_per_frame, M, symbol_rate, occupied_bandwidth, seed=0) -> MetricsResult:
    """Fit on the first half of the frames, score on the second half."""
    n = len(labels_per_frame)
    if n < 2:
        raise InsufficientData("need at least two frames for a held-out split")
    half = n // 2
    fit_l = np.concatenate([np.ravel(a) for a in labels_per_frame[:half]])
    fit_y = np.concatenate([np.ravel(a) for a in y_per_frame[:half]])
    g = fit_gmm(fit_l, fit_y, M)
    terms = [information_terms(g, l, y) for l, y in zip(labels_per_frame[half:], y_per_frame[half:])]
    mi = float(np.mean(np.concatenate(terms)))
    if mi > math.log2(M) + 1e-9:
        raise AssertionError(f"rate estimate {mi} exceeds log2 M")
    mi = max(mi, 0.0)
    lo, hi = bootstrap_ci(terms, seed=seed)
    eta = spectral_efficiency(mi, symbol_rate, occupied_bandwidth)
    scale = symbol_rate / occupied_bandwidth
    return MetricsResult(mi, eta, int(sum(t.size for t in terms)), max(lo, 0.0) * scale, hi * scale)
