"""Diagonal-covariance GMMs: EM training of the UBM and means-only MAP enrollment."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

VAR_FLOOR_RATIO = 1e-3
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class DiagGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if w.ndim != 1 or mu.shape != var.shape or mu.shape[0] != w.size:
            raise ValueError("inconsistent GMM shapes")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a probability simplex")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        for name, arr in (("weights", w), ("means", mu), ("variances", var)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_loglik(self, x: np.ndarray) -> np.ndarray:
        """log w_k + log N(x | mu_k, var_k) for each row of x; shape (..., K)."""
        return component_loglik(x, self.means, self.variances, self.weights)

    def frame_loglik(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_loglik(x), axis=-1)


def component_loglik(x, means, variances, weights):
    prec = 1.0 / variances
    const = np.log(weights) - 0.5 * (x.shape[-1] * LOG_2PI + np.log(variances).sum(1) + (means ** 2 * prec).sum(1))
    return const - 0.5 * (x ** 2) @ prec.T + x @ (means * prec).T


def _floor(data: np.ndarray) -> np.ndarray:
    return VAR_FLOOR_RATIO * np.maximum(data.var(axis=0), 1e-12)


def em_step(data: np.ndarray, gmm: DiagGmm, var_floor: np.ndarray) -> tuple[DiagGmm, float]:
    """One EM round; returns the updated model and the mean log-likelihood of the *input* model."""
    lp = gmm.component_loglik(data)
    ll = logsumexp(lp, axis=1)
    resp = np.exp(lp - ll[:, None])
    nk = resp.sum(0)
    alive = nk > 1e-8
    means = gmm.means.copy()
    variances = gmm.variances.copy()
    first = resp.T @ data
    second = resp.T @ (data ** 2)
    means[alive] = first[alive] / nk[alive, None]
    variances[alive] = second[alive] / nk[alive, None] - means[alive] ** 2
    variances = np.maximum(variances, var_floor)
    weights = nk / nk.sum()
    return DiagGmm(weights, means, variances), float(ll.mean())


def fit_em(data: np.ndarray, K: int, em_iters: int, seed: int) -> tuple[DiagGmm, list[float]]:
    """k-means initialization followed by EM; returns the model and the
    per-iteration mean log-likelihood (one entry per model evaluated, including the final one)."""
    data = np.asarray(data, dtype=np.float64)
    if K < 1:
        raise ValueError("K must be at least 1")
    if data.shape[0] < 10 * K:
        raise ValueError(f"need at least {10 * K} frames for K={K}, got {data.shape[0]}")
    floor = _floor(data)
    rng = np.random.default_rng(seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        centroids, labels = kmeans2(data, K, iter=10, minit="++", rng=rng)
    counts = np.bincount(labels, minlength=K).astype(np.float64)
    variances = np.tile(data.var(axis=0), (K, 1))
    for k in np.flatnonzero(counts > 1):
        variances[k] = data[labels == k].var(axis=0)
    counts = np.maximum(counts, 1.0)
    gmm = DiagGmm(counts / counts.sum(), centroids, np.maximum(variances, floor))
    history = []
    for _ in range(em_iters):
        gmm, ll = em_step(data, gmm, floor)
        history.append(ll)
    history.append(float(gmm.frame_loglik(data).mean()))
    return gmm, history


def train_ubm(corpus_features, K: int, em_iters: int, seed: int) -> DiagGmm:
    """Pool the voiced frames of every FeatureMatrix and fit a K-component UBM."""
    data = np.concatenate([f.voiced for f in corpus_features], axis=0)
    return fit_em(data, K, em_iters, seed)[0]


@dataclass(frozen=True, eq=False)
class SpeakerModel:
    speaker_id: str
    gmm: DiagGmm


def map_adapt_means(ubm: DiagGmm, frames: np.ndarray, relevance: float = 16.0) -> np.ndarray:
    if frames.shape[0] == 0:
        raise ValueError("no voiced frames to adapt on")
    if relevance <= 0:
        raise ValueError("relevance must be positive")
    lp = ubm.component_loglik(frames)
    resp = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
    nk = resp.sum(0)
    ex = (resp.T @ frames) / np.maximum(nk, 1e-12)[:, None]
    alpha = (nk / (nk + relevance))[:, None]
    return alpha * ex + (1.0 - alpha) * ubm.means


def map_adapt(ubm: DiagGmm, speaker_features, relevance: float = 16.0, speaker_id: str = "spk") -> SpeakerModel:
    """Means-only MAP; weights and variances are shared with the UBM."""
    means = map_adapt_means(ubm, speaker_features.voiced, relevance)
    return SpeakerModel(speaker_id, DiagGmm(ubm.weights, means, ubm.variances))
