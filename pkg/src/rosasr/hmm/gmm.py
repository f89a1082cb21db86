"""Diagonal-covariance Gaussian mixture emissions, one mixture per pdf-id."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GmmEmission:
    """Arrays are indexed ``[pdf, component]`` (and ``[..., dim]`` for means/variances)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        k, m, d = self.means.shape
        if self.weights.shape != (k, m) or self.variances.shape != (k, m, d):
            raise ValueError("inconsistent GMM parameter shapes")
        if not np.allclose(self.weights.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("mixture weights must sum to 1 per pdf")
        if np.any(self.variances <= 0):
            raise ValueError("variances must be positive")

    @property
    def num_pdfs(self) -> int:
        return self.means.shape[0]

    @property
    def num_components(self) -> int:
        return self.means.shape[1]

    @property
    def dim(self) -> int:
        return self.means.shape[2]

    @classmethod
    def flat(cls, num_pdfs: int, mean: np.ndarray, var: np.ndarray) -> "GmmEmission":
        d = len(mean)
        return cls(np.ones((num_pdfs, 1)),
                   np.broadcast_to(mean, (num_pdfs, 1, d)).copy(),
                   np.broadcast_to(var, (num_pdfs, 1, d)).copy())

    def component_loglik(self, x: np.ndarray) -> np.ndarray:
        """log(w_km N(x_t; mu_km, var_km)), shape (T, K, M)."""
        k, m, d = self.means.shape
        prec = 1.0 / self.variances.reshape(k * m, d)
        mu = self.means.reshape(k * m, d)
        const = (np.log(self.weights.reshape(k * m))
                 - 0.5 * (d * LOG_2PI + np.log(self.variances.reshape(k * m, d)).sum(axis=1)
                          + (mu * mu * prec).sum(axis=1)))
        ll = const - 0.5 * ((x * x) @ prec.T) + x @ (mu * prec).T
        return ll.reshape(len(x), k, m)

    def loglik(self, x: np.ndarray) -> np.ndarray:
        """Per-frame, per-pdf log-likelihood, shape (T, K)."""
        x = np.asarray(x, dtype=np.float64)
        comp = self.component_loglik(x)
        if self.num_components == 1:
            return comp[:, :, 0]
        return logsumexp(comp, axis=2)

    def split(self, perturb: float = 0.2) -> "GmmEmission":
        """Double every mixture by moving copies +-perturb standard deviations apart."""
        sd = np.sqrt(self.variances)
        means = np.concatenate([self.means - perturb * sd, self.means + perturb * sd], axis=1)
        weights = np.concatenate([self.weights, self.weights], axis=1) / 2.0
        variances = np.concatenate([self.variances, self.variances], axis=1)
        return GmmEmission(weights, means, variances)


class GmmStats:
    """Zeroth, first and second order statistics per (pdf, component).

    Accumulation is additive, so per-utterance stats can be merged in any order.
    """

    def __init__(self, num_pdfs: int, num_components: int, dim: int):
        self.occ = np.zeros((num_pdfs, num_components))
        self.sum = np.zeros((num_pdfs, num_components, dim))
        self.sumsq = np.zeros((num_pdfs, num_components, dim))

    @classmethod
    def like(cls, gmm: GmmEmission) -> "GmmStats":
        return cls(gmm.num_pdfs, gmm.num_components, gmm.dim)

    def add(self, x: np.ndarray, pdf_ids: np.ndarray, gmm: GmmEmission) -> float:
        """E-step for frames hard-assigned to pdfs; returns their total log-likelihood."""
        x = np.asarray(x, dtype=np.float64)
        pdf_ids = np.asarray(pdf_ids)
        comp = gmm.component_loglik(x)[np.arange(len(x)), pdf_ids]
        frame_ll = logsumexp(comp, axis=1)
        post = np.exp(comp - frame_ll[:, None])
        k = gmm.num_pdfs
        for m in range(gmm.num_components):
            w = post[:, m]
            self.occ[:, m] += np.bincount(pdf_ids, weights=w, minlength=k)
            onehot = np.zeros((len(x), k))
            onehot[np.arange(len(x)), pdf_ids] = w
            self.sum[:, m] += onehot.T @ x
            self.sumsq[:, m] += onehot.T @ (x * x)
        return float(frame_ll.sum())

    def merge(self, other: "GmmStats"):
        self.occ += other.occ
        self.sum += other.sum
        self.sumsq += other.sumsq

    def update(self, old: GmmEmission, var_floor: np.ndarray, min_occ: float = 1e-3) -> GmmEmission:
        """Maximum-likelihood parameters; components with no data keep their old values."""
        occ = self.occ
        ok = occ > min_occ
        safe = np.where(ok, occ, 1.0)[:, :, None]
        means = np.where(ok[:, :, None], self.sum / safe, old.means)
        var = np.where(ok[:, :, None], self.sumsq / safe - means ** 2, old.variances)
        var = np.maximum(var, var_floor)
        pdf_occ = occ.sum(axis=1, keepdims=True)
        weights = np.where(pdf_occ > min_occ, occ / np.where(pdf_occ > 0, pdf_occ, 1.0), old.weights)
        weights = np.maximum(weights, 1e-8)
        weights /= weights.sum(axis=1, keepdims=True)
        return GmmEmission(weights, means, var)
