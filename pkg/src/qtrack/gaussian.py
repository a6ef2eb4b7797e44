"""Small vectorized helpers for centered multivariate Gaussian densities."""

from __future__ import annotations

import numpy as np

__all__ = ["GaussianDensity"]


class GaussianDensity:
    """Mean-zero Gaussian density with a fixed covariance, Cholesky-precomputed.

    Vectorized over leading axes: ``logpdf`` accepts arrays of shape (..., d).
    """

    def __init__(self, cov: np.ndarray):
        cov = np.atleast_2d(np.asarray(cov, float))
        self.cov = 0.5 * (cov + cov.T)
        self.d = cov.shape[0]
        self.chol = np.linalg.cholesky(self.cov)
        self.log_norm = -0.5 * (
            self.d * np.log(2.0 * np.pi) + 2.0 * np.sum(np.log(np.diag(self.chol)))
        )

    def logpdf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, float)
        scalar_input = u.ndim == 1
        w = np.linalg.solve(
            self.chol, np.atleast_2d(u).reshape(-1, self.d).T
        )  # whiten: chol^{-1} u
        q = np.sum(w * w, axis=0)
        out = self.log_norm - 0.5 * q
        if scalar_input:
            return out[0]
        return out.reshape(u.shape[:-1])

    def pdf(self, u: np.ndarray) -> np.ndarray:
        return np.exp(self.logpdf(u))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.d))
        return z @ self.chol.T
