"""Analytic posterior-mean denoisers used to verify the samplers.

For x = x0 + sigma * eps with x0 drawn from a known prior, the Bayes-optimal
denoiser is the posterior mean E[x0 | x]. It has closed form for isotropic
Gaussian and Gaussian-mixture priors, which makes sampler output checkable
against exact distributions and exact ODE endpoints.

All denoisers implement ``evaluate(x, sigma, cond=None) -> x0_hat`` with
output shape equal to input shape; ``cond`` is accepted and ignored.
"""

from __future__ import annotations

import numpy as np


def _per_sample(sigma, ndim: int):
    """Broadcast scalar or length-B sigma against [B, ...] data."""
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim == 0:
        return s
    return s.reshape((-1,) + (1,) * (ndim - 1))


class GaussianPriorOracle:
    """Posterior mean for an isotropic Gaussian prior N(mean, variance * I).

    evaluate(x, sigma) = mean + variance / (variance + sigma^2) * (x - mean).
    variance = 0 gives the point-mass prior (always returns ``mean``).
    ``sigma`` may be a scalar or one value per leading-axis sample.
    """

    def __init__(self, mean, variance: float):
        if variance < 0:
            raise ValueError("variance must be >= 0")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.variance = float(variance)

    def evaluate(self, x: np.ndarray, sigma, cond=None) -> np.ndarray:
        if np.all(np.asarray(sigma) == 0):
            return x
        s = _per_sample(sigma, x.ndim)
        shrink = self.variance / (self.variance + s * s)
        out = self.mean + shrink * (np.asarray(x, dtype=np.float64) - self.mean)
        return out.astype(x.dtype)

    def ode_endpoint(self, x: np.ndarray, sigma_start: float) -> np.ndarray:
        """Closed-form probability-flow ODE solution from sigma_start to 0:
        x(0) = mean + (x - mean) * s / sqrt(s^2 + sigma_start^2)."""
        s = np.sqrt(self.variance)
        factor = s / np.sqrt(self.variance + sigma_start**2)
        return self.mean + (np.asarray(x, dtype=np.float64) - self.mean) * factor


class GmmPriorOracle:
    """Posterior mean for a mixture of isotropic Gaussians in R^d.

    Components k have weight w_k, mean mu_k (shape [d]) and isotropic variance
    s_k^2. The marginal of x0 + sigma*eps is a mixture with variances
    s_k^2 + sigma^2, so responsibilities and per-component posterior means are
    closed-form. Operates row-wise on [..., d] arrays.
    """

    def __init__(self, weights, means, variances):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.float64)       # [K, d]
        self.variances = np.asarray(variances, dtype=np.float64)  # [K]
        if self.means.ndim != 2:
            raise ValueError("means must be [K, d]")
        if not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("weights must sum to 1")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def evaluate(self, x: np.ndarray, sigma, cond=None) -> np.ndarray:
        if np.all(np.asarray(sigma) == 0):
            return x
        xf = np.asarray(x, dtype=np.float64)
        flat = xf.reshape(-1, self.dim)
        s = np.asarray(sigma, dtype=np.float64)
        if s.ndim == 0:
            s = np.full(flat.shape[0], float(s))
        elif s.size != flat.shape[0]:
            raise ValueError(f"sigma length {s.size} does not match {flat.shape[0]} rows")
        tot_var = self.variances[None, :] + (s * s)[:, None]   # [N, K]
        diff = flat[:, None, :] - self.means[None, :, :]       # [N, K, d]
        sq = np.sum(diff * diff, axis=2)                       # [N, K]
        log_resp = (
            np.log(self.weights)[None, :]
            - 0.5 * self.dim * np.log(tot_var)
            - 0.5 * sq / tot_var
        )
        log_resp -= log_resp.max(axis=1, keepdims=True)
        resp = np.exp(log_resp)
        resp /= resp.sum(axis=1, keepdims=True)                # [N, K]
        shrink = self.variances[None, :] / tot_var             # [N, K]
        comp_mean = self.means[None, :, :] + shrink[:, :, None] * diff  # [N, K, d]
        post = np.sum(resp[:, :, None] * comp_mean, axis=1)    # [N, d]
        return post.reshape(xf.shape).astype(x.dtype)

    def sample_prior(self, n: int, rng) -> np.ndarray:
        """Draw n exact prior samples (component choice + Gaussian)."""
        u = rng.uniform((n,), dtype=np.float64)
        edges = np.cumsum(self.weights)
        comp = np.searchsorted(edges, u, side="right")
        comp = np.clip(comp, 0, len(self.weights) - 1)
        eps = rng.normal((n, self.dim), dtype=np.float64)
        return self.means[comp] + np.sqrt(self.variances[comp])[:, None] * eps
