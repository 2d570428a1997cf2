"""Unnormalized target and surrogate densities.

All densities work with natural-log values and drop normalizing constants.
Points are arrays whose last axis has length ``dim``; any leading axes are
treated as a batch, so ``log_density`` of an ``(n, d)`` array returns ``(n,)``.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import DimensionError, NoExactSamplerError, ScoreUnavailableError
from .kernels import RBFKernel, median_bandwidth

__all__ = [
    "DensityModel",
    "IsotropicGaussian",
    "GaussianMixture",
    "GaussBernoulliRBM",
    "FlatDensity",
    "GeometricPathDensity",
    "KernelCurveSurrogate",
    "CountingDensity",
    "log_density",
    "score",
    "sample_exact",
    "fit_kernel_curve_surrogate",
    "MAX_RBM_HIDDEN",
]

MAX_RBM_HIDDEN = 20


class DensityModel:
    """Base class: an unnormalized log-density on R^dim.

    Subclasses implement ``_log_density`` and, when available, ``_score``,
    ``_sample`` and ``moments``.
    """

    dim: int

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            got = x.shape[-1] if x.ndim else "scalar"
            raise DimensionError(f"{type(self).__name__} has dim {self.dim}, got points of dim {got}")
        return x

    @property
    def has_score(self) -> bool:
        return type(self)._score is not DensityModel._score

    @property
    def has_sampler(self) -> bool:
        return type(self)._sample is not DensityModel._sample

    def log_density(self, x):
        return self._log_density(self._check(x))

    def score(self, x):
        return self._score(self._check(x))

    def sample_exact(self, n, seed=None):
        """Draw ``n`` i.i.d. samples; ``seed`` is an int or a ``numpy.random.Generator``."""
        return self._sample(int(n), np.random.default_rng(seed))

    def moments(self):
        """Exact per-coordinate ``(mean, variance)`` of the normalized density."""
        raise NotImplementedError(f"{type(self).__name__} has no closed-form moments")

    def _log_density(self, x):
        raise NotImplementedError

    def _score(self, x):
        raise ScoreUnavailableError(f"{type(self).__name__} has no analytic score")

    def _sample(self, n, rng):
        raise NoExactSamplerError(f"{type(self).__name__} has no exact sampler")


class IsotropicGaussian(DensityModel):
    """``N(mean, sigma * I)``; ``sigma`` is the per-coordinate variance."""

    def __init__(self, mean, sigma):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        if self.mean.ndim != 1:
            raise ValueError("mean must be a vector")
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.sigma = float(sigma)
        self.dim = self.mean.shape[0]

    def _log_density(self, x):
        return -0.5 * np.sum((x - self.mean) ** 2, axis=-1) / self.sigma

    def _score(self, x):
        return -(x - self.mean) / self.sigma

    def _sample(self, n, rng):
        return self.mean + np.sqrt(self.sigma) * rng.standard_normal((n, self.dim))

    def moments(self):
        return self.mean.copy(), np.full(self.dim, self.sigma)

    def __repr__(self):
        return f"IsotropicGaussian(dim={self.dim}, sigma={self.sigma})"


class GaussianMixture(DensityModel):
    """Mixture of isotropic Gaussians sharing the variance ``sigma``."""

    def __init__(self, weights, means, sigma):
        weights = np.asarray(weights, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        if weights.ndim != 1 or weights.shape[0] != means.shape[0] or weights.shape[0] < 1:
            raise ValueError("need one weight per mixture component")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must lie on the simplex")
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        self.weights = weights
        self.means = means
        self.sigma = float(sigma)
        self.dim = means.shape[1]
        with np.errstate(divide="ignore"):
            self._log_weights = np.log(weights)

    def _component_logits(self, x):
        sq = np.sum((x[..., None, :] - self.means) ** 2, axis=-1)
        return self._log_weights - 0.5 * sq / self.sigma

    def _log_density(self, x):
        return logsumexp(self._component_logits(x), axis=-1)

    def _score(self, x):
        r = softmax(self._component_logits(x), axis=-1)
        return (r @ self.means - x) / self.sigma

    def _sample(self, n, rng):
        idx = rng.choice(len(self.weights), size=n, p=self.weights)
        return self.means[idx] + np.sqrt(self.sigma) * rng.standard_normal((n, self.dim))

    def moments(self):
        mean = self.weights @ self.means
        second = self.weights @ self.means ** 2
        return mean, self.sigma + second - mean ** 2

    def __repr__(self):
        return f"GaussianMixture(K={len(self.weights)}, dim={self.dim}, sigma={self.sigma})"


def _log2cosh(a):
    # log(e^a + e^-a) without overflow
    return np.logaddexp(a, -a)


class GaussBernoulliRBM(DensityModel):
    """Gauss-Bernoulli RBM marginalized over ``h in {-1, +1}^d_hidden``.

    ``log p(x) = c1.x - |x|^2 / 2 + sum_j log(2 cosh((B^T x + c2)_j))``.
    The marginal is a ``2^d_hidden``-component mixture of ``N(B h + c1, I)``,
    which gives exact sampling and moments by enumeration.
    """

    def __init__(self, B, c1, c2):
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.c1 = np.asarray(c1, dtype=float)
        self.c2 = np.asarray(c2, dtype=float)
        self.dim, self.d_hidden = self.B.shape
        if self.c1.shape != (self.dim,) or self.c2.shape != (self.d_hidden,):
            raise ValueError("c1 must have length d and c2 length d_hidden")
        self._mixture = None

    def _log_density(self, x):
        a = x @ self.B + self.c2
        return x @ self.c1 - 0.5 * np.sum(x ** 2, axis=-1) + np.sum(_log2cosh(a), axis=-1)

    def _score(self, x):
        return self.c1 - x + np.tanh(x @ self.B + self.c2) @ self.B.T

    def hidden_states(self):
        return np.array(list(itertools.product((-1.0, 1.0), repeat=self.d_hidden)))

    def as_mixture(self) -> GaussianMixture:
        """Exact mixture representation; enumerates all hidden states."""
        if self.d_hidden > MAX_RBM_HIDDEN:
            raise NoExactSamplerError(
                f"exact enumeration is capped at d_hidden <= {MAX_RBM_HIDDEN}, got {self.d_hidden}")
        if self._mixture is None:
            hs = self.hidden_states()
            centers = hs @ self.B.T + self.c1
            logits = 0.5 * np.sum(centers ** 2, axis=1) + hs @ self.c2
            self._mixture = GaussianMixture(softmax(logits), centers, 1.0)
        return self._mixture

    def _sample(self, n, rng):
        return self.as_mixture()._sample(n, rng)

    def moments(self):
        return self.as_mixture().moments()

    def __repr__(self):
        return f"GaussBernoulliRBM(dim={self.dim}, d_hidden={self.d_hidden})"


class FlatDensity(DensityModel):
    """The improper constant density ``rho(x) = 1``."""

    def __init__(self, dim):
        if int(dim) < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)

    def _log_density(self, x):
        return np.zeros(x.shape[:-1])

    def _score(self, x):
        return np.zeros_like(x)

    def __repr__(self):
        return f"FlatDensity(dim={self.dim})"


class GeometricPathDensity(DensityModel):
    """``p_alpha ∝ base^(1 - alpha) * target^alpha``."""

    def __init__(self, base: DensityModel, target: DensityModel, alpha: float):
        if base.dim != target.dim:
            raise DimensionError("base and target dimensions differ")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        self.base = base
        self.target = target
        self.alpha = float(alpha)
        self.dim = target.dim

    @property
    def has_score(self):
        if self.alpha == 1.0:
            return self.target.has_score
        if self.alpha == 0.0:
            return self.base.has_score
        return self.base.has_score and self.target.has_score

    def _log_density(self, x):
        if self.alpha == 1.0:
            return self.target._log_density(x)
        if self.alpha == 0.0:
            return self.base._log_density(x)
        return ((1.0 - self.alpha) * self.base._log_density(x)
                + self.alpha * self.target._log_density(x))

    def combine(self, base_log, target_log):
        """Path log-density from precomputed base and target log-densities."""
        if self.alpha == 1.0:
            return target_log
        if self.alpha == 0.0:
            return base_log
        return (1.0 - self.alpha) * base_log + self.alpha * target_log

    def _score(self, x):
        if self.alpha == 1.0:
            return self.target._score(x)
        if self.alpha == 0.0:
            return self.base._score(x)
        return (1.0 - self.alpha) * self.base._score(x) + self.alpha * self.target._score(x)

    def __repr__(self):
        return f"GeometricPathDensity(alpha={self.alpha}, base={self.base!r}, target={self.target!r})"


class KernelCurveSurrogate(DensityModel):
    """Kernel curve fit ``rho(x) ∝ sum_j p(x_j) k(x_j, x)`` through anchor values.

    Anchor values are stored as logs and combined with a max-shifted
    log-sum-exp, so tiny ``p(x_j)`` in high dimension do not underflow.
    """

    def __init__(self, anchors, anchor_log_values, kernel: RBFKernel):
        anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        values = np.asarray(anchor_log_values, dtype=float)
        if anchors.shape[0] == 0:
            raise ValueError("kernel curve surrogate needs at least one anchor")
        if values.shape != (anchors.shape[0],):
            raise ValueError("need one log value per anchor")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise ValueError(f"non-finite anchor log value at index {bad}")
        if not isinstance(kernel, RBFKernel):
            raise TypeError("smoothing kernel must be an RBFKernel")
        self.anchors = anchors
        self.anchor_log_values = values
        self.kernel = kernel
        self.dim = anchors.shape[1]

    def _logits(self, x):
        sq = np.sum((x[..., None, :] - self.anchors) ** 2, axis=-1)
        return self.anchor_log_values - sq / self.kernel.bandwidth

    def _log_density(self, x):
        return logsumexp(self._logits(x), axis=-1)

    def _score(self, x):
        r = softmax(self._logits(x), axis=-1)
        return (2.0 / self.kernel.bandwidth) * (r @ self.anchors - x)

    def __repr__(self):
        return f"KernelCurveSurrogate(n_anchors={len(self.anchors)}, h={self.kernel.bandwidth:.4g})"


class CountingDensity(DensityModel):
    """Wraps a model and counts how many points its log-density was evaluated at."""

    def __init__(self, model: DensityModel):
        self.model = model
        self.dim = model.dim
        self.evaluations = 0

    @property
    def has_score(self):
        return self.model.has_score

    @property
    def has_sampler(self):
        return self.model.has_sampler

    def _log_density(self, x):
        self.evaluations += int(np.prod(x.shape[:-1], dtype=int))
        return self.model._log_density(x)

    def _score(self, x):
        return self.model._score(x)

    def _sample(self, n, rng):
        return self.model._sample(n, rng)

    def moments(self):
        return self.model.moments()


def log_density(model: DensityModel, x):
    return model.log_density(x)


def score(model: DensityModel, x):
    return model.score(x)


def sample_exact(model: DensityModel, n, seed=None):
    return model.sample_exact(n, seed)


def fit_kernel_curve_surrogate(anchors, target: DensityModel, smoothing_kernel=None,
                               anchor_log_values=None) -> KernelCurveSurrogate:
    """Fit a kernel curve surrogate to ``target`` through ``anchors``.

    The smoothing kernel defaults to an RBF with the median-heuristic
    bandwidth of the anchors (``h = 1`` for a single anchor). Pass
    ``anchor_log_values`` when ``target.log_density(anchors)`` is already known.
    """
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if anchors.shape[0] == 0:
        raise ValueError("kernel curve surrogate needs at least one anchor")
    if smoothing_kernel is None:
        h = median_bandwidth(anchors) if anchors.shape[0] > 1 else 1.0
        smoothing_kernel = RBFKernel(h)
    if anchor_log_values is None:
        anchor_log_values = target.log_density(anchors)
    return KernelCurveSurrogate(anchors, anchor_log_values, smoothing_kernel)
