"""Positive-definite kernels, bandwidth heuristics and the importance-weighted kernel.

Every kernel exposes the four quantities needed by Stein-type updates and
discrepancies: the value ``k(x, y)``, both gradients, and the trace of the
cross derivative ``sum_l d^2 k / dx_l dy_l``. All methods broadcast over
leading axes, so ``kernel.eval(X[:, None], Y[None])`` is a Gram matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DimensionError, ScoreUnavailableError

__all__ = [
    "KernelBundle",
    "Kernel",
    "RBFKernel",
    "WeightedKernel",
    "median_bandwidth",
    "rbf_eval_bundle",
    "weighted_kernel_eval",
]


class KernelBundle(NamedTuple):
    value: np.ndarray
    grad_x: np.ndarray
    grad_xprime: np.ndarray
    cross_trace: np.ndarray


def _pair(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionError(f"kernel arguments have dimensions {x.shape[-1]} and {y.shape[-1]}")
    return x, y


class Kernel:
    """Interface for kernels used by the transport and discrepancy code."""

    def eval(self, x, y):
        raise NotImplementedError

    def grad_x(self, x, y):
        raise NotImplementedError

    def grad_xprime(self, x, y):
        raise NotImplementedError

    def cross_trace(self, x, y):
        raise NotImplementedError

    def bundle(self, x, y) -> KernelBundle:
        return KernelBundle(self.eval(x, y), self.grad_x(x, y),
                            self.grad_xprime(x, y), self.cross_trace(x, y))

    def gram(self, X, Y=None):
        X = np.atleast_2d(X)
        Y = X if Y is None else np.atleast_2d(Y)
        return self.eval(X[:, None, :], Y[None, :, :])

    def gram_bundle(self, X, Y=None) -> KernelBundle:
        """All four quantities on every pair ``(X[i], Y[j])``."""
        X = np.atleast_2d(X)
        Y = X if Y is None else np.atleast_2d(Y)
        return self.bundle(X[:, None, :], Y[None, :, :])

    def __call__(self, x, y):
        return self.eval(x, y)


@dataclass(frozen=True)
class RBFKernel(Kernel):
    """Gaussian RBF kernel ``k(x, y) = exp(-||x - y||^2 / h)``."""

    bandwidth: float

    def __post_init__(self):
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be a positive finite number, got {self.bandwidth}")

    def eval(self, x, y):
        x, y = _pair(x, y)
        return np.exp(-np.sum((x - y) ** 2, axis=-1) / self.bandwidth)

    def grad_x(self, x, y):
        x, y = _pair(x, y)
        diff = x - y
        k = np.exp(-np.sum(diff ** 2, axis=-1) / self.bandwidth)
        return (-2.0 / self.bandwidth) * diff * k[..., None]

    def grad_xprime(self, x, y):
        return -self.grad_x(x, y)

    def cross_trace(self, x, y):
        x, y = _pair(x, y)
        h = self.bandwidth
        sq = np.sum((x - y) ** 2, axis=-1)
        return (2.0 * x.shape[-1] / h - 4.0 * sq / h ** 2) * np.exp(-sq / h)

    def bundle(self, x, y) -> KernelBundle:
        x, y = _pair(x, y)
        h = self.bandwidth
        diff = x - y
        sq = np.sum(diff ** 2, axis=-1)
        k = np.exp(-sq / h)
        gx = (-2.0 / h) * diff * k[..., None]
        trace = (2.0 * x.shape[-1] / h - 4.0 * sq / h ** 2) * k
        return KernelBundle(k, gx, -gx, trace)

    def gram(self, X, Y=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
        return np.exp(-sqdist(X, Y) / self.bandwidth)


def sqdist(X, Y):
    """Pairwise squared Euclidean distances, clipped at zero."""
    sq = (np.sum(X ** 2, axis=1)[:, None] + np.sum(Y ** 2, axis=1)[None, :]
          - 2.0 * X @ Y.T)
    return np.maximum(sq, 0.0)


def rbf_eval_bundle(x, xprime, h) -> KernelBundle:
    """Value, both gradients and cross-derivative trace of the RBF kernel."""
    return RBFKernel(float(h)).bundle(x, xprime)


def median_bandwidth(points) -> float:
    """Median heuristic ``h = med^2 / (2 log(n + 1))``.

    ``med`` is the median pairwise Euclidean distance. Degenerate sets whose
    median distance is zero get ``h = 1``.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if n < 2:
        raise ValueError("median_bandwidth needs at least two points")
    med = np.median(pdist(points))
    if not med > 0:
        return 1.0
    return float(med ** 2 / (2.0 * np.log(n + 1)))


class WeightedKernel(Kernel):
    """Importance-weighted kernel ``w(x) w(y) k(x, y)``.

    Parameters
    ----------
    base : Kernel
        Underlying kernel ``k``.
    log_weight : callable
        ``x -> log w(x)`` broadcasting over leading axes.
    log_weight_grad : callable, optional
        ``x -> grad log w(x)``. Only needed for the derivative methods.
    log_shift : float
        Subtracted from each log-weight before exponentiating, so
        ``w(x) = exp(log_weight(x) - log_shift)``.
    """

    def __init__(self, base: Kernel, log_weight: Callable,
                 log_weight_grad: Optional[Callable] = None, log_shift: float = 0.0):
        self.base = base
        self.log_weight = log_weight
        self.log_weight_grad = log_weight_grad
        self.log_shift = float(log_shift)

    @classmethod
    def from_densities(cls, base, surrogate, target, log_shift=0.0):
        """Weight ``w = rho / p`` built from two density models."""
        def log_weight(x):
            return surrogate.log_density(x) - target.log_density(x)

        log_weight_grad = None
        if surrogate.has_score and target.has_score:
            def log_weight_grad(x):
                return surrogate.score(x) - target.score(x)
        return cls(base, log_weight, log_weight_grad, log_shift)

    def weight(self, x):
        return np.exp(np.asarray(self.log_weight(x), dtype=float) - self.log_shift)

    def _g(self, x):
        if self.log_weight_grad is None:
            raise ScoreUnavailableError("weighted kernel derivatives need the gradient of log w")
        return np.asarray(self.log_weight_grad(x), dtype=float)

    def eval(self, x, y):
        return self.weight(x) * self.weight(y) * self.base.eval(x, y)

    def grad_x(self, x, y):
        ww = (self.weight(x) * self.weight(y))[..., None]
        return ww * (self.base.grad_x(x, y) + self.base.eval(x, y)[..., None] * self._g(x))

    def grad_xprime(self, x, y):
        ww = (self.weight(x) * self.weight(y))[..., None]
        return ww * (self.base.grad_xprime(x, y) + self.base.eval(x, y)[..., None] * self._g(y))

    def cross_trace(self, x, y):
        b = self.base.bundle(x, y)
        gx, gy = self._g(x), self._g(y)
        inner = (b.cross_trace
                 + np.sum(gx * b.grad_xprime, axis=-1)
                 + np.sum(gy * b.grad_x, axis=-1)
                 + b.value * np.sum(gx * gy, axis=-1))
        return self.weight(x) * self.weight(y) * inner


def weighted_kernel_eval(wk: WeightedKernel, x, xprime) -> float:
    """Evaluate ``w(x) w(x') k(x, x')``; nonpositive weights are rejected."""
    for point in (x, xprime):
        lw = np.asarray(wk.log_weight(point), dtype=float)
        if not np.all(np.isfinite(lw)):
            raise ValueError(f"importance weight is not positive and finite at {point!r}")
    return wk.eval(x, xprime)
