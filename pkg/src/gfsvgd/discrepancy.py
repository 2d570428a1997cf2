"""Sample-quality measures: kernelized Stein discrepancies, MMD and moment errors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist

from .densities import DensityModel
from .errors import ScoreUnavailableError
from .kernels import Kernel, RBFKernel, sqdist
from .transport import normalize_log_weights

__all__ = [
    "KappaFunction",
    "MetricReport",
    "Evaluator",
    "stein_kernel_matrix",
    "kappa_eval",
    "gf_ksd",
    "ksd",
    "mmd2",
    "mmd_bandwidth",
    "moment_mse",
]


def stein_kernel_matrix(X, Y, score_x, score_y, kernel: Kernel):
    """Matrix of ``kappa(x_i, y_j)`` for scores evaluated at ``X`` and ``Y``.

    ``kappa(x, y) = s(x).s(y) k + s(x).grad_y k + s(y).grad_x k + tr(grad_x grad_y k)``.
    """
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    if isinstance(kernel, RBFKernel):
        h = kernel.bandwidth
        d = X.shape[1]
        sq = sqdist(X, Y)
        K = np.exp(-sq / h)
        # s(x).(x - y) and s(y).(x - y) without forming the (n, m, d) differences
        sx_diff = np.sum(score_x * X, axis=1)[:, None] - score_x @ Y.T
        sy_diff = X @ score_y.T - np.sum(score_y * Y, axis=1)[None, :]
        return K * (score_x @ score_y.T + (2.0 / h) * (sx_diff - sy_diff)
                    + 2.0 * d / h - 4.0 * sq / h ** 2)
    b = kernel.gram_bundle(X, Y)
    return (b.value * (score_x @ score_y.T)
            + np.einsum("id,ijd->ij", score_x, b.grad_xprime)
            + np.einsum("jd,ijd->ij", score_y, b.grad_x)
            + b.cross_trace)


@dataclass(frozen=True)
class KappaFunction:
    """Stein kernel of a target, optionally in gradient-free form.

    ``kind="standard"`` uses the target's score. ``kind="gradient_free"``
    uses only the surrogate's score and weights ``w = rho / p``.
    """

    kind: str
    kernel: Kernel
    target: DensityModel
    surrogate: Optional[DensityModel] = None

    def __post_init__(self):
        if self.kind not in ("standard", "gradient_free"):
            raise ValueError(f"unknown kappa kind {self.kind!r}")
        if self.kind == "gradient_free" and self.surrogate is None:
            raise ValueError("gradient-free kappa needs a surrogate")

    @classmethod
    def standard(cls, target, kernel):
        return cls("standard", kernel, target)

    @classmethod
    def gradient_free(cls, surrogate, target, kernel):
        return cls("gradient_free", kernel, target, surrogate)

    @property
    def score_model(self):
        return self.target if self.kind == "standard" else self.surrogate

    def scores(self, X):
        model = self.score_model
        if not model.has_score:
            raise ScoreUnavailableError(f"{model!r} has no analytic score")
        return model.score(X)

    def log_weights(self, X):
        """Unnormalized ``log(rho / p)``; zeros for the standard kernel."""
        X = np.atleast_2d(X)
        if self.kind == "standard":
            return np.zeros(X.shape[0])
        return self.surrogate.log_density(X) - self.target.log_density(X)

    def base_matrix(self, X, Y=None):
        """Unweighted Stein kernel matrix (``kappa_p`` or ``kappa_rho``)."""
        X = np.atleast_2d(X)
        Y = X if Y is None else np.atleast_2d(Y)
        sx = self.scores(X)
        sy = sx if Y is X else self.scores(Y)
        return stein_kernel_matrix(X, Y, sx, sy, self.kernel)


def kappa_eval(kf: KappaFunction, x, xprime) -> float:
    """Single Stein-kernel value; gradient-free kind includes raw weights ``w(x) w(x')``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xp = np.atleast_2d(np.asarray(xprime, dtype=float))
    value = kf.base_matrix(x, xp)[0, 0]
    if kf.kind == "gradient_free":
        value *= np.exp(kf.log_weights(x)[0] + kf.log_weights(xp)[0])
    return float(value)


def _weighted_double_sum(H, w, statistic):
    if statistic == "V":
        return float(w @ H @ w)
    off = w @ H @ w - np.sum(w ** 2 * np.diag(H))
    return float(off / (1.0 - np.sum(w ** 2)))


def gf_ksd(points, kf: KappaFunction, statistic="V", weighting="self") -> float:
    """Squared (gradient-free) kernelized Stein discrepancy of ``points``.

    With ``weighting="self"`` the weights ``rho/p`` are self-normalized, so
    normalizing constants of either density cancel: the V-statistic is
    ``sum_ij wbar_i wbar_j kappa(x_i, x_j)`` and the U-statistic is the same
    sum over ``i != j`` divided by ``sum_{i != j} wbar_i wbar_j``. With
    ``weighting="raw"`` the literal ``w = rho/p`` is used with the usual
    ``1/n^2`` or ``1/(n(n-1))`` factor. For the standard kind both reduce to
    the ordinary KSD estimators.
    """
    if statistic not in ("U", "V"):
        raise ValueError("statistic must be 'U' or 'V'")
    if weighting not in ("self", "raw"):
        raise ValueError("weighting must be 'self' or 'raw'")
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = X.shape[0]
    if statistic == "U" and n < 2:
        raise ValueError("the U-statistic needs at least two points")
    H = kf.base_matrix(X)
    log_w = kf.log_weights(X)
    if weighting == "self":
        w, _ = normalize_log_weights(log_w)
        return _weighted_double_sum(H, w, statistic)
    w = np.exp(log_w)
    total = w @ H @ w
    if statistic == "V":
        return float(total / n ** 2)
    return float((total - np.sum(w ** 2 * np.diag(H))) / (n * (n - 1)))


def ksd(points, target, kernel, statistic="V") -> float:
    """Ordinary squared KSD, using the target's score."""
    return gf_ksd(points, KappaFunction.standard(target, kernel), statistic)


def mmd_bandwidth(samples) -> float:
    """Evaluation bandwidth ``h = med^2`` from the median pairwise distance of ``samples``."""
    med = np.median(pdist(np.atleast_2d(samples)))
    return float(med ** 2) if med > 0 else 1.0


def mmd2(sample_a, sample_b, kernel: Kernel, weights_a=None, statistic=None) -> float:
    """Squared MMD between two samples.

    Defaults to the unbiased U-statistic for unweighted samples and to the
    V-statistic when ``weights_a`` is given (weights on ``sample_a`` only).
    """
    A = np.atleast_2d(np.asarray(sample_a, dtype=float))
    B = np.atleast_2d(np.asarray(sample_b, dtype=float))
    n, m = A.shape[0], B.shape[0]
    if statistic is None:
        statistic = "U" if weights_a is None else "V"
    if statistic not in ("U", "V"):
        raise ValueError("statistic must be 'U' or 'V'")
    if weights_a is not None and statistic == "U":
        raise ValueError("weighted MMD is only defined as a V-statistic")
    Kaa, Kbb, Kab = kernel.gram(A, A), kernel.gram(B, B), kernel.gram(A, B)
    if statistic == "U":
        if n < 2 or m < 2:
            raise ValueError("the U-statistic needs at least two points per sample")
        term_a = (Kaa.sum() - np.trace(Kaa)) / (n * (n - 1))
        term_b = (Kbb.sum() - np.trace(Kbb)) / (m * (m - 1))
        return float(term_a + term_b - 2.0 * Kab.mean())
    wa = np.full(n, 1.0 / n) if weights_a is None else np.asarray(weights_a, dtype=float)
    return float(wa @ Kaa @ wa + Kbb.mean() - 2.0 * wa @ Kab.mean(axis=1))


def moment_mse(particles, truth_mean, truth_var, weights=None):
    """Per-coordinate averaged squared errors of the (weighted) mean and variance."""
    X = np.atleast_2d(np.asarray(particles, dtype=float))
    w = np.full(X.shape[0], 1.0 / X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    mean = w @ X
    var = w @ (X - mean) ** 2
    mse_mean = float(np.mean((mean - np.asarray(truth_mean)) ** 2))
    mse_var = float(np.mean((var - np.asarray(truth_var)) ** 2))
    return mse_mean, mse_var


@dataclass
class MetricReport:
    mmd2: float
    mse_mean: float
    mse_var: float
    ksd2: Optional[float] = None
    ess: Optional[float] = None
    mmd_statistic: str = "U"


class Evaluator:
    """Scores particle sets against a frozen set of exact target samples.

    The MMD bandwidth is fixed once from the exact samples so every method
    is compared under the same kernel. Truth moments default to the model's
    closed form and fall back to the exact-sample moments.
    """

    def __init__(self, exact_samples, truth_mean=None, truth_var=None, bandwidth=None):
        self.exact = np.atleast_2d(np.asarray(exact_samples, dtype=float))
        self.bandwidth = mmd_bandwidth(self.exact) if bandwidth is None else float(bandwidth)
        self.kernel = RBFKernel(self.bandwidth)
        self.truth_mean = self.exact.mean(axis=0) if truth_mean is None else np.asarray(truth_mean)
        self.truth_var = self.exact.var(axis=0) if truth_var is None else np.asarray(truth_var)
        m = self.exact.shape[0]
        Kbb = self.kernel.gram(self.exact)
        self._kbb_u = (Kbb.sum() - np.trace(Kbb)) / (m * (m - 1))
        self._kbb_v = Kbb.mean()

    @classmethod
    def for_model(cls, model: DensityModel, n_exact, seed, bandwidth=None):
        exact = model.sample_exact(n_exact, seed)
        try:
            mean, var = model.moments()
        except NotImplementedError:
            mean = var = None
        return cls(exact, mean, var, bandwidth)

    def mmd2(self, particles, weights=None):
        A = np.atleast_2d(particles)
        n = A.shape[0]
        Kaa = self.kernel.gram(A)
        Kab = self.kernel.gram(A, self.exact)
        if weights is None:
            if n < 2:
                raise ValueError("the U-statistic needs at least two particles")
            return float((Kaa.sum() - np.trace(Kaa)) / (n * (n - 1)) + self._kbb_u - 2.0 * Kab.mean())
        w = np.asarray(weights, dtype=float)
        return float(w @ Kaa @ w + self._kbb_v - 2.0 * w @ Kab.mean(axis=1))

    def report(self, particles, weights=None, ess=None) -> MetricReport:
        mse_mean, mse_var = moment_mse(particles, self.truth_mean, self.truth_var, weights)
        return MetricReport(self.mmd2(particles, weights), mse_mean, mse_var, ess=ess,
                            mmd_statistic="U" if weights is None else "V")
