"""Particle transport: SVGD, gradient-free SVGD and their annealed variants.

Particle sets are plain ``(n, d)`` float arrays. Directions are ascent
directions for the particles; steps are taken with Adam by default.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .densities import DensityModel, GeometricPathDensity, KernelCurveSurrogate
from .errors import NumericalAbort, ScoreUnavailableError
from .kernels import Kernel, RBFKernel, median_bandwidth
from .records import RunRecord

logger = logging.getLogger(__name__)

__all__ = [
    "AnnealSchedule",
    "UpdateConfig",
    "WeightDiagnostics",
    "Adam",
    "PlainStep",
    "svgd_direction",
    "gf_svgd_direction",
    "normalized_log_weights",
    "normalize_log_weights",
    "apply_step",
    "run_svgd",
    "run_gf_svgd",
    "run_annealed",
]

ESS_WARNING_FRACTION = 0.1


@dataclass(frozen=True)
class AnnealSchedule:
    """Temperature ladder ``0 = alpha_0 < ... < alpha_T = 1``."""

    temperatures: tuple
    steps_per_temperature: int = 1

    def __post_init__(self):
        temps = tuple(float(a) for a in self.temperatures)
        if len(temps) < 2:
            raise ValueError("an annealing schedule needs at least two temperatures")
        if temps[0] != 0.0 or temps[-1] != 1.0:
            raise ValueError("temperatures must start at exactly 0 and end at exactly 1")
        if any(b <= a for a, b in zip(temps, temps[1:])):
            raise ValueError("temperatures must be strictly increasing")
        if int(self.steps_per_temperature) < 1:
            raise ValueError("steps_per_temperature must be at least 1")
        object.__setattr__(self, "temperatures", temps)
        object.__setattr__(self, "steps_per_temperature", int(self.steps_per_temperature))

    @classmethod
    def power(cls, T, gamma=1.0, m=1):
        """``alpha_t = (t / T) ** gamma`` for ``t = 0..T``."""
        T = int(T)
        if T < 1:
            raise ValueError("T must be at least 1")
        temps = [(t / T) ** gamma for t in range(T + 1)]
        temps[0], temps[-1] = 0.0, 1.0
        return cls(tuple(temps), m)

    @property
    def T(self):
        return len(self.temperatures) - 1


@dataclass
class UpdateConfig:
    """Step-size and bandwidth settings shared by all transport runs.

    ``bandwidth=None`` recomputes the median heuristic from the current
    particles at every step, multiplied by ``bandwidth_scale``; a number
    fixes it.
    """

    step_size: float = 0.05
    iterations: int = 1000
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bandwidth: Optional[float] = None
    bandwidth_scale: float = 1.0
    record_every: int = 0
    reset_optimizer_per_temperature: bool = False

    def __post_init__(self):
        if self.optimizer not in ("adam", "plain"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if int(self.iterations) < 0:
            raise ValueError("iterations must be non-negative")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("a fixed bandwidth must be positive")
        if not self.bandwidth_scale > 0:
            raise ValueError("bandwidth_scale must be positive")


@dataclass
class WeightDiagnostics:
    normalized_weights: np.ndarray
    effective_sample_size: float
    max_log_ratio: float
    log_ratios: np.ndarray = field(repr=False, default=None)


class PlainStep:
    def __init__(self, step_size):
        self.step_size = step_size

    def update(self, direction):
        return self.step_size * direction

    def reset(self):
        pass


class Adam:
    """Adam on an ascent direction, with moments shared across the whole particle array."""

    def __init__(self, step_size, beta1=0.9, beta2=0.999, eps=1e-8):
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.reset()

    def reset(self):
        self.m = None
        self.v = None
        self.t = 0

    def update(self, direction):
        if self.m is None:
            self.m = np.zeros_like(direction)
            self.v = np.zeros_like(direction)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * direction
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * direction ** 2
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return self.step_size * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config: UpdateConfig):
    if config.optimizer == "plain":
        return PlainStep(config.step_size)
    return Adam(config.step_size, config.beta1, config.beta2, config.eps)


def normalize_log_weights(log_w):
    """Self-normalized weights from unnormalized log-weights.

    Returns ``(weights, ess)`` where ``ess = 1 / sum(weights ** 2)``.
    """
    log_w = np.asarray(log_w, dtype=float)
    bad = ~np.isfinite(log_w)
    if np.any(bad):
        raise NumericalAbort("non-finite log importance weight", index=int(np.flatnonzero(bad)[0]))
    w = np.exp(log_w - log_w.max())
    w /= w.sum()
    return w, float(1.0 / np.sum(w ** 2))


def normalized_log_weights(particles, surrogate: DensityModel, target: DensityModel,
                           surrogate_log=None, target_log=None) -> WeightDiagnostics:
    """Self-normalized importance weights ``rho(x_j) / p(x_j)`` at the particles.

    Precomputed ``surrogate_log`` / ``target_log`` values may be passed to
    avoid re-evaluating the densities.
    """
    X = np.atleast_2d(particles)
    if surrogate_log is None:
        surrogate_log = surrogate.log_density(X)
    if target_log is None:
        target_log = target.log_density(X)
    for name, vals in (("surrogate", surrogate_log), ("target", target_log)):
        bad = ~np.isfinite(vals)
        if np.any(bad):
            raise NumericalAbort(f"non-finite {name} log-density", index=int(np.flatnonzero(bad)[0]))
    log_ratio = np.asarray(surrogate_log, dtype=float) - np.asarray(target_log, dtype=float)
    w, ess = normalize_log_weights(log_ratio)
    return WeightDiagnostics(w, ess, float(log_ratio.max()), log_ratio)


def _weighted_stein_direction(X, scores, weights, kernel: Kernel):
    # row i = sum_j w_j [s(x_j) k(x_j, x_i) + grad_{x_j} k(x_j, x_i)]
    if isinstance(kernel, RBFKernel):
        K = kernel.gram(X)
        wK = K * weights[:, None]
        drive = wK.T @ scores
        repulse = (2.0 / kernel.bandwidth) * (X * wK.sum(axis=0)[:, None] - wK.T @ X)
        return drive + repulse
    b = kernel.gram_bundle(X, X)
    drive = (b.value * weights[:, None]).T @ scores
    repulse = np.einsum("j,jid->id", weights, b.grad_x)
    return drive + repulse


def _score_or_raise(model: DensityModel, X, role):
    if not model.has_score:
        raise ScoreUnavailableError(f"{role} {model!r} has no analytic score")
    return model.score(X)


def svgd_direction(particles, target: DensityModel, kernel: Kernel):
    """Standard SVGD direction ``(1/n) sum_j [s_p(x_j) k(x_j, x_i) + grad_{x_j} k(x_j, x_i)]``."""
    X = np.atleast_2d(np.asarray(particles, dtype=float))
    scores = _score_or_raise(target, X, "target")
    n = X.shape[0]
    return _weighted_stein_direction(X, scores, np.full(n, 1.0 / n), kernel)


def gf_svgd_direction(particles, surrogate: DensityModel, target: DensityModel,
                      kernel: Kernel, weights: Optional[WeightDiagnostics] = None):
    """Gradient-free SVGD direction.

    Uses only the surrogate's score; the target enters through its values via
    self-normalized weights ``rho / p``. Never calls ``target.score``.
    """
    X = np.atleast_2d(np.asarray(particles, dtype=float))
    if weights is None:
        weights = normalized_log_weights(X, surrogate, target)
    scores = _score_or_raise(surrogate, X, "surrogate")
    return _weighted_stein_direction(X, scores, weights.normalized_weights, kernel)


def _check_finite(X, iteration):
    bad = ~np.all(np.isfinite(X), axis=1)
    if np.any(bad):
        raise NumericalAbort("non-finite particle position", iteration=iteration,
                             index=int(np.flatnonzero(bad)[0]))


def apply_step(particles, direction, config: UpdateConfig, optimizer_state=None, iteration=None):
    """Move particles along ``direction``; returns ``(particles, optimizer_state)``."""
    X = np.asarray(particles, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if X.shape != direction.shape:
        raise ValueError(f"direction shape {direction.shape} does not match particles {X.shape}")
    if optimizer_state is None:
        optimizer_state = make_optimizer(config)
    _check_finite(direction, iteration)
    X = X + optimizer_state.update(direction)
    _check_finite(X, iteration)
    return X, optimizer_state


def _kernel_for(X, config: UpdateConfig):
    if config.bandwidth is not None:
        return RBFKernel(config.bandwidth)
    h = config.bandwidth_scale * median_bandwidth(X)
    if not np.isfinite(h):
        raise NumericalAbort("median bandwidth overflowed; particles diverged")
    return RBFKernel(h)


class _Recorder:
    """Collects checkpoint rows at the configured cadence."""

    def __init__(self, config, total, monitor):
        self.record = RunRecord()
        self.every = int(config.record_every)
        self.total = total
        self.monitor = monitor
        self.start = time.perf_counter()
        self.low_ess = 0

    def due(self, it):
        return it == 0 or it == self.total or (self.every > 0 and it % self.every == 0)

    def log(self, it, X, weights=None, ess=None, bandwidth=np.nan):
        if ess is not None:
            self.record.ess_history.append(ess)
            if ess < ESS_WARNING_FRACTION * X.shape[0]:
                if self.low_ess == 0:
                    logger.warning("effective sample size %.2f below %.0f%% of n=%d at iteration %d",
                                   ess, 100 * ESS_WARNING_FRACTION, X.shape[0], it)
                self.low_ess += 1
        if not self.due(it):
            return
        metrics = self.monitor(it, X, weights) if self.monitor is not None else {}
        wall = 1000.0 * (time.perf_counter() - self.start)
        self.record.add_row(it, wall, ess=X.shape[0] if ess is None else ess,
                            bandwidth=bandwidth, **metrics)

    def finish(self, X, weights=None, **info):
        self.record.particles = X
        self.record.weights = weights
        self.record.info.update(info, low_ess_iterations=self.low_ess)
        return self.record


def run_svgd(target: DensityModel, init, config: UpdateConfig,
             monitor: Optional[Callable] = None):
    """Run ``config.iterations`` SVGD steps. Returns ``(particles, RunRecord)``.

    ``monitor(iteration, particles, weights)`` may return extra metric columns.
    """
    X = np.array(init, dtype=float)
    rec = _Recorder(config, config.iterations, monitor)
    opt = make_optimizer(config)
    h = _kernel_for(X, config).bandwidth
    rec.log(0, X, bandwidth=h)
    for it in range(1, config.iterations + 1):
        kernel = _kernel_for(X, config)
        h = kernel.bandwidth
        X, opt = apply_step(X, svgd_direction(X, target, kernel), config, opt, it)
        rec.log(it, X, bandwidth=h)
    return X, rec.finish(X, algorithm="svgd")


def run_gf_svgd(target: DensityModel, surrogate: DensityModel, init, config: UpdateConfig,
                monitor: Optional[Callable] = None):
    """Run gradient-free SVGD with a fixed surrogate. Returns ``(particles, RunRecord)``."""
    X = np.array(init, dtype=float)
    rec = _Recorder(config, config.iterations, monitor)
    opt = make_optimizer(config)
    diag = normalized_log_weights(X, surrogate, target)
    rec.log(0, X, ess=diag.effective_sample_size, bandwidth=_kernel_for(X, config).bandwidth)
    for it in range(1, config.iterations + 1):
        kernel = _kernel_for(X, config)
        direction = gf_svgd_direction(X, surrogate, target, kernel, weights=diag)
        X, opt = apply_step(X, direction, config, opt, it)
        diag = normalized_log_weights(X, surrogate, target)
        rec.log(it, X, ess=diag.effective_sample_size, bandwidth=kernel.bandwidth)
    return X, rec.finish(X, algorithm="gf-svgd", surrogate=repr(surrogate))


def run_annealed(target: DensityModel, p0: DensityModel, schedule: AnnealSchedule, init,
                 config: UpdateConfig, mode="gradient_free", monitor: Optional[Callable] = None,
                 smoothing_bandwidth: Optional[float] = None, smoothing_scale: float = 1.0):
    """Annealed SVGD (``mode="gradient"``) or annealed gradient-free SVGD.

    At temperature ``t + 1`` the intermediate target is
    ``p0^(1 - alpha) p^alpha``. In gradient-free mode a kernel curve surrogate
    is fitted through the intermediate density at the current particles and
    ``m`` gradient-free steps are taken against it; ``target`` and ``p0`` are
    only ever evaluated, never differentiated. ``config.iterations`` is
    ignored in favour of ``T * m``. The smoothing kernel of the surrogate
    uses ``smoothing_bandwidth`` if given, otherwise the current transport
    bandwidth times ``smoothing_scale``.
    """
    if mode not in ("gradient", "gradient_free"):
        raise ValueError(f"unknown annealing mode {mode!r}")
    if mode == "gradient":
        for model, role in ((target, "target"), (p0, "initial density")):
            if not model.has_score:
                raise ScoreUnavailableError(f"{role} {model!r} has no analytic score")
    X = np.array(init, dtype=float)
    m = schedule.steps_per_temperature
    total = schedule.T * m
    rec = _Recorder(config, total, monitor)
    opt = make_optimizer(config)
    rec.log(0, X, ess=None if mode == "gradient" else float(X.shape[0]),
            bandwidth=_kernel_for(X, config).bandwidth)
    it = 0
    for t in range(schedule.T):
        alpha = schedule.temperatures[t + 1]
        path = GeometricPathDensity(p0, target, alpha)
        if config.reset_optimizer_per_temperature:
            opt.reset()
        surrogate = None
        for _ in range(m):
            it += 1
            kernel = _kernel_for(X, config)
            if mode == "gradient":
                direction = svgd_direction(X, path, kernel)
                ess = None
            else:
                log_pt = path.combine(p0.log_density(X), target.log_density(X))
                if surrogate is None:
                    h_rho = (smoothing_bandwidth if smoothing_bandwidth is not None
                             else smoothing_scale * kernel.bandwidth)
                    surrogate = KernelCurveSurrogate(X, log_pt, RBFKernel(h_rho))
                diag = normalized_log_weights(X, surrogate, path, target_log=log_pt)
                direction = gf_svgd_direction(X, surrogate, path, kernel, weights=diag)
                ess = diag.effective_sample_size
            X, opt = apply_step(X, direction, config, opt, it)
            rec.log(it, X, ess=ess, bandwidth=kernel.bandwidth)
    algorithm = "a-svgd" if mode == "gradient" else "agf-svgd"
    return X, rec.finish(X, algorithm=algorithm, T=schedule.T, m=m)
