"""Gradient-free comparison methods: self-normalized importance sampling and GF-AIS.

GF-AIS is annealed importance sampling whose transitions are MALA moves
driven by the kernel-curve surrogate score instead of the target score.
The Metropolis correction uses exact intermediate-density values, so each
transition leaves its intermediate density invariant.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .densities import DensityModel, GeometricPathDensity, KernelCurveSurrogate
from .errors import NoExactSamplerError
from .kernels import RBFKernel, median_bandwidth
from .records import RunRecord
from .transport import AnnealSchedule, normalize_log_weights

logger = logging.getLogger(__name__)

__all__ = [
    "ImportanceSample",
    "AISState",
    "importance_sample",
    "mala_log_acceptance",
    "gf_ais",
]

LOW_ESS_FRACTION = 0.5


@dataclass
class ImportanceSample:
    samples: np.ndarray
    weights: np.ndarray
    ess: float
    low_ess: bool

    def __iter__(self):
        # allows ``samples, weights = importance_sample(...)``
        return iter((self.samples, self.weights))


def importance_sample(target: DensityModel, proposal: DensityModel, n, seed) -> ImportanceSample:
    """Draw ``n`` points from ``proposal`` and weight them by ``p / rho``."""
    if not proposal.has_sampler:
        raise NoExactSamplerError(f"proposal {proposal!r} cannot be sampled")
    X = proposal.sample_exact(n, seed)
    w, ess = normalize_log_weights(target.log_density(X) - proposal.log_density(X))
    low = ess < LOW_ESS_FRACTION * n
    if low:
        logger.info("importance sampling ESS %.1f is below half of n=%d", ess, n)
    return ImportanceSample(X, w, ess, low)


@dataclass
class AISState:
    positions: np.ndarray
    log_weights: np.ndarray
    temperature_index: int
    acceptance_rates: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    rejected_nonfinite: int = 0
    record: Optional[RunRecord] = None

    @property
    def weights(self):
        return normalize_log_weights(self.log_weights)[0]

    @property
    def ess(self):
        return normalize_log_weights(self.log_weights)[1]


def _log_q(to, frm, score_frm, step):
    # log N(to; frm + step * score, 2 * step * I) up to a constant
    return -np.sum((to - frm - step * score_frm) ** 2, axis=-1) / (4.0 * step)


def mala_log_acceptance(x, y, log_p_x, log_p_y, score_x, score_y, step):
    """Log Metropolis-Hastings ratio for the Langevin proposal ``y ~ N(x + step s(x), 2 step I)``."""
    return (log_p_y - log_p_x
            + _log_q(x, y, score_y, step) - _log_q(y, x, score_x, step))


def _child_rng(seed, key):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (key,)))


def gf_ais(target: DensityModel, p0: DensityModel, schedule: AnnealSchedule, n, mala_step="auto",
           seed=0, n_mala=1, target_accept=0.6, initial_step=0.1,
           smoothing_bandwidth: Optional[float] = None, smoothing_scale=1.0,
           monitor: Optional[Callable] = None, record_every=0) -> AISState:
    """Annealed importance sampling with surrogate-gradient MALA transitions.

    Chains start from exact draws of ``p0``. At each temperature the
    log-weights gain ``log p_{t+1}(x) - log p_t(x)``; then ``n_mala`` MALA
    moves target ``p_{t+1}`` with drift from a kernel curve surrogate fitted
    through ``p_{t+1}`` at the current chain positions.

    ``mala_step="auto"`` adapts the step between temperatures towards
    ``target_accept``; a number fixes it, and ``0`` disables moves.
    """
    if not p0.has_sampler:
        raise NoExactSamplerError(f"initial density {p0!r} cannot be sampled")
    auto = mala_step == "auto"
    step = float(initial_step if auto else mala_step)
    if step < 0:
        raise ValueError("mala_step must be non-negative")
    rng = _child_rng(seed, 1)
    X = p0.sample_exact(n, seed)
    log_p = target.log_density(X)
    log_0 = p0.log_density(X)
    log_w = np.zeros(n)
    state = AISState(X, log_w, 0)
    rec = RunRecord()
    start = time.perf_counter()
    h = (smoothing_bandwidth if smoothing_bandwidth is not None
         else smoothing_scale * median_bandwidth(X))
    temps = schedule.temperatures
    m = schedule.steps_per_temperature if n_mala is None else int(n_mala)

    def log_row(t):
        if t == 0 or t == schedule.T or (record_every and t % record_every == 0):
            w, ess = normalize_log_weights(log_w)
            metrics = monitor(t, X, w) if monitor is not None else {}
            rec.add_row(t, 1000.0 * (time.perf_counter() - start), ess=ess, bandwidth=h, **metrics)

    log_row(0)
    for t in range(schedule.T):
        a_prev, a_next = temps[t], temps[t + 1]
        log_w = log_w + (a_next - a_prev) * (log_p - log_0)
        path = GeometricPathDensity(p0, target, a_next)
        if m > 0 and step > 0:
            log_pt = path.combine(log_0, log_p)
            h = (smoothing_bandwidth if smoothing_bandwidth is not None
                 else smoothing_scale * median_bandwidth(X))
            surrogate = KernelCurveSurrogate(X, log_pt, RBFKernel(h))
            accepted = 0
            for _ in range(m):
                s_x = surrogate.score(X)
                Y = X + step * s_x + np.sqrt(2.0 * step) * rng.standard_normal(X.shape)
                log_p_y = target.log_density(Y)
                log_0_y = p0.log_density(Y)
                log_a = mala_log_acceptance(X, Y, path.combine(log_0, log_p),
                                            path.combine(log_0_y, log_p_y),
                                            s_x, surrogate.score(Y), step)
                bad = ~np.isfinite(log_a)
                if np.any(bad):
                    state.rejected_nonfinite += int(bad.sum())
                    logger.warning("rejected %d MALA proposals with non-finite acceptance ratio", bad.sum())
                    log_a = np.where(bad, -np.inf, log_a)
                accept = np.log(rng.uniform(size=n)) < log_a
                X = np.where(accept[:, None], Y, X)
                log_p = np.where(accept, log_p_y, log_p)
                log_0 = np.where(accept, log_0_y, log_0)
                accepted += int(accept.sum())
            rate = accepted / (m * n)
            state.acceptance_rates.append(rate)
            state.step_sizes.append(step)
            if auto:
                step *= float(np.exp(2.0 * (rate - target_accept)))
        else:
            state.acceptance_rates.append(1.0)
            state.step_sizes.append(step)
        state.temperature_index = t + 1
        log_row(t + 1)
    state.positions = X
    state.log_weights = log_w
    w, _ = normalize_log_weights(log_w)
    rec.particles = X
    rec.weights = w
    rec.info.update(algorithm="gf-ais", T=schedule.T, n_mala=m, mala_step="auto" if auto else step,
                    final_mala_step=step,
                    mean_acceptance=float(np.mean(state.acceptance_rates)) if state.acceptance_rates else 1.0)
    state.record = rec
    return state
