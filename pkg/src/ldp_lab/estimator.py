"""
Crude Monte Carlo estimates of the path events behind the small-noise
asymptotics: tube events around a reference path, exits from a ball, the
eps^2*log p ladder, the deviation of the coupled perturbed process and
the modulus-of-continuity tail.

Chunks of paths run through sde.iterate_batch so only the current state of
each path is held in memory. Diverged paths count as misses for tube events
and as hits for exit-type events, and are tallied separately.
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy import stats

from .action import Path, rate_functional, resample_path
from .configuration import LLBaseSettings
from .errors import InvalidArgumentError
from .model import DiffusionModel
from .parallel import map_chunks
from .sde import SimConfig, iterate_batch
from . import log_utils

LADDER_CAVEAT = ("delta is held fixed while epsilon decreases; the target -J_T(u) is the delta->0 limit, "
                 "so eps2_log_p carries a delta-dependent bias that is not corrected")


@dataclass
class TubeEstimate:
    event: str
    epsilon: float
    delta: float
    T: float
    hits: int
    n: int
    p_hat: float
    p_lo: float
    p_hi: float
    eps2_log_p: float
    is_upper_bound: bool
    diverged: int = 0
    extra: dict = field(default_factory=dict)

    def AsDict(self) -> dict:
        d = {
            'event': self.event,
            'epsilon': self.epsilon,
            'delta': self.delta,
            'T': self.T,
            'hits': self.hits,
            'n': self.n,
            'p_hat': self.p_hat,
            'p_lo': self.p_lo,
            'p_hi': self.p_hi,
            'eps2_log_p': self.eps2_log_p,
            'is_upper_bound': self.is_upper_bound,
            'diverged': self.diverged,
        }
        d.update(self.extra)
        return d


@dataclass
class LadderRow:
    epsilon: float
    estimate: TubeEstimate
    target: float

    def AsDict(self) -> dict:
        d = self.estimate.AsDict()
        d['target'] = self.target
        return d


def clopper_pearson(hits: int, n: int, alpha: float = LLBaseSettings.CI_ALPHA):
    """
    Exact binomial confidence interval

    Args:
        hits: Successes
        n: Trials
        alpha: 1 - confidence level

    Returns:
        tuple: (lo, hi)
    """
    if n < 1 or not 0 <= hits <= n:
        raise InvalidArgumentError(f"need 0 <= hits <= n and n >= 1, got hits={hits}, n={n}", module="estimator")
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(alpha / 2, hits, n - hits + 1))
    hi = 1.0 if hits == n else float(stats.beta.ppf(1 - alpha / 2, hits + 1, n - hits))
    p = hits / n
    return min(lo, p), max(hi, p)


def log_prob_summary(hits: int, n: int, epsilon: float):
    """(eps^2 ln(hits/n), False), or (eps^2 ln(3/n), True) when hits == 0"""
    if n < 1 or not 0 <= hits <= n:
        raise InvalidArgumentError(f"need 0 <= hits <= n and n >= 1, got hits={hits}, n={n}", module="estimator")
    eps2 = epsilon * epsilon
    if hits == 0:
        return eps2 * np.log(3.0 / n), True
    return eps2 * np.log(hits / n), False


def make_estimate(event: str, epsilon: float, delta: float, T: float, hits: int, n: int, diverged: int = 0,
                  alpha: float = LLBaseSettings.CI_ALPHA, extra: dict = None) -> TubeEstimate:
    hits = int(hits)
    lo, hi = clopper_pearson(hits, n, alpha)
    value, upper = log_prob_summary(hits, n, epsilon)
    return TubeEstimate(event=event, epsilon=float(epsilon), delta=float(delta), T=float(T), hits=hits, n=int(n),
                        p_hat=hits / n, p_lo=lo, p_hi=hi, eps2_log_p=float(value), is_upper_bound=upper,
                        diverged=int(diverged), extra=dict(extra or {}))


def _reduce(results) -> tuple:
    """Sum (hits, diverged) pairs in chunk order"""
    hits = 0
    diverged = 0
    for h, d in results:
        hits += h
        diverged += d
    return hits, diverged


def _check_n(n: int):
    if int(n) < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}", module="estimator")


def _on_grid(u: Path, cfg: SimConfig) -> Path:
    if abs(u.T - cfg.T) > 1e-9 * max(1.0, cfg.T):
        raise InvalidArgumentError(f"reference path has T={u.T}, simulation has T={cfg.T}", module="estimator")
    return resample_path(u, cfg.n_steps)


def _tube_counts(model: DiffusionModel, U: np.ndarray, delta: float, cfg: SimConfig,
                 n: int, workers: int, chunk: int) -> tuple:
    def work(first, count):
        sup_dev = np.zeros(count)
        diverged = None
        for k, X, _, diverged in iterate_batch(model, cfg, first, count):
            np.maximum(sup_dev, np.linalg.norm(X - U[k], axis=1), out=sup_dev)
        inside = (sup_dev <= delta) & ~diverged
        return int(np.count_nonzero(inside)), int(np.count_nonzero(diverged))

    return _reduce(map_chunks(work, n, chunk, workers))


def tube_probability(model: DiffusionModel, u: Path, delta: float, cfg: SimConfig, n: int, workers: int = 1,
                     settings: LLBaseSettings = LLBaseSettings) -> TubeEstimate:
    """
    P(max_k |X_k - u_k| <= delta) over the simulation grid

    Args:
        model: Diffusion model
        u: Reference path with the simulation's T (resampled onto its grid if needed)
        delta: Tube radius
        cfg: Simulation config
        n: Number of paths
        workers: Thread count

    Returns:
        TubeEstimate with event "tube"
    """
    if not delta > 0:
        raise InvalidArgumentError(f"delta must be positive, got {delta}", module="estimator")
    _check_n(n)
    if u.dim != model.dim:
        raise InvalidArgumentError("reference path and model dimensions differ", module="estimator")
    U = _on_grid(u, cfg).states
    hits, diverged = _tube_counts(model, U, delta, cfg, n, workers, settings.CHUNK_PATHS)
    if diverged:
        log_utils.warn(f"{diverged} of {n} path(s) diverged and were counted as misses")
    return make_estimate("tube", cfg.epsilon, delta, cfg.T, hits, n, diverged, settings.CI_ALPHA)


def exit_probability(model: DiffusionModel, C: float, cfg: SimConfig, n: int, workers: int = 1,
                     settings: LLBaseSettings = LLBaseSettings) -> TubeEstimate:
    """P(first grid time with |X| >= C is <= T); the TubeEstimate's delta holds C"""
    if not C > np.linalg.norm(model.x0):
        raise InvalidArgumentError(f"C={C} must exceed |x0|={np.linalg.norm(model.x0)}", module="estimator")
    _check_n(n)

    def work(first, count):
        exited = np.zeros(count, dtype=bool)
        diverged = None
        for k, X, _, diverged in iterate_batch(model, cfg, first, count):
            exited |= np.linalg.norm(X, axis=1) >= C
        return int(np.count_nonzero(exited | diverged)), int(np.count_nonzero(diverged))

    hits, diverged = _reduce(map_chunks(work, n, settings.CHUNK_PATHS, workers))
    if diverged:
        log_utils.warn(f"{diverged} of {n} path(s) diverged and were counted as exits")
    return make_estimate("exit", cfg.epsilon, C, cfg.T, hits, n, diverged, settings.CI_ALPHA, extra={'C': float(C)})


def ldp_ladder(model: DiffusionModel, u: Path, delta: float, eps_list: Sequence[float], base_cfg: SimConfig,
               n: int, workers: int = 1, settings: LLBaseSettings = LLBaseSettings) -> List[LadderRow]:
    """
    Tube estimates for a decreasing sequence of noise levels, each row next
    to the target -J_T(u)

    Args:
        model: Diffusion model
        u: Reference path
        delta: Tube radius shared by all rows
        eps_list: Strictly decreasing noise levels
        base_cfg: Simulation config; its epsilon is replaced row by row
        n: Paths per row

    Returns:
        list of LadderRow, rows with zero hits included with the upper-bound flag
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise InvalidArgumentError("eps_list must be a non-empty list of positive numbers", module="estimator")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise InvalidArgumentError(f"eps_list must be strictly decreasing, got {eps_list}", module="estimator")
    u_grid = _on_grid(u, base_cfg)
    target = -rate_functional(model, u_grid, settings.RCOND, settings.RESIDUAL_TOL, settings).value
    log_utils.log(f"ladder: target -J_T(u) = {target:.6g}")
    rows = []
    for eps in eps_list:
        cfg = SimConfig(epsilon=eps, T=base_cfg.T, dt=base_cfg.dt, seed=base_cfg.seed, scheme=base_cfg.scheme)
        est = tube_probability(model, u_grid, delta, cfg, n, workers, settings)
        log_utils.log(f"   eps={eps:g}: hits={est.hits}/{n}, eps2_log_p={est.eps2_log_p:.5g}"
                      + (" (upper bound)" if est.is_upper_bound else ""))
        rows.append(LadderRow(epsilon=eps, estimate=est, target=target))
    return rows


def coupling_deviation_probability(model: DiffusionModel, cfg: SimConfig, beta: float, C: float, n: int,
                                   workers: int = 1, settings: LLBaseSettings = LLBaseSettings) -> TubeEstimate:
    """
    P(max deviation between the perturbed and base paths, up to the first node
    where either reaches norm C, exceeds beta^(1/4)); delta holds beta^(1/4)
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidArgumentError(f"beta must lie in [0,1], got {beta}", module="estimator")
    if not C > 0:
        raise InvalidArgumentError(f"C must be positive, got {C}", module="estimator")
    _check_n(n)
    threshold = float(beta) ** 0.25

    def work(first, count):
        sup_dev = np.zeros(count)
        stopped = np.zeros(count, dtype=bool)
        diverged = None
        for k, X, Xp, diverged in iterate_batch(model, cfg, first, count, beta=beta):
            dev = np.linalg.norm(Xp - X, axis=1)
            sup_dev = np.where(stopped, sup_dev, np.maximum(sup_dev, dev))
            stopped |= (np.linalg.norm(X, axis=1) >= C) | (np.linalg.norm(Xp, axis=1) >= C)
        hit = (sup_dev > threshold) | diverged
        return int(np.count_nonzero(hit)), int(np.count_nonzero(diverged))

    hits, diverged = _reduce(map_chunks(work, n, settings.CHUNK_PATHS, workers))
    if diverged:
        log_utils.warn(f"{diverged} of {n} coupled path(s) diverged and were counted as deviations")
    return make_estimate("coupling", cfg.epsilon, threshold, cfg.T, hits, n, diverged, settings.CI_ALPHA,
                         extra={'beta': float(beta), 'C': float(C)})


def modulus_probability(model: DiffusionModel, cfg: SimConfig, thetas: Sequence[float], window: float,
                        eta: float, n: int, workers: int = 1,
                        settings: LLBaseSettings = LLBaseSettings) -> tuple:
    """
    P(max_{0 < t <= window} |X_{theta+t} - X_theta| > eta) at deterministic grid times theta

    Args:
        model: Diffusion model
        cfg: Simulation config
        thetas: Start times, rounded to the grid
        window: Look-ahead length, rounded to the grid
        eta: Deviation threshold
        n: Number of paths

    Returns:
        tuple: (list of TubeEstimate with event "modulus", index of the row with the largest p_hat)
    """
    if not eta > 0 or not window > 0:
        raise InvalidArgumentError("eta and window must be positive", module="estimator")
    thetas = [float(t) for t in thetas]
    if not thetas:
        raise InvalidArgumentError("thetas must not be empty", module="estimator")
    _check_n(n)
    w = max(1, int(round(window / cfg.dt)))
    starts = np.array([int(round(t / cfg.dt)) for t in thetas])
    if np.any(starts < 0) or np.any(starts + w > cfg.n_steps):
        raise InvalidArgumentError(f"every theta + window must lie in [0, T={cfg.T}]", module="estimator")
    ends = starts + w

    def work(first, count):
        anchors = np.zeros((len(thetas), count, model.dim))
        sup_dev = np.zeros((len(thetas), count))
        diverged = None
        for k, X, _, diverged in iterate_batch(model, cfg, first, count):
            for j in range(len(thetas)):
                if k == starts[j]:
                    anchors[j] = X
                elif starts[j] < k <= ends[j]:
                    np.maximum(sup_dev[j], np.linalg.norm(X - anchors[j], axis=1), out=sup_dev[j])
        hits = [int(np.count_nonzero((sup_dev[j] > eta) | diverged)) for j in range(len(thetas))]
        return hits, int(np.count_nonzero(diverged))

    per_theta = np.zeros(len(thetas), dtype=np.int64)
    diverged = 0
    for hits, d in map_chunks(work, n, settings.CHUNK_PATHS, workers):
        per_theta += np.asarray(hits, dtype=np.int64)
        diverged += d
    rows = [make_estimate("modulus", cfg.epsilon, eta, cfg.T, int(h), n, diverged, settings.CI_ALPHA,
                          extra={'theta': float(starts[j] * cfg.dt), 'window': float(w * cfg.dt)})
            for j, h in enumerate(per_theta)]
    worst = int(np.argmax([r.p_hat for r in rows]))
    return rows, worst
