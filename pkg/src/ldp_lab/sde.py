"""
Euler-type simulation of dX = b(X)dt + eps*sigma(X)dB and of the coupled
process that adds eps*sqrt(beta)*dW with W independent of B.

The tamed step X + dt*b/(1 + dt*|b|) + eps*sigma*dB keeps superlinear drifts
(b = -x^3) from blowing up at coarse dt; the plain step drops the taming.
Exits are detected at grid nodes only.
"""

from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

import numpy as np

from .action import Path
from .configuration import LLBaseSettings
from .errors import DivergenceError, InvalidArgumentError
from .model import DiffusionModel
from .parallel import map_chunks
from .rng import STREAM_B, STREAM_W, chunk_increments

SCHEMES = (LLBaseSettings.SCHEME_TAMED, LLBaseSettings.SCHEME_PLAIN)


@dataclass
class SimConfig:
    epsilon: float
    T: float
    dt: float = LLBaseSettings.SIM_DT
    seed: int = 0
    scheme: str = LLBaseSettings.SIM_SCHEME

    def __post_init__(self):
        self.epsilon = float(self.epsilon)
        self.T = float(self.T)
        self.dt = float(self.dt)
        self.seed = int(self.seed)
        if not self.epsilon >= 0:
            raise InvalidArgumentError(f"must be nonnegative, got {self.epsilon}", module="sde", key_path="epsilon")
        if not self.T > 0:
            raise InvalidArgumentError(f"must be positive, got {self.T}", module="sde", key_path="T")
        if not self.dt > 0:
            raise InvalidArgumentError(f"must be positive, got {self.dt}", module="sde", key_path="dt")
        if self.dt > self.T:
            raise InvalidArgumentError(f"{self.dt} exceeds T={self.T}", module="sde", key_path="dt")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise InvalidArgumentError(f"T/dt = {ratio} is not an integer", module="sde", key_path="dt")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r} (known: {', '.join(SCHEMES)})",
                                       module="sde", key_path="scheme")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def AsDict(self) -> dict:
        return {'epsilon': self.epsilon, 'T': self.T, 'dt': self.dt, 'seed': self.seed, 'scheme': self.scheme}


@dataclass
class CoupledPaths:
    base: Path
    perturbed: Path
    beta: float
    sup_deviation: float


def _step(model: DiffusionModel, X: np.ndarray, dt: float, eps: float, dB: np.ndarray, tamed: bool) -> np.ndarray:
    B = model.B(X)
    if tamed:
        drift = dt * B / (1.0 + dt * np.linalg.norm(B, axis=1))[:, None]
    else:
        drift = dt * B
    if eps == 0.0:
        return X + drift
    return X + drift + eps * np.einsum('nij,nj->ni', model.S(X), dB)


def iterate_batch(model: DiffusionModel, cfg: SimConfig, first_index: int, count: int,
                  beta: Optional[float] = None) -> Iterator[Tuple[int, np.ndarray, Optional[np.ndarray], np.ndarray]]:
    """
    Step a chunk of paths forward together

    Args:
        model: Diffusion model
        cfg: Simulation config
        first_index: Path index of the first row
        count: Number of paths
        beta: Also run the perturbed twins when not None

    Yields:
        tuple: (k, X, Xp, diverged) at every node k = 0..n_steps; X and Xp
        have shape (count, dim); diverged rows are reset to x0 and stay
        flagged. The diverged mask is updated in place.
    """
    n_steps = cfg.n_steps
    d = model.dim
    tamed = cfg.scheme == LLBaseSettings.SCHEME_TAMED
    dB = chunk_increments(cfg.seed, first_index, count, STREAM_B, n_steps, d, cfg.dt)
    X = np.tile(model.x0, (count, 1))
    Xp = None
    dW = None
    if beta is not None:
        if beta < 0:
            raise InvalidArgumentError(f"beta must be nonnegative, got {beta}", module="sde")
        Xp = X.copy()
        if beta > 0 and cfg.epsilon > 0:
            dW = cfg.epsilon * np.sqrt(beta) * chunk_increments(cfg.seed, first_index, count, STREAM_W,
                                                                  n_steps, d, cfg.dt)
    diverged = np.zeros(count, dtype=bool)
    yield 0, X, Xp, diverged
    with np.errstate(all='ignore'):
        for k in range(n_steps):
            X = _step(model, X, cfg.dt, cfg.epsilon, dB[:, k], tamed)
            bad = ~np.all(np.isfinite(X), axis=1)
            if Xp is not None:
                Xp = _step(model, Xp, cfg.dt, cfg.epsilon, dB[:, k], tamed)
                if dW is not None:
                    Xp = Xp + dW[:, k]
                bad |= ~np.all(np.isfinite(Xp), axis=1)
            diverged |= bad
            if diverged.any():
                X[diverged] = model.x0
                if Xp is not None:
                    Xp[diverged] = model.x0
            yield k + 1, X, Xp, diverged


def _collect(model: DiffusionModel, cfg: SimConfig, path_index: int, beta: Optional[float]):
    n_steps = cfg.n_steps
    base = np.empty((n_steps + 1, model.dim))
    perturbed = np.empty((n_steps + 1, model.dim)) if beta is not None else None
    for k, X, Xp, diverged in iterate_batch(model, cfg, path_index, 1, beta=beta):
        if diverged[0]:
            raise DivergenceError(step=k, path_index=path_index)
        base[k] = X[0]
        if perturbed is not None:
            perturbed[k] = Xp[0]
    return base, perturbed


def simulate(model: DiffusionModel, cfg: SimConfig, path_index: int = 0) -> Path:
    """
    One sample path on the grid 0, dt, ..., T

    Raises:
        DivergenceError: a state became non-finite (plain scheme, coarse dt)
    """
    base, _ = _collect(model, cfg, path_index, None)
    return Path(T=cfg.T, n_steps=cfg.n_steps, states=base)


def deviation_until_exit(base: np.ndarray, perturbed: np.ndarray, C: Optional[float] = None) -> float:
    """max_k |perturbed_k - base_k| over nodes up to and including the first one where either norm reaches C"""
    dev = np.linalg.norm(perturbed - base, axis=1)
    if C is not None:
        reached = (np.linalg.norm(base, axis=1) >= C) | (np.linalg.norm(perturbed, axis=1) >= C)
        hit = np.flatnonzero(reached)
        if hit.size:
            dev = dev[:hit[0] + 1]
    return float(np.max(dev))


def simulate_perturbed(model: DiffusionModel, cfg: SimConfig, beta: float, C: Optional[float] = None,
                       path_index: int = 0) -> CoupledPaths:
    """
    Base and perturbed paths driven by the same dB; the perturbed one adds
    eps*sqrt(beta)*dW from the independent W stream of the same seed

    Args:
        model: Diffusion model
        cfg: Simulation config
        beta: Perturbation size (>= 0)
        C: Optional cap; sup_deviation stops at the first node where either path reaches norm C
        path_index: Which path of the seeded family to draw

    Returns:
        CoupledPaths
    """
    if C is not None and not C > 0:
        raise InvalidArgumentError(f"C must be positive, got {C}", module="sde")
    base, perturbed = _collect(model, cfg, path_index, float(beta))
    return CoupledPaths(
        base=Path(T=cfg.T, n_steps=cfg.n_steps, states=base),
        perturbed=Path(T=cfg.T, n_steps=cfg.n_steps, states=perturbed),
        beta=float(beta),
        sup_deviation=deviation_until_exit(base, perturbed, C),
    )


def first_exit_time(path: Path, C: float) -> float:
    """First grid time with |state| >= C, +inf if the path never gets there"""
    if not C > 0:
        raise InvalidArgumentError(f"C must be positive, got {C}", module="sde")
    hit = np.flatnonzero(np.linalg.norm(path.states, axis=1) >= C)
    if hit.size == 0:
        return float("inf")
    return float(hit[0] * path.dt)


def terminal_states(model: DiffusionModel, cfg: SimConfig, n: int, workers: int = 1,
                    chunk_size: int = LLBaseSettings.CHUNK_PATHS) -> Tuple[np.ndarray, np.ndarray]:
    """
    X_T for paths 0..n-1

    Returns:
        tuple: (states of shape (n, dim), diverged mask); diverged rows hold x0
    """
    def work(first, count):
        diverged = None
        X = None
        for _, X, _, diverged in iterate_batch(model, cfg, first, count):
            pass
        return X.copy(), diverged.copy()

    parts = map_chunks(work, n, chunk_size, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
