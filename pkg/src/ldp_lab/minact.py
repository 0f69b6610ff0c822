"""
Minimum action paths with fixed endpoints

Gradient descent with Armijo backtracking on the regularized functional
J_beta (beta never below BETA_FLOOR while optimizing, since the
pseudoinverse functional is not smooth across rank changes). The descent
direction is the gradient taken in the discrete H^1 metric of the path,
i.e. the Euclidean gradient preconditioned by a scaled second-difference
operator; without it the low-frequency modes of the path converge
O(n_steps^2) times slower. The first local minimum found is reported.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import solve_banded

from .action import (Path, batch_a, rate_functional, rate_functional_regularized, regularized_terms,
                     straight_line_path)
from .configuration import LLBaseSettings
from .errors import InitializationError, InvalidArgumentError
from .model import DiffusionModel
from . import log_utils

ALPHA_MAX = 1e6


@dataclass
class MinActionProblem:
    model: DiffusionModel
    end: np.ndarray
    T: float
    n_steps: int
    start: Optional[np.ndarray] = None
    beta: float = 0.0
    max_iters: int = LLBaseSettings.MAX_ITERS
    grad_tol: float = LLBaseSettings.GRAD_TOL
    initial_path: Optional[Path] = None

    def __post_init__(self):
        d = self.model.dim
        self.start = self.model.x0.copy() if self.start is None else np.atleast_1d(np.asarray(self.start, float))
        self.end = np.atleast_1d(np.asarray(self.end, dtype=float))
        if self.start.shape != (d,) or self.end.shape != (d,):
            raise InvalidArgumentError(f"start and end must have length {d}", module="minact")
        if not np.allclose(self.start, self.model.x0, rtol=0.0, atol=1e-12):
            raise InvalidArgumentError("start must equal the model's x0", module="minact")
        self.start = self.model.x0.copy()
        if self.beta < 0:
            raise InvalidArgumentError(f"beta must be nonnegative, got {self.beta}", module="minact")
        if not self.T > 0:
            raise InvalidArgumentError(f"T must be positive, got {self.T}", module="minact")


@dataclass
class MinActionResult:
    path: Path
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    regularized_value: float
    beta_used: float
    history: List[float] = field(default_factory=list)

    def AsDict(self) -> dict:
        return {
            'value': self.value,
            'regularized_value': self.regularized_value,
            'beta_used': self.beta_used,
            'grad_norm': self.grad_norm,
            'iterations': self.iterations,
            'converged': self.converged,
            'T': self.path.T,
            'n_steps': self.path.n_steps,
        }


def _objective(model: DiffusionModel, states: np.ndarray, dt: float, beta: float) -> float:
    q, _, _, _ = regularized_terms(model, states, dt, beta)
    return float(0.5 * dt * np.sum(q))


def _gradient(model: DiffusionModel, states: np.ndarray, dt: float, beta: float,
              fd_step: float = LLBaseSettings.FD_STEP) -> np.ndarray:
    """Gradient of the midpoint-rule J_beta with respect to every node, shape (n+1, dim)"""
    q, e, Me, m = regularized_terms(model, states, dt, beta)
    n, d = e.shape
    g = dt * Me
    JbT_g = np.zeros((n, d))
    dq_dm = np.zeros((n, d))
    h = fd_step * (1.0 + np.linalg.norm(m, axis=1))
    for j in range(d):
        mp = m.copy()
        mm = m.copy()
        mp[:, j] += h
        mm[:, j] -= h
        width = mp[:, j] - mm[:, j]
        db = (model.B(mp) - model.B(mm)) / width[:, None]
        JbT_g[:, j] = np.sum(db * g, axis=1)
        da = (batch_a(model, mp) - batch_a(model, mm)) / width[:, None, None]
        # d/dm (a+beta I)^-1 = -M (da/dm) M
        dq_dm[:, j] = -0.5 * dt * np.einsum('ki,kij,kj->k', Me, da, Me)
    common = -0.5 * JbT_g + 0.5 * dq_dm
    grad = np.zeros((n + 1, d))
    grad[:-1] += -g / dt + common
    grad[1:] += g / dt + common
    return grad


def action_gradient(model: DiffusionModel, path: Path, beta: float,
                    fd_step: float = LLBaseSettings.FD_STEP) -> np.ndarray:
    """
    Gradient of the discretized J_beta with respect to the interior nodes

    Args:
        model: Diffusion model
        path: Grid path
        beta: Regularization (> 0)
        fd_step: Relative central-difference step for the drift Jacobian and da/dx

    Returns:
        np.ndarray of shape (n_steps-1, dim)
    """
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}", module="minact")
    if path.dim != model.dim:
        raise InvalidArgumentError("path and model dimensions differ", module="minact")
    return _gradient(model, path.states, path.dt, beta, fd_step)[1:-1]


def _h1_banded(n_interior: int, dt: float, scale: float) -> np.ndarray:
    ab = np.zeros((3, n_interior))
    ab[0, 1:] = -scale / dt
    ab[1, :] = scale * (2.0 / dt + dt)
    ab[2, :-1] = -scale / dt
    return ab


def minimize_action(problem: MinActionProblem, settings: LLBaseSettings = LLBaseSettings) -> MinActionResult:
    """
    Minimize J_beta over grid paths from problem.start to problem.end

    Args:
        problem: MinActionProblem (n_steps >= 4)
        settings: ARMIJO_C, MAX_HALVINGS, MIN_REL_DECREASE, BETA_FLOOR, FD_STEP

    Returns:
        MinActionResult; value is re-evaluated at the requested beta
        (pseudoinverse functional when beta = 0)
    """
    model = problem.model
    if problem.n_steps < 4:
        raise InvalidArgumentError(f"n_steps must be >= 4, got {problem.n_steps}", module="minact")
    beta = max(problem.beta, settings.BETA_FLOOR)
    if problem.initial_path is not None:
        path = problem.initial_path
        if path.n_steps != problem.n_steps or abs(path.T - problem.T) > 1e-12 * problem.T:
            raise InvalidArgumentError("initial path grid does not match the problem", module="minact")
        states = path.states.copy()
        states[0] = problem.start
        states[-1] = problem.end
    else:
        states = straight_line_path(problem.start, problem.end, problem.T, problem.n_steps).states.copy()
    dt = problem.T / problem.n_steps

    J = _objective(model, states, dt, beta)
    if not np.isfinite(J):
        raise InitializationError(f"action of the initial path is not finite ({J}); try a larger beta",
                                  module="minact")

    a0 = batch_a(model, 0.5 * (states[:-1] + states[1:]))
    a_ref = float(np.mean(np.trace(a0, axis1=1, axis2=2))) / model.dim + beta
    ab = _h1_banded(problem.n_steps - 1, dt, 1.0 / a_ref)

    g = _gradient(model, states, dt, beta, settings.FD_STEP)[1:-1]
    alpha = 1.0
    iterations = 0
    last_rel = np.inf
    history = [J]
    converged = False
    while True:
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= problem.grad_tol:
            converged = True
            break
        if iterations >= problem.max_iters:
            converged = last_rel < settings.MIN_REL_DECREASE
            break
        direction = -solve_banded((1, 1), ab, g)
        slope = float(np.sum(g * direction))
        accepted = False
        for _ in range(settings.MAX_HALVINGS):
            trial = states.copy()
            trial[1:-1] += alpha * direction
            J_trial = _objective(model, trial, dt, beta)
            if np.isfinite(J_trial) and J_trial <= J + settings.ARMIJO_C * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # no representable descent left along the gradient
            log_utils.debug_log(f"line search stalled at iteration {iterations}")
            converged = grad_norm <= problem.grad_tol
            break
        last_rel = (J - J_trial) / max(abs(J), np.finfo(float).tiny)
        states, J = trial, J_trial
        history.append(J)
        g = _gradient(model, states, dt, beta, settings.FD_STEP)[1:-1]
        iterations += 1
        alpha = min(2.0 * alpha, ALPHA_MAX)

    path = Path(T=problem.T, n_steps=problem.n_steps, states=states)
    regularized_value = rate_functional_regularized(model, path, beta)
    if problem.beta > 0:
        value = rate_functional_regularized(model, path, problem.beta)
    else:
        value = rate_functional(model, path).value
    log_utils.log(f"minimize: J={value:.6g} after {iterations} iteration(s), |grad|={grad_norm:.3g}, "
                  f"converged={converged}")
    return MinActionResult(path=path, value=value, grad_norm=grad_norm, iterations=iterations,
                           converged=converged, regularized_value=regularized_value, beta_used=beta,
                           history=history)


def gradient_check(model: DiffusionModel, path: Path, beta: float, h: float = 1e-6) -> float:
    """
    Compare action_gradient with central differences of J_beta at path

    Returns:
        float: max |analytic - numeric| over all interior components, divided by max |numeric|
    """
    analytic = action_gradient(model, path, beta)
    states = path.states
    numeric = np.zeros_like(analytic)
    for k in range(1, path.n_steps):
        for j in range(path.dim):
            plus = states.copy()
            minus = states.copy()
            plus[k, j] += h
            minus[k, j] -= h
            numeric[k - 1, j] = (_objective(model, plus, path.dt, beta)
                                 - _objective(model, minus, path.dt, beta)) / (2.0 * h)
    scale = max(float(np.max(np.abs(numeric))), np.finfo(float).tiny)
    return float(np.max(np.abs(analytic - numeric))) / scale
