"""
The finite-horizon action functional on discretized paths

  J_T(u) = 1/2 int_0^T |u' - b(u)|^2_{a+(u)} dt   if u is in Gamma_T, +inf otherwise

Gamma_T asks u_0 = x0 and that the excess velocity u' - b(u) lies in the
range of a(u). Paths live on a uniform grid; velocities are forward
differences co-located with interval midpoints (midpoint rule). The
condition int |u'|^2 dt < inf holds automatically for a finite grid path.

A discrete path violates the range condition if ANY midpoint does, which is
stricter than the almost-everywhere condition of the continuous functional.
"""

import csv
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .configuration import LLBaseSettings
from .errors import EvaluationError, InvalidArgumentError
from .model import DiffusionModel, eval_a
from .psdlinalg import pinv_limit_classify, pseudoinverse

# +inf is the explicit "not admissible" sentinel, never an overflowed sum
ACTION_INFINITY = float("inf")


@dataclass
class Path:
    T: float
    n_steps: int
    states: np.ndarray

    def __post_init__(self):
        if not self.T > 0:
            raise InvalidArgumentError(f"T must be positive, got {self.T}", module="action")
        if int(self.n_steps) < 1:
            raise InvalidArgumentError(f"n_steps must be >= 1, got {self.n_steps}", module="action")
        self.T = float(self.T)
        self.n_steps = int(self.n_steps)
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2 or states.shape[0] != self.n_steps + 1:
            raise InvalidArgumentError(
                f"expected {self.n_steps + 1} states, got array of shape {states.shape}", module="action")
        self.states = states

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass
class ActionResult:
    value: float
    constraint_residual: float
    start_mismatch: float
    admissible: bool
    per_node_integrand: List[float] = field(default_factory=list)
    divergent_nodes: List[int] = field(default_factory=list)

    def AsDict(self) -> dict:
        return {
            'value': self.value,
            'constraint_residual': self.constraint_residual,
            'start_mismatch': self.start_mismatch,
            'admissible': self.admissible,
            'divergent_nodes': list(self.divergent_nodes),
            'per_node_integrand': list(self.per_node_integrand),
        }


def straight_line_path(start, end, T: float, n_steps: int) -> Path:
    start = np.atleast_1d(np.asarray(start, dtype=float))
    end = np.atleast_1d(np.asarray(end, dtype=float))
    s = np.linspace(0.0, 1.0, int(n_steps) + 1)[:, None]
    states = (1.0 - s) * start + s * end
    states[0] = start
    states[-1] = end
    return Path(T=T, n_steps=n_steps, states=states)


def flow_path(model: DiffusionModel, T: float, n_steps: int, x_start=None) -> Path:
    """RK4 solution of u' = b(u) sampled on the grid (a zero-action reference path)"""
    x = model.x0.copy() if x_start is None else model.point(x_start).copy()
    dt = T / n_steps
    states = np.empty((n_steps + 1, model.dim))
    states[0] = x
    for k in range(n_steps):
        k1 = model.b(x)
        k2 = model.b(x + 0.5 * dt * k1)
        k3 = model.b(x + 0.5 * dt * k2)
        k4 = model.b(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[k + 1] = x
    return Path(T=T, n_steps=n_steps, states=states)


def resample_path(path: Path, n_steps: int) -> Path:
    """Linear interpolation onto a uniform grid with n_steps intervals over the same T"""
    if n_steps == path.n_steps:
        return path
    t_new = np.arange(n_steps + 1) * (path.T / n_steps)
    t_new[-1] = path.T
    states = np.column_stack([np.interp(t_new, path.times, path.states[:, i]) for i in range(path.dim)])
    return Path(T=path.T, n_steps=n_steps, states=states)


def write_path_csv(path: Path, filepath: str):
    """Header t,x1,...,xd then one row per grid node"""
    with open(filepath, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['t'] + [f"x{i + 1}" for i in range(path.dim)])
        for t, x in zip(path.times, path.states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in x])
    return filepath


def read_path_csv(filepath: str) -> Path:
    with open(filepath, newline='') as f:
        rows = list(csv.reader(f))
    if len(rows) < 3:
        raise InvalidArgumentError(f"path file '{filepath}' needs a header and at least two rows", module="action")
    header = rows[0]
    if not header or header[0] != 't' or header[1:] != [f"x{i + 1}" for i in range(len(header) - 1)]:
        raise InvalidArgumentError(f"path file '{filepath}' has header {header}, expected t,x1,...,xd",
                                   module="action")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    t = data[:, 0]
    T = float(t[-1] - t[0])
    n_steps = len(t) - 1
    if t[0] != 0.0 or np.max(np.abs(np.diff(t) - T / n_steps)) > 1e-9 * max(T, 1.0):
        raise InvalidArgumentError(f"path file '{filepath}' is not on a uniform grid starting at t=0",
                                   module="action")
    return Path(T=T, n_steps=n_steps, states=data[:, 1:])


def _check_dims(model: DiffusionModel, path: Path):
    if path.dim != model.dim:
        raise InvalidArgumentError(f"path dimension {path.dim} does not match model dimension {model.dim}",
                                   module="action")


def finite_difference_velocity(path: Path) -> np.ndarray:
    """v_k = (states[k+1] - states[k]) / dt, shape (n_steps, dim)"""
    return np.diff(path.states, axis=0) / path.dt


def midpoints(path: Path) -> np.ndarray:
    return 0.5 * (path.states[:-1] + path.states[1:])


def _node_eval(model: DiffusionModel, m: np.ndarray, k: int):
    try:
        return model.b(m), eval_a(model, m)
    except EvaluationError as e:
        raise EvaluationError(f"model evaluation failed: {e}", node=k, module="action") from e


def rate_functional(model: DiffusionModel, path: Path, rcond: float = LLBaseSettings.RCOND,
                    residual_tol: float = LLBaseSettings.RESIDUAL_TOL,
                    settings: LLBaseSettings = LLBaseSettings) -> ActionResult:
    """
    Midpoint-rule J_T with the pseudoinverse weight and the Gamma_T checks

    Only excess velocities below RESIDUAL_SKIP are dropped. Where a(u) = 0 and
    RESIDUAL_SKIP <= |u' - b| <= residual_tol the node is divergent and the value
    is +inf, while rate_functional_scalar treats the same node as 0/0 = 0.
    Flow paths of sigma = 0 models built with a coarse RK4 grid land in this band.

    Args:
        model: Diffusion model
        path: Grid path
        rcond: Rank cutoff for a+(u)
        residual_tol: Tolerance for the start mismatch and the relative range residual

    Returns:
        ActionResult; value is ACTION_INFINITY whenever the path is not admissible
    """
    _check_dims(model, path)
    v = finite_difference_velocity(path)
    m = midpoints(path)
    start_mismatch = float(np.linalg.norm(path.states[0] - model.x0))
    integrand = []
    divergent = []
    constraint = 0.0
    for k in range(path.n_steps):
        b, a = _node_eval(model, m[k], k)
        e = v[k] - b
        ne = float(np.linalg.norm(e))
        if ne < settings.RESIDUAL_SKIP:
            integrand.append(0.0)
            continue
        cls = pinv_limit_classify(a, e, rcond=rcond, rel_tol=settings.RANGE_REL_TOL,
                                  result=pseudoinverse(a, rcond))
        constraint = max(constraint, cls.range_residual / ne)
        if cls.is_finite:
            integrand.append(0.5 * cls.value)
        else:
            integrand.append(ACTION_INFINITY)
            divergent.append(k)

    admissible = start_mismatch <= residual_tol and not divergent and constraint <= residual_tol
    value = ACTION_INFINITY
    if admissible:
        total = 0.0
        for q in integrand:
            total += q
        value = path.dt * total
    return ActionResult(value=value, constraint_residual=constraint, start_mismatch=start_mismatch,
                        admissible=admissible, per_node_integrand=integrand, divergent_nodes=divergent)


def rate_functional_scalar(model: DiffusionModel, path: Path,
                           residual_tol: float = LLBaseSettings.RESIDUAL_TOL) -> float:
    """
    Scalar form 1/2 int (u' - b(u))^2 / sigma^2(u) dt with 0/0 = 0

    A node with sigma^2 = 0 contributes 0 when (u'-b)^2 <= residual_tol^2
    and makes the whole value +inf otherwise.
    This tolerance is looser than the one rate_functional applies at such
    nodes, so the two can disagree (0 here, +inf there).
    """
    if model.dim != 1:
        raise InvalidArgumentError(f"scalar formula needs dim=1, got {model.dim}", module="action")
    _check_dims(model, path)
    if abs(path.states[0, 0] - model.x0[0]) > residual_tol:
        return ACTION_INFINITY
    v = finite_difference_velocity(path)[:, 0]
    m = midpoints(path)
    total = 0.0
    for k in range(path.n_steps):
        b, a = _node_eval(model, m[k], k)
        e2 = (v[k] - b[0]) ** 2
        s2 = a[0, 0]
        if s2 == 0.0:
            if e2 <= residual_tol ** 2:
                continue
            return ACTION_INFINITY
        total += 0.5 * e2 / s2
    return path.dt * total


def batch_a(model: DiffusionModel, X: np.ndarray) -> np.ndarray:
    """a = sigma sigma^T at every row of X, shape (n, dim, dim)"""
    S = model.S(X)
    a = S @ np.swapaxes(S, 1, 2)
    return 0.5 * (a + np.swapaxes(a, 1, 2))


def regularized_terms(model: DiffusionModel, states: np.ndarray, dt: float, beta: float):
    """
    Per-interval pieces of the regularized functional

    Returns:
        tuple: (q, e, Me, m) with q_k = <e_k, (a(m_k)+beta I)^-1 e_k>,
        e_k the excess velocity, Me_k = (a+beta I)^-1 e_k and m_k the midpoints
    """
    m = 0.5 * (states[:-1] + states[1:])
    v = np.diff(states, axis=0) / dt
    try:
        e = v - model.B(m)
        a = batch_a(model, m)
    except EvaluationError as err:
        raise EvaluationError(f"model evaluation failed: {err}", module="action") from err
    w, V = np.linalg.eigh(a)
    y = np.einsum('kji,kj->ki', V, e)
    inv = 1.0 / (np.maximum(w, 0.0) + beta)
    q = np.sum(y * y * inv, axis=1)
    Me = np.einsum('kij,kj->ki', V, y * inv)
    return q, e, Me, m


def rate_functional_regularized(model: DiffusionModel, path: Path, beta: float) -> float:
    """Midpoint-rule functional with weight (a(u)+beta I)^-1; always finite"""
    if not beta > 0:
        raise InvalidArgumentError(f"beta must be positive, got {beta}", module="action")
    _check_dims(model, path)
    q, _, _, _ = regularized_terms(model, path.states, path.dt, beta)
    return float(0.5 * path.dt * np.sum(q))
