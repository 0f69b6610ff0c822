"""
Diffusion models dX = b(X)dt + eps*sigma(X)dB and numerical probes of the
hypotheses under which their small-noise LDP holds:

  H-1  b and sigma locally Lipschitz
  H-2  <x,b(x)>/|x| -> -inf as |x| -> inf   (inward drift)
  H-3  <x,a(x)x> / (|x| |<x,b(x)>|) <= K for |x| > L   (balance)

Limits and suprema over R^d cannot be certified by a finite scan, so
evidence in favour of a hypothesis is reported as "inconclusive-pass"
unless the caller asserts the property analytically.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from .configuration import LLBaseSettings
from .errors import ConfigError, EvaluationError, InvalidArgumentError

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"
INCONCLUSIVE_PASS = "inconclusive-pass"

H1 = "H-1"
H2 = "H-2"
H3 = "H-3"


@dataclass
class DiffusionModel:
    dim: int
    x0: np.ndarray
    drift: Callable
    diffusion: Callable
    label: str = "custom"
    # Optional vectorized evaluators: (n, dim) -> (n, dim) and (n, dim, dim)
    drift_batch: Optional[Callable] = None
    diffusion_batch: Optional[Callable] = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidArgumentError(f"dim must be positive, got {self.dim}", module="model")
        self.dim = int(self.dim)
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float)).copy()
        if self.x0.shape != (self.dim,):
            raise InvalidArgumentError(f"x0 has shape {self.x0.shape}, expected ({self.dim},)", module="model")

    def point(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise InvalidArgumentError(f"expected a vector of length {self.dim}, got shape {x.shape}",
                                       module="model")
        return x

    def b(self, x) -> np.ndarray:
        x = self.point(x)
        try:
            out = np.asarray(self.drift(x), dtype=float).reshape(self.dim)
        except Exception as e:
            raise EvaluationError(f"drift evaluation failed: {e}", x=x, module="model") from e
        return out

    def sigma(self, x) -> np.ndarray:
        x = self.point(x)
        try:
            out = np.asarray(self.diffusion(x), dtype=float).reshape(self.dim, self.dim)
        except Exception as e:
            raise EvaluationError(f"diffusion evaluation failed: {e}", x=x, module="model") from e
        return out

    def B(self, X: np.ndarray) -> np.ndarray:
        """Drift at each row of X, shape (n, dim)"""
        if self.drift_batch is not None:
            return np.asarray(self.drift_batch(X), dtype=float).reshape(X.shape)
        return np.array([self.b(x) for x in X]).reshape(X.shape)

    def S(self, X: np.ndarray) -> np.ndarray:
        """Diffusion matrix at each row of X, shape (n, dim, dim)"""
        if self.diffusion_batch is not None:
            out = np.asarray(self.diffusion_batch(X), dtype=float)
            return np.broadcast_to(out, (X.shape[0], self.dim, self.dim))
        return np.array([self.sigma(x) for x in X]).reshape(X.shape[0], self.dim, self.dim)


@dataclass
class HypothesisReport:
    radii: List[float]
    inward_values: List[float] = field(default_factory=list)
    balance_values: List[float] = field(default_factory=list)
    lipschitz_estimate: Optional[float] = None
    verdicts: Dict[str, str] = field(default_factory=dict)
    K_estimate: Optional[float] = None
    L_used: Optional[float] = None
    offending: Dict[str, list] = field(default_factory=dict)

    def AnyFailed(self) -> bool:
        return any(v == FAIL for v in self.verdicts.values())

    def AsDict(self) -> dict:
        return {
            'radii': list(self.radii),
            'inward_values': list(self.inward_values),
            'balance_values': list(self.balance_values),
            'lipschitz_estimate': self.lipschitz_estimate,
            'verdicts': dict(self.verdicts),
            'K_estimate': self.K_estimate,
            'L_used': self.L_used,
            'offending': dict(self.offending),
        }


def eval_a(model: DiffusionModel, x) -> np.ndarray:
    """a(x) = sigma(x) sigma(x)^T"""
    s = model.sigma(x)
    a = s @ s.T
    return 0.5 * (a + a.T)


def radial_drift(model: DiffusionModel, x) -> float:
    x = model.point(x)
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return 0.0
    return float(x @ model.b(x)) / nx


def balance_ratio(model: DiffusionModel, x) -> float:
    """<x,a(x)x> / (|x| |<x,b(x)>|) with 0/0 = 0"""
    x = model.point(x)
    num = float(x @ eval_a(model, x) @ x)
    den = float(np.linalg.norm(x)) * abs(float(x @ model.b(x)))
    if den == 0.0:
        return 0.0 if num <= 0.0 else np.inf
    return num / den


def _check_radii(radii: Sequence[float]) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0:
        raise InvalidArgumentError("radii must be a non-empty list", module="model")
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise InvalidArgumentError("radii must be positive and strictly increasing", module="model")
    return radii


def shell_probes(dim: int, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """count points uniform on the sphere of the given radius (normalized Gaussians)"""
    if count < 1:
        raise InvalidArgumentError("probes_per_shell must be >= 1", module="model")
    g = rng.standard_normal((count, dim))
    norms = np.linalg.norm(g, axis=1)
    g[norms == 0.0] = np.eye(dim)[0]
    norms[norms == 0.0] = 1.0
    return radius * g / norms[:, None]


def check_inward_drift(model: DiffusionModel, radii: Sequence[float], probes_per_shell: int, seed: int,
                       analytic: bool = False, settings: LLBaseSettings = LLBaseSettings) -> HypothesisReport:
    """
    Scan psi(R) = max over probes on |x|=R of <x,b(x)>/|x|

    Args:
        model: Model under test
        radii: Strictly increasing shell radii
        probes_per_shell: Probe directions per shell
        seed: Seed for the probe directions
        analytic: Caller asserts H-2 holds; upgrades evidence to "pass"

    Returns:
        HypothesisReport fragment with inward_values and the H-2 verdict
    """
    radii = _check_radii(radii)
    rng = np.random.default_rng(seed)
    values = []
    for R in radii:
        psi = -np.inf
        for x in shell_probes(model.dim, R, probes_per_shell, rng):
            psi = max(psi, radial_drift(model, x))
        values.append(float(psi))

    report = HypothesisReport(radii=radii.tolist(), inward_values=values)
    first, last = values[0], values[-1]
    margin = min(settings.H2_MARGIN_FLOOR, settings.H2_MARGIN_FACTOR * first)
    decreasing = all(b < a for a, b in zip(values, values[1:]))
    if not np.all(np.isfinite(values)):
        verdict = INCONCLUSIVE
    elif last >= 0.0:
        verdict = FAIL
    elif decreasing and last <= margin:
        verdict = PASS if analytic else INCONCLUSIVE_PASS
    else:
        verdict = INCONCLUSIVE
    report.verdicts[H2] = verdict
    return report


def check_balance(model: DiffusionModel, radii: Sequence[float], probes_per_shell: int, L: float, seed: int,
                  K: float = None, analytic: bool = False) -> HypothesisReport:
    """
    Scan the per-shell max of <x,a(x)x> / (|x| |<x,b(x)>|); K_estimate is the
    max over shells with R > L. A declared K is checked instead of estimated.
    """
    radii = _check_radii(radii)
    if not L > 0:
        raise InvalidArgumentError(f"L must be positive, got {L}", module="model")
    rng = np.random.default_rng(seed)
    values = []
    offending = None
    for R in radii:
        worst = 0.0
        for x in shell_probes(model.dim, R, probes_per_shell, rng):
            ratio = balance_ratio(model, x)
            if np.isinf(ratio) and offending is None:
                offending = x.tolist()
            worst = max(worst, ratio)
        values.append(float(worst))

    report = HypothesisReport(radii=radii.tolist(), balance_values=values, L_used=float(L))
    outer = [v for R, v in zip(radii, values) if R > L]
    if offending is not None:
        report.offending[H3] = offending
        report.verdicts[H3] = FAIL
        report.K_estimate = float(np.inf)
        return report
    if not outer:
        report.verdicts[H3] = INCONCLUSIVE
        return report
    report.K_estimate = float(max(outer))
    bound = report.K_estimate if K is None else float(K)
    if all(v <= bound for v in outer):
        report.verdicts[H3] = PASS if analytic else INCONCLUSIVE_PASS
    else:
        report.verdicts[H3] = FAIL
    return report


def check_local_lipschitz(model: DiffusionModel, ball_radius: float, pair_samples: int, seed: int,
                          settings: LLBaseSettings = LLBaseSettings) -> float:
    """
    Max over sampled pairs in the ball of
    (|b(x)-b(y)| + |sigma(x)-sigma(y)|_F) / |x-y|

    Half of the pairs are independent uniform draws, the other half are
    close pairs (separation LIPSCHITZ_LOCAL_FRACTION * radius).
    """
    if pair_samples < 2:
        raise InvalidArgumentError("pair_samples must be >= 2", module="model")
    if not ball_radius > 0:
        raise InvalidArgumentError("ball_radius must be positive", module="model")
    rng = np.random.default_rng(seed)
    d = model.dim

    def uniform_ball(count):
        g = shell_probes(d, 1.0, count, rng)
        return ball_radius * g * rng.random(count)[:, None] ** (1.0 / d)

    n_far = pair_samples // 2
    n_near = pair_samples - n_far
    X = uniform_ball(pair_samples)
    Y = np.empty_like(X)
    Y[:n_far] = uniform_ball(n_far)
    h = settings.LIPSCHITZ_LOCAL_FRACTION * ball_radius
    Y[n_far:] = X[n_far:] + h * shell_probes(d, 1.0, n_near, rng)
    norms = np.linalg.norm(Y, axis=1)
    outside = norms > ball_radius
    Y[outside] *= (ball_radius / norms[outside])[:, None]

    sep = np.linalg.norm(X - Y, axis=1)
    keep = sep > 0.0
    X, Y, sep = X[keep], Y[keep], sep[keep]
    if sep.size == 0:
        return 0.0
    db = np.linalg.norm(model.B(X) - model.B(Y), axis=1)
    ds = np.linalg.norm((model.S(X) - model.S(Y)).reshape(len(X), -1), axis=1)
    return float(np.max((db + ds) / sep))


def check_hypotheses(model: DiffusionModel, radii: Sequence[float], probes_per_shell: int, L: float,
                     ball_radius: float, pair_samples: int, seed: int, K: float = None,
                     analytic: Sequence[str] = (), settings: LLBaseSettings = LLBaseSettings) -> HypothesisReport:
    """Run the H-1/H-2/H-3 probes and merge them into one report"""
    analytic = set(analytic)
    unknown = analytic - {H1, H2, H3}
    if unknown:
        raise InvalidArgumentError(f"unknown hypothesis names {sorted(unknown)}", module="model")
    inward = check_inward_drift(model, radii, probes_per_shell, seed, analytic=H2 in analytic, settings=settings)
    balance = check_balance(model, radii, probes_per_shell, L, seed, K=K, analytic=H3 in analytic)
    lip = check_local_lipschitz(model, ball_radius, pair_samples, seed, settings=settings)

    report = HypothesisReport(radii=inward.radii, inward_values=inward.inward_values,
                              balance_values=balance.balance_values, lipschitz_estimate=lip,
                              K_estimate=balance.K_estimate, L_used=balance.L_used,
                              offending=balance.offending)
    if np.isfinite(lip):
        report.verdicts[H1] = PASS if H1 in analytic else INCONCLUSIVE_PASS
    else:
        report.verdicts[H1] = FAIL
    report.verdicts[H2] = inward.verdicts[H2]
    report.verdicts[H3] = balance.verdicts[H3]
    return report


# === Built-in model families ===

def _matrix(value, dim: int, key_path: str) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.ndim == 0:
        m = m * np.eye(dim)
    if m.shape != (dim, dim):
        raise ConfigError(f"expected a {dim}x{dim} matrix, got shape {m.shape}", module="model", key_path=key_path)
    return m


def _scalar(value, key_path: str) -> float:
    v = np.asarray(value, dtype=float)
    if v.size != 1:
        raise ConfigError(f"expected a number, got shape {v.shape}", module="model", key_path=key_path)
    return float(v.reshape(()))


def _vector(value, dim: int, key_path: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.size == 1 and dim > 1:
        v = np.full(dim, float(v[0]))
    if v.shape != (dim,):
        raise ConfigError(f"expected a vector of length {dim}, got shape {v.shape}", module="model", key_path=key_path)
    return v


def linear_model(x0, drift_matrix, drift_offset=0.0, diffusion_matrix=None, label="linear") -> DiffusionModel:
    """b(x) = A x + c with a constant diffusion matrix S"""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    A = _matrix(drift_matrix, d, "model.coefficients.drift_matrix")
    c = _vector(drift_offset, d, "model.coefficients.drift_offset")
    S = np.eye(d) if diffusion_matrix is None else _matrix(diffusion_matrix, d, "model.coefficients.diffusion_matrix")
    return DiffusionModel(
        dim=d, x0=x0, label=label,
        drift=lambda x: A @ x + c,
        diffusion=lambda x: S,
        drift_batch=lambda X: X @ A.T + c,
        diffusion_batch=lambda X: np.broadcast_to(S, (X.shape[0], d, d)),
    )


def cubic_example_model(x0, drift_scale=1.0, noise_scale=1.0, label="cubic_example") -> DiffusionModel:
    """b(x) = -k |x|^2 x, sigma(x) = s |x|^(3/2) I; for d=1 this is dX = -X^3 dt + eps |X|^(3/2) dB"""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    k = _scalar(drift_scale, "model.coefficients.drift_scale")
    s = _scalar(noise_scale, "model.coefficients.noise_scale")
    eye = np.eye(d)

    def drift(x):
        return -k * (x @ x) * x

    def diffusion(x):
        r = np.linalg.norm(x)
        return s * r * np.sqrt(r) * eye

    def drift_batch(X):
        return -k * np.sum(X * X, axis=1)[:, None] * X

    def diffusion_batch(X):
        r = np.linalg.norm(X, axis=1)
        return (s * r * np.sqrt(r))[:, None, None] * eye

    return DiffusionModel(dim=d, x0=x0, label=label, drift=drift, diffusion=diffusion,
                          drift_batch=drift_batch, diffusion_batch=diffusion_batch)


def gradient_polynomial_model(x0, potential, diffusion_matrix=None, label="gradient_polynomial") -> DiffusionModel:
    """b = -grad U with U(x) = sum_i sum_p c_p x_i^p (c_p = potential[p]) and constant sigma"""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x0.size
    coef = np.asarray(potential, dtype=float)
    if coef.ndim != 1 or coef.size == 0:
        raise ConfigError("expected a non-empty coefficient list", module="model",
                          key_path="model.coefficients.potential")
    dcoef = npoly.polyder(coef) if coef.size > 1 else np.zeros(1)
    S = np.eye(d) if diffusion_matrix is None else _matrix(diffusion_matrix, d, "model.coefficients.diffusion_matrix")
    return DiffusionModel(
        dim=d, x0=x0, label=label,
        drift=lambda x: -npoly.polyval(x, dcoef),
        diffusion=lambda x: S,
        drift_batch=lambda X: -npoly.polyval(X, dcoef),
        diffusion_batch=lambda X: np.broadcast_to(S, (X.shape[0], d, d)),
    )


MODEL_FAMILIES = {
    'linear': {
        'builder': linear_model,
        'required': ['drift_matrix'],
        'optional': ['drift_offset', 'diffusion_matrix'],
    },
    'cubic_example': {
        'builder': cubic_example_model,
        'required': [],
        'optional': ['drift_scale', 'noise_scale'],
    },
    'gradient_polynomial': {
        'builder': gradient_polynomial_model,
        'required': ['potential'],
        'optional': ['diffusion_matrix'],
    },
}

MODEL_KEYS = ('family', 'x0', 'coefficients', 'label')


def build_model(spec: dict) -> DiffusionModel:
    """
    Build a built-in model from its JSON description

    Args:
        spec: {'family': name, 'x0': [...], 'coefficients': {...}, 'label': optional}

    Returns:
        DiffusionModel; unknown keys raise ConfigError with the key path
    """
    if not isinstance(spec, dict):
        raise ConfigError("expected an object", module="model", key_path="model")
    for key in spec:
        if key not in MODEL_KEYS:
            raise ConfigError("unknown key", module="model", key_path=f"model.{key}")
    family = spec.get('family')
    info = MODEL_FAMILIES.get(family)
    if info is None:
        raise ConfigError(f"unknown family {family!r} (known: {', '.join(MODEL_FAMILIES)})",
                          module="model", key_path="model.family")
    if 'x0' not in spec:
        raise ConfigError("missing", module="model", key_path="model.x0")
    coefficients = spec.get('coefficients', {}) or {}
    for key in coefficients:
        if key not in info['required'] and key not in info['optional']:
            raise ConfigError("unknown key", module="model", key_path=f"model.coefficients.{key}")
    for key in info['required']:
        if key not in coefficients:
            raise ConfigError("missing", module="model", key_path=f"model.coefficients.{key}")
    try:
        x0 = np.atleast_1d(np.asarray(spec['x0'], dtype=float))
    except (TypeError, ValueError):
        raise ConfigError("expected a list of numbers", module="model", key_path="model.x0")
    values = {}
    for key, value in coefficients.items():
        if value is None:
            continue
        try:
            values[key] = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError("expected a number or a nested list of numbers", module="model",
                              key_path=f"model.coefficients.{key}")
    return info['builder'](x0, label=spec.get('label', family), **values)
