"""
Executable checks of the analytic ingredients of the LDP argument

  V(x)  = c |x|^2 / (1+|x|)
  r(x)  = (2+|x|)|x| / (1+|x|)^2          (0 <= r < 1)
  grad V = c r(x) x/|x|
  DV(x) = <grad V, b> + 1/2 <grad V, a grad V>

DV is the nonlinear operator of the Lyapunov condition, not the generator:
it has no Hessian trace term. The martingale checks compare simulated
Brownian motion against the exponential tail bounds for continuous
martingales with bracket <M>_t = t.
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy import stats

from .configuration import LLBaseSettings
from .errors import InvalidArgumentError
from .model import FAIL, PASS, DiffusionModel, _check_radii, check_balance, eval_a, shell_probes
from .parallel import map_chunks
from .rng import STREAM_MARTINGALE, chunk_increments
from . import log_utils

MARTINGALE_KINDS = ("a", "b", "c", "d")


def _c(c: float) -> float:
    if not c > 0:
        raise InvalidArgumentError(f"c must be positive, got {c}", module="verify")
    return float(c)


def lyapunov_r(x) -> float:
    n = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    return (2.0 + n) * n / (1.0 + n) ** 2


def lyapunov_V(x, c: float) -> float:
    n = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    return _c(c) * n * n / (1.0 + n)


def lyapunov_grad(x, c: float) -> np.ndarray:
    """c r(x) x/|x|, and 0 at x = 0"""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = _c(c)
    n = float(np.linalg.norm(x))
    if n == 0.0:
        return np.zeros_like(x)
    return c * lyapunov_r(x) * x / n


def dv_operator(model: DiffusionModel, x, c: float) -> float:
    x = model.point(x)
    g = lyapunov_grad(x, c)
    return float(g @ model.b(x) + 0.5 * g @ eval_a(model, x) @ g)


def dv_bound(model: DiffusionModel, x, c: float) -> float:
    """-1/2 c r(x) |<x,b(x)>| / |x|, the sharper upper bound on DV outside the L-ball"""
    x = model.point(x)
    n = float(np.linalg.norm(x))
    if n == 0.0:
        return 0.0
    return -0.5 * _c(c) * lyapunov_r(x) * abs(float(x @ model.b(x))) / n


@dataclass
class LyapunovScan:
    c: float
    L: float
    radii: List[float]
    max_DV: List[float] = field(default_factory=list)
    bound_values: List[float] = field(default_factory=list)
    verdict: str = PASS
    chain_violations: int = 0
    probes_checked: int = 0
    K_estimate: float = None
    c_exceeds_inverse_K: bool = False

    def AsDict(self) -> dict:
        return {
            'c': self.c,
            'L': self.L,
            'radii': list(self.radii),
            'max_DV': list(self.max_DV),
            'bound_values': list(self.bound_values),
            'verdict': self.verdict,
            'chain_violations': self.chain_violations,
            'probes_checked': self.probes_checked,
            'K_estimate': self.K_estimate,
            'c_exceeds_inverse_K': self.c_exceeds_inverse_K,
        }


def lyapunov_scan(model: DiffusionModel, c: float, L: float, radii: Sequence[float], probes: int, seed: int,
                  settings: LLBaseSettings = LLBaseSettings) -> LyapunovScan:
    """
    Per-shell max of DV next to the bound at the worst probe

    Args:
        model: Diffusion model
        c: Lyapunov parameter, expected to satisfy c <= 1/K
        L: Radius beyond which DV <= 0 is required
        radii: Strictly increasing shell radii
        probes: Probe points per shell
        seed: Probe seed

    Returns:
        LyapunovScan; verdict "fail" if DV > 0 on any shell beyond L. The
        chain DV <= bound is counted at every probe beyond L with
        LYAPUNOV_SLACK relative slack.
    """
    c = _c(c)
    radii = _check_radii(radii)
    if not L > 0:
        raise InvalidArgumentError(f"L must be positive, got {L}", module="verify")
    scan = LyapunovScan(c=c, L=float(L), radii=radii.tolist())
    if np.any(radii > L):
        K = check_balance(model, radii, probes, L, seed).K_estimate
        scan.K_estimate = K
        if K is not None and K > 0 and c > 1.0 / K:
            scan.c_exceeds_inverse_K = True
            log_utils.warn(f"c={c:g} exceeds 1/K_estimate={1.0 / K:.4g}; DV <= 0 is not guaranteed")

    rng = np.random.default_rng(seed)
    failed = False
    for R in radii:
        points = shell_probes(model.dim, R, probes, rng)
        dv = np.array([dv_operator(model, x, c) for x in points])
        bounds = np.array([dv_bound(model, x, c) for x in points])
        worst = int(np.argmax(dv))
        scan.max_DV.append(float(dv[worst]))
        scan.bound_values.append(float(bounds[worst]))
        if R > L:
            scan.probes_checked += len(points)
            slack = settings.LYAPUNOV_SLACK * np.maximum(1.0, np.abs(bounds))
            scan.chain_violations += int(np.count_nonzero(dv > bounds + slack))
            if dv[worst] > 0.0:
                failed = True
    scan.verdict = FAIL if failed else PASS
    if scan.chain_violations:
        log_utils.warn(f"DV exceeds the sharper bound at {scan.chain_violations} probe(s)")
    return scan


@dataclass
class TightnessBound:
    value: float
    inf_V_outside: float
    V_x0: float
    sup_abs_DV: float
    C: float
    L: float
    T: float

    def AsDict(self) -> dict:
        return {
            'value': self.value,
            'inf_V_outside': self.inf_V_outside,
            'V_x0': self.V_x0,
            'sup_abs_DV': self.sup_abs_DV,
            'C': self.C,
            'L': self.L,
            'T': self.T,
        }


def tightness_bound(model: DiffusionModel, c: float, C: float, L: float, T: float, probes: int = 64,
                    seed: int = 0, n_radii: int = 64) -> TightnessBound:
    """
    -inf_{|x|>=C} V + V(x0) + T sup_{|x|<=L} |DV|, the small-noise limit of
    the bound on eps^2 log P(exit from the C-ball before T)

    V is radially increasing, so the infimum sits on |x| = C. The sup is a
    seeded scan over n_radii shells in (0, L].
    """
    c = _c(c)
    if not C > 0 or not L > 0 or not T > 0:
        raise InvalidArgumentError("C, L and T must be positive", module="verify")
    inf_V = c * C * C / (1.0 + C)
    V0 = lyapunov_V(model.x0, c)
    rng = np.random.default_rng(seed)
    sup_dv = 0.0
    for R in np.linspace(L / n_radii, L, n_radii):
        for x in shell_probes(model.dim, R, probes, rng):
            sup_dv = max(sup_dv, abs(dv_operator(model, x, c)))
    value = -inf_V + V0 + T * sup_dv
    return TightnessBound(value=value, inf_V_outside=inf_V, V_x0=V0, sup_abs_DV=sup_dv, C=float(C), L=float(L),
                          T=float(T))


def brownian_sup_tail(alpha: float, T: float, terms: int = 200) -> float:
    """
    P(sup_{t<=T} |B_t| >= alpha) for standard Brownian motion

    Uses the eigenfunction series when T/alpha^2 is large and the image
    (reflection) series otherwise; both converge fast in their range.
    """
    if not alpha > 0 or not T > 0:
        raise InvalidArgumentError("alpha and T must be positive", module="verify")
    s = T / (alpha * alpha)
    if s >= 0.5:
        k = np.arange(terms)
        odd = 2 * k + 1
        inside = 4.0 / np.pi * np.sum((-1.0) ** k / odd * np.exp(-odd * odd * np.pi ** 2 * s / 8.0))
    else:
        k = np.arange(-terms, terms + 1)
        z = 1.0 / np.sqrt(s)
        inside = np.sum((-1.0) ** np.abs(k) * (stats.norm.cdf((2 * k + 1) * z) - stats.norm.cdf((2 * k - 1) * z)))
    return float(min(1.0, max(0.0, 1.0 - inside)))


def martingale_reference(kind: str, alpha: float, B: float, T: float) -> float:
    """Exact continuous-time probability of the item's event for the Brownian test martingale"""
    kind = normalize_kind(kind)
    sq = np.sqrt(T)
    if kind == "a":
        # sup_{t<=T} (B_t - t/2) >= alpha
        return float(stats.norm.cdf((-alpha - 0.5 * T) / sq)
                     + np.exp(-alpha) * stats.norm.cdf((-alpha + 0.5 * T) / sq))
    if kind == "b":
        h = min(B, T)
        return float(2.0 * stats.norm.sf(alpha / np.sqrt(h)))
    if kind == "c" and T > B:
        return 0.0
    return brownian_sup_tail(alpha, T)


def martingale_bound(kind: str, alpha: float, B: float, T: float) -> float:
    kind = normalize_kind(kind)
    if kind == "a":
        return float(np.exp(-alpha))
    if kind == "b":
        return float(np.exp(-alpha * alpha / (2.0 * B)))
    if kind == "c":
        return float(2.0 * np.exp(-alpha * alpha / (2.0 * B)))
    return float(max(2.0 * np.exp(-alpha * alpha / (2.0 * B)), 1.0 if T > B else 0.0))


def normalize_kind(kind: str) -> str:
    k = str(kind).strip().strip("()").lower()
    if k not in MARTINGALE_KINDS:
        raise InvalidArgumentError(f"unsupported martingale item {kind!r} (known: a, b, c, d)", module="verify")
    return k


@dataclass
class MartingaleReport:
    kind: str
    alpha: float
    B: float
    T: float
    dt: float
    n: int
    hits: int
    frequency: float
    bound: float
    reference: float
    std_error: float
    passed: bool

    def AsDict(self) -> dict:
        return {
            'kind': self.kind,
            'alpha': self.alpha,
            'B': self.B,
            'T': self.T,
            'dt': self.dt,
            'n': self.n,
            'hits': self.hits,
            'frequency': self.frequency,
            'bound': self.bound,
            'reference': self.reference,
            'std_error': self.std_error,
            'pass': self.passed,
        }


def martingale_bound_check(kind: str, alpha: float, B: float, T: float, dt: float, n: int, seed: int,
                           workers: int = 1, settings: LLBaseSettings = LLBaseSettings) -> MartingaleReport:
    """
    Empirical frequency of an exponential martingale tail event against its bound

    Args:
        kind: Item a, b, c or d
        alpha: Level
        B: Bracket bound
        T: Horizon
        dt: Grid step (T/dt integer)
        n: Number of simulated Brownian paths
        seed: Seed; paths use the martingale stream

    Returns:
        MartingaleReport; passed means frequency <= bound + MARTINGALE_SE_FACTOR standard errors
    """
    kind = normalize_kind(kind)
    if not alpha > 0 or not B > 0 or not T > 0 or not dt > 0:
        raise InvalidArgumentError("alpha, B, T and dt must be positive", module="verify")
    ratio = T / dt
    if dt > T or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise InvalidArgumentError(f"T/dt = {ratio} must be a positive integer", module="verify")
    if int(n) < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}", module="verify")
    n_steps = int(round(ratio))
    t = np.arange(1, n_steps + 1) * dt
    horizon = n_steps if kind != "b" else int(np.count_nonzero(t <= min(B, T) + 1e-12 * T))
    empty = kind == "c" and T > B

    def work(first, count):
        if empty or horizon == 0:
            return 0
        W = np.cumsum(chunk_increments(seed, first, count, STREAM_MARTINGALE, n_steps, 1, dt)[:, :, 0], axis=1)
        if kind == "a":
            hit = np.max(W - 0.5 * t, axis=1) >= alpha
        elif kind == "b":
            hit = np.max(W[:, :horizon], axis=1) >= alpha
        else:
            hit = np.max(np.abs(W), axis=1) >= alpha
        return int(np.count_nonzero(hit))

    hits = sum(map_chunks(work, int(n), settings.CHUNK_PATHS, workers))
    freq = hits / n
    se = float(np.sqrt(freq * (1.0 - freq) / n))
    bound = martingale_bound(kind, alpha, B, T)
    report = MartingaleReport(kind=kind, alpha=float(alpha), B=float(B), T=float(T), dt=float(dt), n=int(n),
                              hits=int(hits), frequency=freq, bound=bound,
                              reference=martingale_reference(kind, alpha, B, T), std_error=se,
                              passed=freq <= bound + settings.MARTINGALE_SE_FACTOR * se)
    log_utils.log(f"martingale ({kind}): frequency {freq:.5g} vs bound {bound:.5g} -> "
                  f"{'pass' if report.passed else 'FAIL'}")
    return report
