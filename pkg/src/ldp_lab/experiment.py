"""
Experiment configs and the per-subcommand drivers

A config is one JSON object. Common keys: model, seed, workers, output,
preset, settings. Every subcommand reads its own block (sim, tube, ladder,
...). Parsing is strict: unknown keys, missing required keys and wrong
types raise ConfigError naming the key path, e.g. "sim.dt".
"""

import json
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from . import action as action_mod
from . import estimator, minact, psdlinalg, sde, verify
from .configs import make_settings
from .configuration import LLBaseSettings
from .errors import ConfigError, LDPLabError
from .model import FAIL, DiffusionModel, build_model, check_hypotheses
from . import log_utils

REQUIRED = object()

COMMON_KEYS = ('model', 'seed', 'workers', 'output', 'preset', 'settings')

PATH_SOURCES = {
    'csv': {'file': ('str', REQUIRED)},
    'flow': {'T': ('float', REQUIRED), 'n_steps': ('int', REQUIRED)},
    'straight': {'T': ('float', REQUIRED), 'n_steps': ('int', REQUIRED), 'end': ('floats', REQUIRED),
                 'start': ('floats', None)},
    'constant': {'T': ('float', REQUIRED), 'n_steps': ('int', REQUIRED), 'value': ('floats', None)},
    'minimizer': {'T': ('float', REQUIRED), 'n_steps': ('int', REQUIRED), 'end': ('floats', REQUIRED),
                  'beta': ('float', 0.0)},
}

BLOCK_SCHEMAS = {
    'hypotheses': {
        'radii': ('floats', [1.0, 2.0, 4.0, 8.0, 16.0]),
        'probes': ('int', 64),
        'L': ('float', 1.0),
        'ball_radius': ('float', 2.0),
        'pair_samples': ('int', 200),
        'K': ('float', None),
        'analytic': ('strs', []),
    },
    'matrix': {
        'A': ('matrix', REQUIRED),
        'x': ('floats', REQUIRED),
        'beta': ('float', None),
        'rcond': ('float', None),
    },
    'action': {
        'path': ('path', REQUIRED),
        'scalar': ('bool', False),
    },
    'minimize': {
        'end': ('floats', REQUIRED),
        'T': ('float', REQUIRED),
        'n_steps': ('int', 400),
        'beta': ('float', 0.0),
        'max_iters': ('int', None),
        'grad_tol': ('float', None),
        'initial_path': ('path', None),
        'gradient_check': ('bool', False),
    },
    'sim': {
        'epsilon': ('float', REQUIRED),
        'T': ('float', REQUIRED),
        'dt': ('float', None),
        'scheme': ('str', None),
        'beta': ('float', None),
        'C': ('float', None),
    },
    'batch': {
        'n': ('int', 1),
        'mode': ('str', 'files'),
        'C': ('float', None),
    },
    'tube': {
        'path': ('path', REQUIRED),
        'delta': ('float', REQUIRED),
        'n': ('int', 1000),
    },
    'exit': {
        'C': ('float', REQUIRED),
        'n': ('int', 1000),
    },
    'ladder': {
        'path': ('path', REQUIRED),
        'delta': ('float', REQUIRED),
        'eps': ('floats', REQUIRED),
        'n': ('int', 1000),
    },
    'coupling': {
        'beta': ('floats', REQUIRED),
        'C': ('float', REQUIRED),
        'n': ('int', 1000),
    },
    'modulus': {
        'thetas': ('floats', REQUIRED),
        'window': ('float', REQUIRED),
        'eta': ('float', REQUIRED),
        'n': ('int', 1000),
    },
    'lyapunov': {
        'c': ('float', REQUIRED),
        'L': ('float', REQUIRED),
        'radii': ('floats', REQUIRED),
        'probes': ('int', 64),
        'C': ('floats', None),
        'T': ('float', 1.0),
    },
    'martingale': {
        'kind': ('str', REQUIRED),
        'alpha': ('floats', REQUIRED),
        'B': ('float', REQUIRED),
        'T': ('float', REQUIRED),
        'dt': ('float', 1e-3),
        'n': ('int', 10000),
    },
}


def _coerce(value, kind: str, key_path: str):
    try:
        if kind == 'float':
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == 'int':
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind == 'bool':
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind == 'str':
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind == 'strs':
            if isinstance(value, str) or not all(isinstance(v, str) for v in value):
                raise TypeError
            return list(value)
        if kind == 'floats':
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                return [float(value)]
            return [float(v) for v in value]
        if kind == 'matrix':
            m = np.asarray(value, dtype=float)
            if m.ndim != 2:
                raise TypeError
            return m
        if kind == 'path':
            if not isinstance(value, dict):
                raise TypeError
            return value
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"expected {kind}, got {value!r}", module="experiment", key_path=key_path)


def parse_block(raw, name: str, schema: dict) -> dict:
    """
    Validate one config block against its schema

    Args:
        raw: The block as read from JSON (None means absent)
        name: Key path prefix used in error messages
        schema: key -> (kind, default); REQUIRED marks mandatory keys

    Returns:
        dict: every schema key, coerced, defaults filled in
    """
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("expected an object", module="experiment", key_path=name)
    for key in raw:
        if key not in schema:
            raise ConfigError("unknown key", module="experiment", key_path=f"{name}.{key}")
    out = {}
    for key, (kind, default) in schema.items():
        if key in raw and raw[key] is not None:
            out[key] = _coerce(raw[key], kind, f"{name}.{key}")
        elif default is REQUIRED:
            raise ConfigError("missing", module="experiment", key_path=f"{name}.{key}")
        else:
            out[key] = default
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    model: DiffusionModel
    settings: LLBaseSettings
    seed: int = 0
    output: str = LLBaseSettings.OUT_DIR
    preset: Optional[str] = None
    base_dir: str = "."

    def Block(self, name: str, required: bool = True) -> Optional[dict]:
        if name not in self.raw:
            if required and any(v is REQUIRED for _, v in BLOCK_SCHEMAS[name].values()):
                raise ConfigError("missing block", module="experiment", key_path=name)
            if not required:
                return None
        return parse_block(self.raw.get(name), name, BLOCK_SCHEMAS[name])

    def Resolved(self) -> dict:
        """The full config with preset settings applied, as echoed into the manifest"""
        resolved = dict(self.raw)
        resolved['seed'] = self.seed
        resolved['output'] = self.output
        resolved['preset'] = self.preset
        resolved['settings'] = self.settings.AsDict()
        return resolved


def parse_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", module="experiment", key_path="<root>")
    for key in raw:
        if key not in COMMON_KEYS and key not in BLOCK_SCHEMAS:
            raise ConfigError("unknown key", module="experiment", key_path=key)
    if 'model' not in raw:
        raise ConfigError("missing", module="experiment", key_path="model")
    preset = raw.get('preset')
    if preset is not None and not isinstance(preset, str):
        raise ConfigError("expected a preset name", module="experiment", key_path="preset")
    overrides = raw.get('settings')
    if overrides is not None and not isinstance(overrides, dict):
        raise ConfigError("expected an object", module="experiment", key_path="settings")
    settings = make_settings(preset, overrides)
    if 'workers' in raw:
        settings.WORKERS = raw['workers']
        settings.ResolveWorkers(raw['workers'])
    seed = _coerce(raw.get('seed', 0), 'int', 'seed')
    output = raw.get('output', settings.OUT_DIR)
    if not isinstance(output, str):
        raise ConfigError("expected a directory path", module="experiment", key_path="output")
    return ExperimentConfig(raw=raw, model=build_model(raw['model']), settings=settings, seed=seed,
                            output=output, preset=preset, base_dir=base_dir)


def load_config(filepath: str) -> ExperimentConfig:
    try:
        with open(filepath) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", module="experiment", key_path=filepath)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e}", module="experiment", key_path=filepath)
    return parse_config(raw, base_dir=os.path.dirname(os.path.abspath(filepath)))


def build_path(exp: ExperimentConfig, raw, key_path: str) -> action_mod.Path:
    """Reference path from a path block ({"source": ..., ...})"""
    if not isinstance(raw, dict) or 'source' not in raw:
        raise ConfigError("expected an object with a 'source'", module="experiment", key_path=key_path)
    source = raw['source']
    schema = PATH_SOURCES.get(source)
    if schema is None:
        raise ConfigError(f"unknown source {source!r} (known: {', '.join(PATH_SOURCES)})",
                          module="experiment", key_path=f"{key_path}.source")
    p = parse_block({k: v for k, v in raw.items() if k != 'source'}, key_path, schema)
    model = exp.model
    if source == 'csv':
        filepath = p['file'] if os.path.isabs(p['file']) else os.path.join(exp.base_dir, p['file'])
        return action_mod.read_path_csv(filepath)
    if source == 'flow':
        return action_mod.flow_path(model, p['T'], p['n_steps'])
    if source == 'straight':
        start = model.x0 if p['start'] is None else p['start']
        return action_mod.straight_line_path(start, p['end'], p['T'], p['n_steps'])
    if source == 'constant':
        value = model.x0 if p['value'] is None else model.point(p['value'])
        return action_mod.Path(T=p['T'], n_steps=p['n_steps'], states=np.tile(value, (p['n_steps'] + 1, 1)))
    problem = minact.MinActionProblem(model=model, end=p['end'], T=p['T'], n_steps=p['n_steps'], beta=p['beta'],
                                      max_iters=exp.settings.MAX_ITERS, grad_tol=exp.settings.GRAD_TOL)
    return minact.minimize_action(problem, exp.settings).path


def sim_config(exp: ExperimentConfig, block: dict) -> sde.SimConfig:
    dt = exp.settings.SIM_DT if block['dt'] is None else block['dt']
    scheme = exp.settings.SIM_SCHEME if block['scheme'] is None else block['scheme']
    try:
        return sde.SimConfig(epsilon=block['epsilon'], T=block['T'], dt=dt, seed=exp.seed, scheme=scheme)
    except LDPLabError as e:
        if e.key_path:
            e.key_path = f"sim.{e.key_path}"
        raise


@dataclass
class RunResult:
    report: dict
    tables: Dict[str, list] = field(default_factory=dict)
    table_columns: Dict[str, list] = field(default_factory=dict)
    paths: Dict[str, action_mod.Path] = field(default_factory=dict)
    failed: bool = False


def run_check_hypotheses(exp: ExperimentConfig, workers: int) -> RunResult:
    b = exp.Block('hypotheses')
    report = check_hypotheses(exp.model, b['radii'], b['probes'], b['L'], b['ball_radius'], b['pair_samples'],
                              exp.seed, K=b['K'], analytic=b['analytic'], settings=exp.settings)
    return RunResult(report=report.AsDict(), failed=report.AnyFailed())


def run_pinv_limit(exp: ExperimentConfig, workers: int) -> RunResult:
    b = exp.Block('matrix')
    rcond = exp.settings.RCOND if b['rcond'] is None else b['rcond']
    result = psdlinalg.pseudoinverse(b['A'], rcond)
    cls = psdlinalg.pinv_limit_classify(b['A'], b['x'], rcond, exp.settings.RANGE_REL_TOL, result=result)
    report = cls.AsDict()
    report['pinv'] = result.pinv
    report['eigenvalues'] = result.eigenvalues
    if b['beta'] is not None:
        report['beta'] = b['beta']
        report['regularized_value'] = psdlinalg.regularized_quadratic(b['A'], b['x'], b['beta'])
    return RunResult(report=report)


def run_action(exp: ExperimentConfig, workers: int) -> RunResult:
    b = exp.Block('action')
    path = build_path(exp, b['path'], 'action.path')
    result = action_mod.rate_functional(exp.model, path, exp.settings.RCOND, exp.settings.RESIDUAL_TOL,
                                        exp.settings)
    report = result.AsDict()
    report['T'] = path.T
    report['n_steps'] = path.n_steps
    if b['scalar']:
        report['scalar_value'] = action_mod.rate_functional_scalar(exp.model, path, exp.settings.RESIDUAL_TOL)
    return RunResult(report=report)


def run_minimize(exp: ExperimentConfig, workers: int) -> RunResult:
    b = exp.Block('minimize')
    initial = None if b['initial_path'] is None else build_path(exp, b['initial_path'], 'minimize.initial_path')
    problem = minact.MinActionProblem(
        model=exp.model, end=b['end'], T=b['T'], n_steps=b['n_steps'], beta=b['beta'],
        max_iters=exp.settings.MAX_ITERS if b['max_iters'] is None else b['max_iters'],
        grad_tol=exp.settings.GRAD_TOL if b['grad_tol'] is None else b['grad_tol'],
        initial_path=initial)
    result = minact.minimize_action(problem, exp.settings)
    report = result.AsDict()
    if b['gradient_check']:
        start = initial if initial is not None else \
            action_mod.straight_line_path(problem.start, problem.end, problem.T, problem.n_steps)
        report['gradient_check_max_rel_error'] = minact.gradient_check(exp.model, start, result.beta_used)
    return RunResult(report=report, paths={'minimizer': result.path})


def run_simulate(exp: ExperimentConfig, workers: int) -> RunResult:
    block = exp.Block('sim')
    cfg = sim_config(exp, block)
    batch = exp.Block('batch')
    model = exp.model
    report = {'sim': cfg.AsDict(), 'n': batch['n']}
    paths = {}
    if batch['mode'] == 'summary':
        final, diverged = sde.terminal_states(model, cfg, batch['n'], workers, exp.settings.CHUNK_PATHS)
        ok = final[~diverged]
        report['diverged'] = int(np.count_nonzero(diverged))
        report['mean_X_T'] = ok.mean(axis=0) if len(ok) else None
        report['std_X_T'] = ok.std(axis=0, ddof=1) if len(ok) > 1 else None
        if batch['C'] is not None:
            report['exit'] = estimator.exit_probability(model, batch['C'], cfg, batch['n'], workers, exp.settings)
        return RunResult(report=report)
    if batch['mode'] != 'files':
        raise ConfigError(f"unknown mode {batch['mode']!r} (known: files, summary)",
                          module="experiment", key_path="batch.mode")
    width = max(4, len(str(batch['n'] - 1)))
    runs = []
    for i in range(batch['n']):
        suffix = "" if batch['n'] == 1 else f"_{i:0{width}d}"
        if block['beta'] is not None:
            coupled = sde.simulate_perturbed(model, cfg, block['beta'], block['C'], path_index=i)
            paths['path' + suffix] = coupled.base
            paths['perturbed' + suffix] = coupled.perturbed
            runs.append({'path_index': i, 'sup_deviation': coupled.sup_deviation})
        else:
            path = sde.simulate(model, cfg, path_index=i)
            paths['path' + suffix] = path
            entry = {'path_index': i, 'X_T': path.states[-1]}
            if block['C'] is not None:
                entry['exit_time'] = sde.first_exit_time(path, block['C'])
            runs.append(entry)
    report['paths'] = runs
    return RunResult(report=report, paths=paths)


def run_tube_prob(exp: ExperimentConfig, workers: int) -> RunResult:
    cfg = sim_config(exp, exp.Block('sim'))
    b = exp.Block('tube')
    u = build_path(exp, b['path'], 'tube.path')
    est = estimator.tube_probability(exp.model, u, b['delta'], cfg, b['n'], workers, exp.settings)
    return RunResult(report={'sim': cfg.AsDict(), 'estimate': est.AsDict()})


def run_exit_prob(exp: ExperimentConfig, workers: int) -> RunResult:
    cfg = sim_config(exp, exp.Block('sim'))
    b = exp.Block('exit')
    est = estimator.exit_probability(exp.model, b['C'], cfg, b['n'], workers, exp.settings)
    return RunResult(report={'sim': cfg.AsDict(), 'estimate': est.AsDict()})


def run_ladder(exp: ExperimentConfig, workers: int) -> RunResult:
    cfg = sim_config(exp, exp.Block('sim'))
    b = exp.Block('ladder')
    u = build_path(exp, b['path'], 'ladder.path')
    rows = estimator.ldp_ladder(exp.model, u, b['delta'], b['eps'], cfg, b['n'], workers, exp.settings)
    report = {
        'sim': cfg.AsDict(),
        'delta': b['delta'],
        'target': rows[0].target,
        'rows': [r.AsDict() for r in rows],
        'caveat': estimator.LADDER_CAVEAT,
    }
    return RunResult(report=report, tables={'ladder': rows})


COUPLING_COLUMNS = ['beta', 'delta', 'C', 'hits', 'n', 'p_hat', 'p_lo', 'p_hi', 'eps2_log_p', 'is_upper_bound',
                    'diverged']
MODULUS_COLUMNS = ['theta', 'window', 'delta', 'hits', 'n', 'p_hat', 'p_lo', 'p_hi', 'eps2_log_p',
                   'is_upper_bound', 'diverged']


def run_coupling(exp: ExperimentConfig, workers: int) -> RunResult:
    cfg = sim_config(exp, exp.Block('sim'))
    b = exp.Block('coupling')
    rows = [estimator.coupling_deviation_probability(exp.model, cfg, beta, b['C'], b['n'], workers, exp.settings)
            for beta in b['beta']]
    for est in rows:
        log_utils.log(f"   beta={est.extra['beta']:g}: hits={est.hits}/{est.n}")
    report = {'sim': cfg.AsDict(), 'rows': [r.AsDict() for r in rows]}
    return RunResult(report=report, tables={'coupling': rows}, table_columns={'coupling': COUPLING_COLUMNS})


def run_modulus(exp: ExperimentConfig, workers: int) -> RunResult:
    cfg = sim_config(exp, exp.Block('sim'))
    b = exp.Block('modulus')
    rows, worst = estimator.modulus_probability(exp.model, cfg, b['thetas'], b['window'], b['eta'], b['n'],
                                                workers, exp.settings)
    report = {'sim': cfg.AsDict(), 'rows': [r.AsDict() for r in rows], 'worst': rows[worst].AsDict()}
    return RunResult(report=report, tables={'modulus': rows}, table_columns={'modulus': MODULUS_COLUMNS})


def run_lyapunov_scan(exp: ExperimentConfig, workers: int) -> RunResult:
    b = exp.Block('lyapunov')
    scan = verify.lyapunov_scan(exp.model, b['c'], b['L'], b['radii'], b['probes'], exp.seed, exp.settings)
    report = scan.AsDict()
    if b['C'] is not None:
        report['tightness'] = [verify.tightness_bound(exp.model, b['c'], C, b['L'], b['T'], b['probes'], exp.seed)
                               for C in b['C']]
    return RunResult(report=report, failed=scan.verdict == FAIL)


def run_martingale_check(exp: ExperimentConfig, workers: int) -> RunResult:
    b = exp.Block('martingale')
    reports = [verify.martingale_bound_check(b['kind'], alpha, b['B'], b['T'], b['dt'], b['n'], exp.seed,
                                             workers, exp.settings)
               for alpha in b['alpha']]
    return RunResult(report={'checks': [r.AsDict() for r in reports]}, failed=not all(r.passed for r in reports))


# Subcommand mapping
COMMANDS: Dict[str, Dict] = {
    'check-hypotheses': {'driver': run_check_hypotheses, 'title': 'Probe H-1, H-2, H-3'},
    'pinv-limit': {'driver': run_pinv_limit, 'title': 'Pseudoinverse and beta->0 limit'},
    'action': {'driver': run_action, 'title': 'Action functional of a path'},
    'minimize': {'driver': run_minimize, 'title': 'Minimum action path'},
    'simulate': {'driver': run_simulate, 'title': 'Simulate sample paths'},
    'tube-prob': {'driver': run_tube_prob, 'title': 'Tube probability'},
    'exit-prob': {'driver': run_exit_prob, 'title': 'Exit probability'},
    'ladder': {'driver': run_ladder, 'title': 'eps^2 log p ladder'},
    'coupling': {'driver': run_coupling, 'title': 'Coupled perturbation deviation'},
    'modulus': {'driver': run_modulus, 'title': 'Modulus of continuity tail'},
    'lyapunov-scan': {'driver': run_lyapunov_scan, 'title': 'Lyapunov condition scan'},
    'martingale-check': {'driver': run_martingale_check, 'title': 'Exponential martingale bounds'},
}


def get_driver(subcommand: str) -> Callable[[ExperimentConfig, int], RunResult]:
    info = COMMANDS.get(subcommand)
    if not info:
        raise ConfigError(f"Unknown subcommand: {subcommand}", module="experiment")
    return info['driver']