import os

from .errors import ConfigError
from . import log_utils


class LLBaseSettings(object):

    SCHEME_TAMED = "tamed"
    SCHEME_PLAIN = "plain"

    TITLE = "Base config"

    # psdlinalg: eigenvalues below RCOND*lambda_max count as zero
    RCOND = 1e-10
    # range check ||A A+ x - x|| <= RANGE_REL_TOL*||x|| declares a finite limit
    RANGE_REL_TOL = 1e-7
    SYMMETRY_TOL = 1e-10

    # action
    RESIDUAL_TOL = 1e-6
    RESIDUAL_SKIP = 1e-12

    # minact
    BETA_FLOOR = 1e-6
    ARMIJO_C = 1e-4
    MAX_HALVINGS = 60
    MIN_REL_DECREASE = 1e-10
    MAX_ITERS = 2000
    GRAD_TOL = 1e-7
    FD_STEP = 1e-5

    # sde / estimator
    SIM_DT = 1e-3
    SIM_SCHEME = SCHEME_TAMED
    CHUNK_PATHS = 2048
    WORKERS = "auto"
    CI_ALPHA = 0.05

    # model probing
    H2_MARGIN_FLOOR = -1.0
    H2_MARGIN_FACTOR = 2.0
    LIPSCHITZ_LOCAL_FRACTION = 1e-3

    # verify
    LYAPUNOV_SLACK = 1e-10
    MARTINGALE_SE_FACTOR = 3.0

    OUT_DIR = "out"
    VERBOSE = True
    DEBUG = False

    @staticmethod
    def Keys(cfg):
        return [key for key in dir(cfg) if key.upper() == key and not key.startswith('_')]

    @staticmethod
    def Fill(cfg, obj):
        """
        Copy UPPERCASE settings from obj (a dict or any object) onto cfg

        Args:
            cfg: Settings instance to update
            obj: Overrides; unknown keys are rejected

        Returns:
            The updated cfg
        """
        if obj is None:
            return cfg
        items = obj.items() if isinstance(obj, dict) else \
            [(k, v) for k, v in vars(obj).items() if not k.startswith('__')]
        known = set(LLBaseSettings.Keys(cfg))
        log_utils.debug_log("Settings:")
        for key, val in items:
            if key not in known:
                raise ConfigError("unknown setting", module="configuration", key_path=f"settings.{key}")
            setattr(cfg, key, val)
            log_utils.debug_log(f"   {key} = {val}")
        log_utils.set_verbose(cfg.VERBOSE, cfg.DEBUG)
        return cfg

    def AsDict(self):
        return {key: getattr(self, key) for key in LLBaseSettings.Keys(self)}

    def ResolveWorkers(self, override=None) -> int:
        """
        Worker count: explicit override > LDP_LAB_WORKERS > WORKERS setting

        Returns:
            int: number of worker threads (>= 1)
        """
        value = override
        if value is None:
            value = os.environ.get("LDP_LAB_WORKERS")
        if value is None:
            value = self.WORKERS
        if value == "auto":
            return os.cpu_count() or 1
        try:
            n = int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"expected an integer or 'auto', got {value!r}",
                              module="configuration", key_path="workers")
        if n < 1:
            raise ConfigError("must be >= 1", module="configuration", key_path="workers")
        return n
