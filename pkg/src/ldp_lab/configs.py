"""
Named settings presets, selectable by the "preset" key of an experiment config
"""

from .configuration import LLBaseSettings
from .errors import ConfigError


class LLConfig_Default(LLBaseSettings):
    TITLE = "Default"


class LLConfig_Quick(LLConfig_Default):
    TITLE = "Quick (smoke runs)"
    SIM_DT = 1e-2
    MAX_ITERS = 300
    CHUNK_PATHS = 1024


class LLConfig_Acceptance(LLConfig_Default):
    TITLE = "Acceptance (tight tolerances)"
    MAX_ITERS = 5000
    GRAD_TOL = 1e-9


PRESETS = {
    'default': LLConfig_Default,
    'quick': LLConfig_Quick,
    'acceptance': LLConfig_Acceptance,
}

DEFAULT_PRESET = 'default'


def make_settings(preset: str = None, overrides: dict = None) -> LLBaseSettings:
    if preset is None:
        preset = DEFAULT_PRESET
    config_class = PRESETS.get(preset)
    if config_class is None:
        raise ConfigError(f"unknown preset {preset!r} (known: {', '.join(PRESETS)})",
                          module="configs", key_path="preset")
    return LLBaseSettings.Fill(config_class(), overrides)
