"""
Exception types shared by all modules.

Every error raised on purpose by the package derives from LDPLabError so the
CLI can tell operational failures apart from bugs.
"""


class LDPLabError(Exception):
    """Base error; carries the module it came from and an optional config key path"""

    def __init__(self, message: str, module: str = None, key_path: str = None):
        super().__init__(message)
        self.module = module
        self.key_path = key_path

    def __str__(self):
        text = super().__str__()
        if self.key_path:
            text = f"{self.key_path}: {text}"
        return text


class InvalidArgumentError(LDPLabError, ValueError):
    pass


class NumericError(LDPLabError):
    pass


class InitializationError(LDPLabError):
    pass


class ConfigError(LDPLabError, ValueError):
    pass


class EvaluationError(LDPLabError):
    """A drift or diffusion evaluator failed or returned garbage at x"""

    def __init__(self, message: str, x=None, node: int = None, module: str = None):
        if node is not None:
            message = f"{message} (node {node})"
        if x is not None:
            message = f"{message} at x={list(map(float, x))}"
        super().__init__(message, module=module)
        self.x = x
        self.node = node


class DivergenceError(LDPLabError):
    """The simulated state left the floating point range"""

    def __init__(self, step: int, path_index: int = 0, module: str = "sde"):
        super().__init__(f"non-finite state at step {step} of path {path_index}", module=module)
        self.step = step
        self.path_index = path_index
