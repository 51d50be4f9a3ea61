"""Exception types shared across the package."""


class QmarlError(Exception):
    """Base class for package errors."""


class DegenerateOutcomeError(QmarlError, ValueError):
    """An observed outcome has (numerically) zero probability.

    Log-probability gradients are undefined there, so callers must skip the
    update instead of dividing by zero.
    """


class DivergenceError(QmarlError, FloatingPointError):
    """A loss, logit or gradient became non-finite during training."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class ConfigError(QmarlError, ValueError):
    """Experiment configuration failed validation.

    ``path`` is the dotted field path of the offending entry.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
