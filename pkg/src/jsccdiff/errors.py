from .config import ConfigError


class MissingArtifactError(FileNotFoundError):
    """A checkpoint or input file required by a run does not exist."""


class NumericalError(RuntimeError):
    """Training or sampling produced NaN/inf values."""


__all__ = ["ConfigError", "MissingArtifactError", "NumericalError"]
