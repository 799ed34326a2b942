"""Exception types shared across the pipeline."""


class EchoDietError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(EchoDietError, ValueError):
    """Invalid configuration (chirp, filter, window, CLI flags)."""


class SceneError(EchoDietError, ValueError):
    """Simulated scene violates physical bounds."""


class CoverageError(EchoDietError, ValueError):
    """Labels do not cover the requested windows."""


class FormatError(EchoDietError, ValueError):
    """Corrupt or unsupported binary/text file."""


class TrainingError(EchoDietError, RuntimeError):
    """Training diverged (non-finite loss or gradient)."""
