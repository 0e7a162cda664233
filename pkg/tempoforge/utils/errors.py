"""
Exception hierarchy shared by the library and the command-line surface.
"""
from typing import Optional


class TempoForgeError(Exception):
    """Base class for all TempoForge errors."""

    category: str = "error"
    exit_code: int = 1


class ConfigurationError(TempoForgeError):
    """Raised for invalid run configurations or settings."""

    category = "config"
    exit_code = 2


class DatasetError(TempoForgeError):
    """Raised when IDX files are malformed or inconsistent."""

    category = "data"
    exit_code = 3


class ModelFileError(TempoForgeError):
    """Raised when a binary container cannot be parsed."""

    category = "model-file"
    exit_code = 4

    def __init__(self, message: str, section: Optional[str] = None):
        self.section = section
        if section:
            message = f"[{section}] {message}"
        super().__init__(message)


class NetworkShapeError(TempoForgeError):
    """Raised when arrays do not match the declared layer sizes."""

    category = "shape"
    exit_code = 5


class TrainingDivergedError(TempoForgeError):
    """Raised when the training loss becomes non-finite."""

    category = "diverged"
    exit_code = 6

    def __init__(self, message: str, batch_index: int, max_abs_gradient: float):
        self.batch_index = batch_index
        self.max_abs_gradient = max_abs_gradient
        super().__init__(
            f"{message} (batch {batch_index}, max |gradient| = {max_abs_gradient:.6g})"
        )
