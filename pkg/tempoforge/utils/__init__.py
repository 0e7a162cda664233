"""
Utils package for shared numeric helpers, the binary container and errors.
"""
from .errors import (
    TempoForgeError,
    ConfigurationError,
    DatasetError,
    ModelFileError,
    NetworkShapeError,
    TrainingDivergedError,
)
from .binary_io import (
    Container,
    encode_container,
    decode_container,
    read_container,
    write_container,
)

__all__ = [
    "TempoForgeError",
    "ConfigurationError",
    "DatasetError",
    "ModelFileError",
    "NetworkShapeError",
    "TrainingDivergedError",
    "Container",
    "encode_container",
    "decode_container",
    "read_container",
    "write_container",
]
