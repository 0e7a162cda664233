"""
Self-describing binary container used for models, variation realizations
and cached images.

Layout::

    TEMPOFORGE
    version 1
    kind <kind>
    meta <key> <value>            (zero or more)
    section <name> <d0>x<d1>...   (one per array, in payload order)
    end
    <row-major little-endian float64 payload of every section>
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from tempoforge.utils.errors import ModelFileError

logger = logging.getLogger(__name__)

MAGIC = "TEMPOFORGE"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


@dataclass
class Container:
    """Parsed container: kind tag, text metadata and named float64 arrays."""

    kind: str
    meta: Dict[str, str] = field(default_factory=dict)
    sections: Dict[str, np.ndarray] = field(default_factory=dict)

    def section(self, name: str) -> np.ndarray:
        if name not in self.sections:
            raise ModelFileError("missing section", section=name)
        return self.sections[name]


def _format_shape(shape: Tuple[int, ...]) -> str:
    if len(shape) == 0:
        return "scalar"
    return "x".join(str(d) for d in shape)


def _parse_shape(text: str, section: str) -> Tuple[int, ...]:
    if text == "scalar":
        return ()
    try:
        dims = tuple(int(d) for d in text.split("x"))
    except ValueError:
        raise ModelFileError(f"unparseable shape {text!r}", section=section)
    if any(d < 0 for d in dims):
        raise ModelFileError(f"negative dimension in {text!r}", section=section)
    return dims


def encode_container(
    kind: str,
    sections: Mapping[str, np.ndarray],
    meta: Optional[Mapping[str, str]] = None,
) -> bytes:
    """Serialize arrays and metadata into container bytes."""
    lines = [MAGIC, f"version {FORMAT_VERSION}", f"kind {kind}"]
    for key, value in (meta or {}).items():
        if any(ch.isspace() for ch in key) or "\n" in str(value):
            raise ValueError(f"metadata entry {key!r} is not header-safe")
        lines.append(f"meta {key} {value}")

    payload = []
    for name, array in sections.items():
        arr = np.ascontiguousarray(np.asarray(array, dtype=_DTYPE))
        lines.append(f"section {name} {_format_shape(arr.shape)}")
        payload.append(arr.tobytes(order="C"))
    lines.append("end")

    header = ("\n".join(lines) + "\n").encode("ascii")
    return header + b"".join(payload)


def decode_container(data: bytes, expected_kind: Optional[str] = None) -> Container:
    """Parse container bytes, validating the header and every section size."""
    offset = 0
    header_lines = []
    while True:
        newline = data.find(b"\n", offset)
        if newline < 0:
            raise ModelFileError("header is truncated", section="header")
        line = data[offset:newline].decode("ascii", errors="replace")
        offset = newline + 1
        header_lines.append(line)
        if line == "end":
            break

    if header_lines[0] != MAGIC:
        raise ModelFileError(f"bad magic {header_lines[0]!r}", section="header")
    if len(header_lines) < 3 or header_lines[1] != f"version {FORMAT_VERSION}":
        raise ModelFileError("unsupported version line", section="header")
    if not header_lines[2].startswith("kind "):
        raise ModelFileError("missing kind line", section="header")

    container = Container(kind=header_lines[2][len("kind "):])
    if expected_kind is not None and container.kind != expected_kind:
        raise ModelFileError(
            f"expected kind {expected_kind!r}, found {container.kind!r}", section="header"
        )

    declared = []
    for line in header_lines[3:-1]:
        parts = line.split(" ", 2)
        if parts[0] == "meta" and len(parts) == 3:
            container.meta[parts[1]] = parts[2]
        elif parts[0] == "section" and len(parts) == 3:
            declared.append((parts[1], _parse_shape(parts[2], parts[1])))
        else:
            raise ModelFileError(f"unrecognized header line {line!r}", section="header")

    for name, shape in declared:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * _DTYPE.itemsize
        if offset + nbytes > len(data):
            raise ModelFileError(
                f"payload truncated: need {nbytes} bytes, have {len(data) - offset}",
                section=name,
            )
        array = np.frombuffer(data, dtype=_DTYPE, count=count, offset=offset).reshape(shape)
        container.sections[name] = array.astype(np.float64)
        offset += nbytes

    if offset != len(data):
        raise ModelFileError(
            f"{len(data) - offset} trailing bytes after last section", section="payload"
        )
    return container


def write_container(
    path: Union[str, Path],
    kind: str,
    sections: Mapping[str, np.ndarray],
    meta: Optional[Mapping[str, str]] = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_container(kind, sections, meta))
    logger.debug(f"Wrote {kind} container to {path}")


def read_container(path: Union[str, Path], expected_kind: Optional[str] = None) -> Container:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ModelFileError(f"cannot read {path}: {e}", section="file")
    return decode_container(data, expected_kind)
