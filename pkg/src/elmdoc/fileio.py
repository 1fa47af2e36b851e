"""Low-level binary I/O shared by the model, feature and network file formats.

All formats are little-endian.  Strings are u32 length-prefixed UTF-8.
Array blocks are raw C-order scalars.  See docs/formats.md for the full
byte layouts.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np


class FileFormatError(ValueError):
    """Base class for malformed binary files."""


class BadMagicError(FileFormatError):
    """The file does not start with the expected magic bytes."""


class UnsupportedVersionError(FileFormatError):
    """The file declares a format version this build cannot read."""


class TruncatedFileError(FileFormatError):
    """The file ended before a declared field or block was complete."""


def read_exact(f: BinaryIO, size: int, what: str) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise TruncatedFileError(
            f"truncated file: expected {size} bytes for {what}, got {len(data)}"
        )
    return data


def expect_magic(f: BinaryIO, magic: bytes) -> None:
    got = f.read(len(magic))
    if got != magic:
        raise BadMagicError(f"bad magic: expected {magic!r}, got {got!r}")


def expect_version(f: BinaryIO, supported: int, what: str) -> int:
    version = read_u32(f, "version")
    if version != supported:
        raise UnsupportedVersionError(
            f"unsupported {what} version {version} (this build reads {supported})"
        )
    return version


def read_u8(f: BinaryIO, what: str = "u8") -> int:
    return read_exact(f, 1, what)[0]


def read_u32(f: BinaryIO, what: str = "u32") -> int:
    return struct.unpack("<I", read_exact(f, 4, what))[0]


def read_u64(f: BinaryIO, what: str = "u64") -> int:
    return struct.unpack("<Q", read_exact(f, 8, what))[0]


def read_f32(f: BinaryIO, what: str = "f32") -> float:
    return struct.unpack("<f", read_exact(f, 4, what))[0]


def read_f64(f: BinaryIO, what: str = "f64") -> float:
    return struct.unpack("<d", read_exact(f, 8, what))[0]


def read_string(f: BinaryIO, what: str = "string") -> str:
    length = read_u32(f, f"{what} length")
    return read_exact(f, length, what).decode("utf-8")


def read_array(f: BinaryIO, dtype, shape: tuple[int, ...], what: str) -> np.ndarray:
    dt = np.dtype(dtype).newbyteorder("<")
    count = int(np.prod(shape)) if shape else 1
    raw = read_exact(f, count * dt.itemsize, what)
    return np.frombuffer(raw, dtype=dt).reshape(shape).astype(np.dtype(dtype), copy=True)


def write_u8(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<B", value))


def write_u32(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<I", value))


def write_u64(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<Q", value))


def write_f32(f: BinaryIO, value: float) -> None:
    f.write(struct.pack("<f", value))


def write_f64(f: BinaryIO, value: float) -> None:
    f.write(struct.pack("<d", value))


def write_string(f: BinaryIO, value: str) -> None:
    data = value.encode("utf-8")
    write_u32(f, len(data))
    f.write(data)


def write_array(f: BinaryIO, array: np.ndarray, dtype) -> None:
    dt = np.dtype(dtype).newbyteorder("<")
    f.write(np.ascontiguousarray(array, dtype=dt).tobytes())
