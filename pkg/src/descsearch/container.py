"""Shared helpers for the binary file containers (checkpoints, indexes).

All containers start with a 4-byte magic tag and a little-endian u32
format version. Corruption is reported through distinct error types so
callers can tell a wrong file apart from a damaged one.
"""

import struct
import zlib
from typing import BinaryIO


class ContainerError(Exception):
    """Base class for malformed container files."""


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class TruncatedFileError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


def read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedFileError(
            f"truncated file: expected {n} bytes for {what}, got {len(data)}"
        )
    return data


def read_magic(f: BinaryIO, expected: bytes) -> None:
    magic = read_exact(f, len(expected), "magic tag")
    if magic != expected:
        raise BadMagicError(f"bad magic: expected {expected!r}, got {magic!r}")


def read_version(f: BinaryIO, supported: int) -> int:
    (version,) = struct.unpack("<I", read_exact(f, 4, "format version"))
    if version != supported:
        raise VersionMismatchError(
            f"version mismatch: file has {version}, supported is {supported}"
        )
    return version


def append_crc32(payload: bytes) -> bytes:
    """Payload followed by the CRC32 of all preceding bytes (u32 LE)."""
    return payload + struct.pack("<I", zlib.crc32(payload))


def split_checked_payload(data: bytes, what: str) -> bytes:
    """Strip and verify the trailing CRC32 of a whole-file payload."""
    if len(data) < 4:
        raise TruncatedFileError(f"truncated file: {what} shorter than its checksum")
    payload, stored = data[:-4], struct.unpack("<I", data[-4:])[0]
    actual = zlib.crc32(payload)
    if stored != actual:
        raise ChecksumError(
            f"checksum mismatch in {what}: stored {stored:#010x}, computed {actual:#010x}"
        )
    return payload
