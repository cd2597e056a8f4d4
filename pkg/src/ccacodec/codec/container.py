"""The ``.cca`` bitstream container.

Layout, all integers big-endian::

    "CCA1"  version:u8  profile:u8  lambda_index:u8  reserved:u8
    height:u32  width:u32  model_checksum:u64
    z_len:u32  z_bytes
    slice_count:u8  (slice_len:u32  slice_bytes) * slice_count
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .rangecoder import CodecError

MAGIC = b"CCA1"
VERSION = 1
_HEAD = struct.Struct(">4sBBBBIIQ")


class ContainerError(CodecError):
    pass


class BadMagicError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class LengthError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


@dataclass
class Container:
    height: int
    width: int
    model_checksum: int
    z_payload: bytes
    slice_payloads: list[bytes] = field(default_factory=list)
    profile_id: int = 0
    lambda_index: int = 0
    version: int = VERSION

    @property
    def header_size(self) -> int:
        return _HEAD.size + 4 + 1 + 4 * len(self.slice_payloads)

    @property
    def payload_size(self) -> int:
        return len(self.z_payload) + sum(len(p) for p in self.slice_payloads)


def _check_range(name: str, value: int, bits: int):
    if not 0 <= value < 1 << bits:
        raise ContainerError(f"{name}={value} does not fit in u{bits}")


def serialize_container(c: Container) -> bytes:
    _check_range("version", c.version, 8)
    _check_range("profile_id", c.profile_id, 8)
    _check_range("lambda_index", c.lambda_index, 8)
    _check_range("height", c.height, 32)
    _check_range("width", c.width, 32)
    _check_range("model_checksum", c.model_checksum, 64)
    _check_range("slice count", len(c.slice_payloads), 8)
    out = [_HEAD.pack(MAGIC, c.version, c.profile_id, c.lambda_index, 0, c.height, c.width,
                      c.model_checksum)]
    for payload in (c.z_payload,):
        _check_range("z length", len(payload), 32)
        out += [struct.pack(">I", len(payload)), bytes(payload)]
    out.append(struct.pack(">B", len(c.slice_payloads)))
    for i, payload in enumerate(c.slice_payloads):
        _check_range(f"slice {i + 1} length", len(payload), 32)
        out += [struct.pack(">I", len(payload)), bytes(payload)]
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise LengthError(f"truncated container: {what} needs {n} bytes at offset "
                              f"{self.pos}, only {len(self.data) - self.pos} left")
        chunk = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack(">I", self.take(4, what))[0]


def parse_container(data: bytes, expected_checksum: int | None = None) -> Container:
    """Inverse of ``serialize_container``; checks magic, version, lengths and the model checksum."""
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"not a CCA1 container (magic {data[:4]!r})")
    r = _Reader(data)
    magic, version, profile, lam, reserved, h, w, checksum = _HEAD.unpack(
        r.take(_HEAD.size, "header"))
    if version != VERSION:
        raise UnsupportedVersionError(f"container version {version}, expected {VERSION}")
    if reserved != 0:
        raise ContainerError(f"reserved header byte is {reserved}, expected 0")
    if expected_checksum is not None and checksum != expected_checksum:
        raise ChecksumError(f"container was written for model {checksum:016x}, "
                            f"loaded model is {expected_checksum:016x}")
    z = r.take(r.u32("z length"), "z payload")
    count = r.take(1, "slice count")[0]
    slices = [r.take(r.u32(f"slice {i + 1} length"), f"slice {i + 1} payload")
              for i in range(count)]
    if r.pos != len(data):
        raise LengthError(f"{len(data) - r.pos} trailing bytes after the last slice")
    return Container(height=h, width=w, model_checksum=checksum, z_payload=z,
                     slice_payloads=slices, profile_id=profile, lambda_index=lam,
                     version=version)
