"""``MTRB`` bitstream container.

Layout (little-endian)::

    magic      4  b"MTRB"
    version    1
    width      2
    height     2
    gop_size   1
    weights    8  FNV-1a 64 of the weights file
    len_z      4
    len_m      4
    len_skel   4
    payloads   len_z + len_m + len_skel bytes, in that order
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import ContractError, DecodeError

MAGIC = b"MTRB"
VERSION = 1
_HEADER = struct.Struct("<4sBHHBQIII")
HEADER_SIZE = _HEADER.size  # 30

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Container:
    width: int
    height: int
    gop_size: int
    weights_hash: int
    z_payload: bytes = b""
    m_payload: bytes = b""
    skeleton_payload: bytes = b""
    version: int = VERSION

    def pack(self) -> bytes:
        return pack_container(self)

    @property
    def total_bits(self) -> int:
        return 8 * (HEADER_SIZE + len(self.z_payload) + len(self.m_payload) + len(self.skeleton_payload))

    @property
    def memory_bits(self) -> int:
        """Bits of the two memory sub-streams (hyperprior + quantized memory)."""
        return 8 * (len(self.z_payload) + len(self.m_payload))


def pack_container(c: Container) -> bytes:
    payloads = (c.z_payload, c.m_payload, c.skeleton_payload)
    for p in payloads:
        if len(p) >= 1 << 32:
            raise ContractError("payload too large for a 32-bit length field")
    if not (0 <= c.width < 1 << 16 and 0 <= c.height < 1 << 16 and 0 <= c.gop_size < 256):
        raise ContractError(f"header field out of range: {c.width}x{c.height}, gop {c.gop_size}")
    header = _HEADER.pack(
        MAGIC, c.version, c.width, c.height, c.gop_size, c.weights_hash, *(len(p) for p in payloads)
    )
    return header + b"".join(payloads)


def unpack_container(data: bytes) -> Container:
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise DecodeError("header: bad magic, not an MTRB stream")
    if len(data) < HEADER_SIZE:
        raise DecodeError(f"header: truncated ({len(data)} of {HEADER_SIZE} bytes)")
    _, version, width, height, gop, whash, lz, lm, ls = _HEADER.unpack_from(data)
    if version != VERSION:
        raise DecodeError(f"header: unsupported version {version}")
    pos = HEADER_SIZE
    parts = []
    for name, n in (("hyperprior payload", lz), ("memory payload", lm), ("skeleton payload", ls)):
        if pos + n > len(data):
            raise DecodeError(f"{name}: truncated ({len(data) - pos} of {n} bytes)")
        parts.append(data[pos:pos + n])
        pos += n
    if pos != len(data):
        raise DecodeError(f"trailing data: {len(data) - pos} bytes after the skeleton payload")
    return Container(width, height, gop, whash, *parts, version=version)
