"""Digests, node identities and the canonical field encoding.

Every hash in the library goes through :func:`hash_bytes`. Structures are
serialized with :func:`encode_fields`, a length-prefixed concatenation of the
fields in declaration order, so digests are bit-exact across implementations.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NewType

DIGEST_SIZE = 32

NodeId = NewType("NodeId", int)


@dataclass(frozen=True, order=True)
class HashDigest:
    """Fixed-length opaque digest (32 bytes)."""

    value: bytes

    def __post_init__(self):
        if len(self.value) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(self.value)}")

    def hex(self) -> str:
        return self.value.hex()

    def as_int(self) -> int:
        return int.from_bytes(self.value, "big")

    @classmethod
    def from_hex(cls, text: str) -> "HashDigest":
        return cls(bytes.fromhex(text))

    def __repr__(self) -> str:
        return f"HashDigest({self.value.hex()[:12]}…)"


ZERO_DIGEST = HashDigest(bytes(DIGEST_SIZE))


def _encode_one(field) -> bytes:
    if field is None:
        return b""
    if isinstance(field, bool):
        return b"\x01" if field else b"\x00"
    if isinstance(field, int):
        return field.to_bytes(8, "big", signed=True)
    if isinstance(field, HashDigest):
        return field.value
    if isinstance(field, bytes):
        return field
    if isinstance(field, str):
        return field.encode("utf-8")
    if isinstance(field, (tuple, list)):
        return len(field).to_bytes(4, "big") + b"".join(
            _frame(_encode_one(item)) for item in field
        )
    encode = getattr(field, "encode_fields", None)
    if encode is not None:
        return encode()
    raise TypeError(f"cannot canonically encode {type(field).__name__}")


def _frame(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


def encode_fields(*fields) -> bytes:
    """Length-prefixed concatenation of ``fields`` in order."""
    return b"".join(_frame(_encode_one(field)) for field in fields)


def hash_bytes(data: bytes) -> HashDigest:
    """The ideal hash H, approximated with SHA3-256."""
    return HashDigest(hashlib.sha3_256(data).digest())


def hash_fields(*fields) -> HashDigest:
    return hash_bytes(encode_fields(*fields))
