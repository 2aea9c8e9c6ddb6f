"""Canonical byte encoding.

Every structure that gets hashed or signed serializes the same way everywhere:
multi-byte integers are big-endian with a fixed width, variable-length fields
carry a 4-byte big-endian length prefix, and parsers are strict -- they consume
exactly the bytes the layout describes and reject anything left over, so a
byte string has at most one reading.
"""

from __future__ import annotations

from .errors import EncodingError

U32_MAX = 2**32 - 1
U64_MAX = 2**64 - 1


def u8(n: int) -> bytes:
    if not 0 <= n <= 0xFF:
        raise EncodingError(f"u8 out of range: {n}")
    return n.to_bytes(1, "big")


def u32(n: int) -> bytes:
    if not 0 <= n <= U32_MAX:
        raise EncodingError(f"u32 out of range: {n}")
    return n.to_bytes(4, "big")


def u64(n: int) -> bytes:
    if not 0 <= n <= U64_MAX:
        raise EncodingError(f"u64 out of range: {n}")
    return n.to_bytes(8, "big")


def lp(data: bytes) -> bytes:
    """Length-prefix a variable-size field."""
    if len(data) > U32_MAX:
        raise EncodingError("field too long")
    return u32(len(data)) + data


class Reader:
    """Strict cursor over a byte string.

    Raises EncodingError on any read past the end; finish() raises if bytes
    remain, which is what makes the encoding bijective.
    """

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self._pos + n > len(self._data):
            raise EncodingError("truncated input")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def lp(self) -> bytes:
        return self.take(self.u32())

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def finish(self) -> None:
        if self._pos != len(self._data):
            raise EncodingError(f"{self.remaining()} trailing bytes")
