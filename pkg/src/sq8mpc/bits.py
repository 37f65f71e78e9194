"""Bignum <-> bit-list helpers.

Shifting an n-bit Python int n times is quadratic; these round-trip
through numpy's packbits/unpackbits instead, which is linear and fast.
"""

from __future__ import annotations

import numpy as np


def unpack_bits(x: int, n: int) -> list[int]:
    """Low n bits of x as a little-endian 0/1 list."""
    if n == 0:
        return []
    buf = x.to_bytes((n + 7) // 8, "little")
    return np.unpackbits(
        np.frombuffer(buf, dtype=np.uint8), bitorder="little"
    )[:n].tolist()


def pack_bits(bits: list[int]) -> int:
    """Inverse of unpack_bits."""
    if not bits:
        return 0
    arr = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little")
    return int.from_bytes(arr.tobytes(), "little")


def chunk_mask(x: int, chunk: int, count: int) -> list[int]:
    """Split the low chunk*count bits of x into count ints of chunk bits."""
    if count == 0:
        return []
    total = chunk * count
    buf = x.to_bytes((total + 7) // 8, "little")
    bits = np.unpackbits(
        np.frombuffer(buf, dtype=np.uint8), bitorder="little"
    )[:total].reshape(count, chunk)
    packed = np.packbits(bits, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]
