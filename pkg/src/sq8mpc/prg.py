"""Deterministic pseudorandom streams keyed per adjacent party pair.

Both holders of a pairwise seed must consume each (seed, domain) stream in
the same order; protocol code guarantees this because every draw happens at
a fixed point of the protocol.  Domain separation is (seed, domain label,
call counter).
"""

from __future__ import annotations

import hashlib

import numpy as _np

from .ring import Ring


class Prg:
    """SHAKE-256 stream with an explicit call counter."""

    __slots__ = ("_seed", "_domain", "_ctr")

    def __init__(self, seed: bytes, domain: bytes):
        self._seed = seed
        self._domain = domain
        self._ctr = 0

    def draw_bytes(self, n: int) -> bytes:
        h = hashlib.shake_256()
        h.update(len(self._seed).to_bytes(2, "little"))
        h.update(self._seed)
        h.update(self._domain)
        h.update(self._ctr.to_bytes(8, "little"))
        self._ctr += 1
        return h.digest(n)

    def draw_elements(self, n: int, ring: Ring) -> list[int]:
        """n independent uniform elements of Z_{2^k}."""
        sz = ring.byte_size
        raw = self.draw_bytes(n * sz)
        if sz <= 8:
            arr = _np.frombuffer(raw, dtype=_np.uint8).reshape(n, sz)
            padded = _np.zeros((n, 8), dtype=_np.uint8)
            padded[:, :sz] = arr
            vals = padded.view("<u8").ravel()
            if ring.k < 64:
                vals = vals & _np.uint64(ring.mask)
            return vals.tolist()
        return [
            int.from_bytes(raw[i * sz : (i + 1) * sz], "little") & ring.mask
            for i in range(n)
        ]

    def draw_bitmask(self, nbits: int) -> int:
        """A uniform nbits-wide integer (bit i = one coin)."""
        raw = self.draw_bytes((nbits + 7) // 8)
        return int.from_bytes(raw, "little") & ((1 << nbits) - 1)


def derive_seed(master: bytes, label: str) -> bytes:
    """Deterministic sub-seed for test/reproducibility mode."""
    return hashlib.sha256(master + b"|" + label.encode()).digest()
