"""Wrap-around arithmetic in Z_{2^k} for configurable width k.

Every value is kept canonical (0 <= v < 2^k).  "Negative" quantities exist
only as two's-complement residues; whoever truncates or compares is
responsible for keeping enough headroom (see the trunc module).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as _np

from .errors import ConfigError, WidthMismatchError

#: Sessions (and thus every protocol) keep k in [8, 128]; bare ring values
#: admit tiny widths so bit-level helpers stay testable.
MIN_WIDTH = 2
MIN_SESSION_WIDTH = 8
MAX_WIDTH = 128

#: Width used by the inference engine unless a session overrides it.
DEFAULT_WIDTH = 72


def _check_width(k: int) -> None:
    if not MIN_WIDTH <= k <= MAX_WIDTH:
        raise ConfigError(f"ring width {k} outside [{MIN_WIDTH}, {MAX_WIDTH}]")


def check_session_width(k: int) -> int:
    if not MIN_SESSION_WIDTH <= k <= MAX_WIDTH:
        raise ConfigError(
            f"session ring width {k} outside [{MIN_SESSION_WIDTH}, {MAX_WIDTH}]"
        )
    return k


class Ring:
    """Mod-2^k arithmetic context; all protocol code routes through one of these."""

    __slots__ = ("k", "mask", "byte_size")

    def __init__(self, k: int):
        _check_width(k)
        self.k = k
        self.mask = (1 << k) - 1
        # Wire size of one element; masking the top bits of uniform bytes
        # keeps draws uniform.
        self.byte_size = (k + 7) // 8

    def norm(self, v: int) -> int:
        return v & self.mask

    def add(self, a: int, b: int) -> int:
        return (a + b) & self.mask

    def sub(self, a: int, b: int) -> int:
        return (a - b) & self.mask

    def neg(self, a: int) -> int:
        return (-a) & self.mask

    def mul(self, a: int, b: int) -> int:
        # Python ints give the full double-width intermediate for free.
        return (a * b) & self.mask

    def pow2(self, e: int) -> int:
        return (1 << e) & self.mask

    def signed(self, v: int) -> int:
        """Interpret a residue as a two's-complement signed value."""
        return v - (1 << self.k) if v >> (self.k - 1) else v

    def element(self, v: int) -> "RingElement":
        return RingElement(v & self.mask, self.k)

    # --- wire encoding: little-endian, byte_size bytes per element ---

    def encode(self, values: list[int]) -> bytes:
        sz = self.byte_size
        if sz <= 8:
            arr = _np.asarray(values, dtype=_np.uint64).astype("<u8")
            return _np.ascontiguousarray(
                arr.view(_np.uint8).reshape(-1, 8)[:, :sz]
            ).tobytes()
        return b"".join(v.to_bytes(sz, "little") for v in values)

    def decode(self, payload: bytes) -> list[int]:
        sz = self.byte_size
        if len(payload) % sz:
            raise ConfigError(f"payload length {len(payload)} not a multiple of {sz}")
        if sz <= 8:
            raw = _np.frombuffer(payload, dtype=_np.uint8).reshape(-1, sz)
            padded = _np.zeros((raw.shape[0], 8), dtype=_np.uint8)
            padded[:, :sz] = raw
            return padded.view("<u8").ravel().tolist()
        return [
            int.from_bytes(payload[i : i + sz], "little")
            for i in range(0, len(payload), sz)
        ]

    def __eq__(self, other) -> bool:
        return isinstance(other, Ring) and other.k == self.k

    def __repr__(self) -> str:
        return f"Ring(k={self.k})"


@dataclass(frozen=True)
class RingElement:
    """A canonical element of Z_{2^k}."""

    value: int
    width: int

    def __post_init__(self):
        _check_width(self.width)
        if not 0 <= self.value < (1 << self.width):
            raise ConfigError(f"value {self.value} not canonical for k={self.width}")

    def _paired(self, other: "RingElement") -> int:
        if self.width != other.width:
            raise WidthMismatchError(
                f"ring widths differ: {self.width} vs {other.width}"
            )
        return (1 << self.width) - 1

    def __add__(self, other: "RingElement") -> "RingElement":
        mask = self._paired(other)
        return RingElement((self.value + other.value) & mask, self.width)

    def __sub__(self, other: "RingElement") -> "RingElement":
        mask = self._paired(other)
        return RingElement((self.value - other.value) & mask, self.width)

    def __mul__(self, other: "RingElement") -> "RingElement":
        mask = self._paired(other)
        return RingElement((self.value * other.value) & mask, self.width)

    def __neg__(self) -> "RingElement":
        return RingElement((-self.value) & ((1 << self.width) - 1), self.width)

    def bit_decompose(self) -> list[int]:
        """Little-endian bits b_0..b_{k-1} with sum(b_i * 2^i) == value."""
        return [(self.value >> i) & 1 for i in range(self.width)]

    @classmethod
    def from_bits(cls, bits: list[int], width: int) -> "RingElement":
        if len(bits) != width:
            raise ConfigError(f"expected {width} bits, got {len(bits)}")
        return cls(sum(b << i for i, b in enumerate(bits)), width)


def add(a: RingElement, b: RingElement) -> RingElement:
    return a + b


def mul(a: RingElement, b: RingElement) -> RingElement:
    return a * b


def bit_decompose(a: RingElement) -> list[int]:
    return a.bit_decompose()
