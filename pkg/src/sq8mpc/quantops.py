"""Quantization layer: parameters, multiplier normalization, the secure
quantized output stage, pooling reductions and argmax.

The output stage computes clamp(z3 + round(2^{-ell} * m' * s)) from a
shared accumulator s, with the rescale exponent hidden inside shares of
2^{L-ell}.  Accumulators are signed residues, so truncation inputs are
lifted by a public offset into the MSB-free range first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import arith, binary
from .arith import AShareVec
from .errors import ConfigError, ShapeError
from .session import PartySession, TruncMode
from .trunc import trunc, trunc_priv

RECIP_BITS = 31  # fixed-point fraction bits for public pool divisors


@dataclass(frozen=True)
class QuantParams:
    """Per-tensor affine quantization: real = scale * (q - zero_point)."""

    scale: float
    zero_point: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if not 0 <= self.zero_point < 256:
            raise ConfigError(f"zero point {self.zero_point} outside [0, 256)")


def dequantize(q: int, qp: QuantParams) -> float:
    return qp.scale * (q - qp.zero_point)


def quantize(alpha: float, qp: QuantParams) -> int:
    q = math.floor(alpha / qp.scale + 0.5) + qp.zero_point
    return min(max(q, 0), 255)


@dataclass(frozen=True)
class FixedMultiplier:
    """32-bit fixed-point form of a real rescale factor m in (0, 1):
    m ~= 2^{-ell} * m_prime with ell = n + 31 and m_prime in [2^30, 2^31]."""

    m_prime: int
    n: int

    @property
    def ell(self) -> int:
        return self.n + 31

    def to_float(self) -> float:
        return self.m_prime * 2.0 ** (-self.ell)


def normalize_multiplier(m: float) -> FixedMultiplier:
    """Split m in (0, 1) as 2^{-n} * m'' with m'' in [0.5, 1), then round
    m'' to 31 fractional bits."""
    if not 0.0 < m < 1.0:
        raise ConfigError(f"multiplier {m} outside the supported range (0, 1)")
    frac, exp = math.frexp(m)  # m = frac * 2^exp, frac in [0.5, 1)
    n = -exp
    m_prime = math.floor(frac * (1 << 31) + 0.5)
    return FixedMultiplier(m_prime, n)


# --- secure stages -----------------------------------------------------------


def conv_accumulate(
    sess: PartySession,
    acts: AShareVec,
    weights: AShareVec,
    z1: AShareVec,
    z2: AShareVec,
    windows: list[tuple[list[int], list[int]]],
    bias: AShareVec | None = None,
    bias_idx: list[int] | None = None,
) -> AShareVec:
    """s = sum (a_i - z1)(b_i - z2) + bias per window; one element of
    traffic per output regardless of window length (the zero-point
    subtractions are local)."""
    a = arith.sub(acts, z1.repeat_scalar(len(acts)))
    b = arith.sub(weights, z2.repeat_scalar(len(weights)))
    s = arith.dot_gather(sess, a, b, windows)
    if bias is not None:
        picked = bias.gather(bias_idx if bias_idx is not None else
                             list(range(len(windows))))
        s = arith.add(s, picked)
    return s


def output_stage(
    sess: PartySession,
    s: AShareVec,
    m_prime: AShareVec,
    pow_share: AShareVec,
    z3: AShareVec,
    bound: int,
    clamp_lo: int,
    clamp_hi: int,
    mode: TruncMode | None = None,
) -> AShareVec:
    """clamp(z3 + round(2^{-ell} * m' * s), lo, hi) on shares.

    Exact mode adds 2^{bound-1} before truncating (round to nearest, ties
    up); probabilistic mode relies on the truncation's inherent bias
    toward the nearest integer instead.
    """
    mode = sess.mode if mode is None else mode
    n = len(s)
    t = arith.mul(sess, s, m_prime.repeat_scalar(n))
    y = trunc_priv(
        sess, t, pow_share, bound,
        mode=mode, nearest=(mode is TruncMode.EXACT), signed=True,
    )
    y = arith.add(y, z3.repeat_scalar(n))
    return binary.clamp(sess, y, clamp_lo, clamp_hi)


def max_pool(
    sess: PartySession, x: AShareVec, windows: list[list[int]]
) -> AShareVec:
    """Tournament maximum per window; comparison levels are batched across
    all windows, so rounds grow with log2(max window size) only."""
    if any(not w for w in windows):
        raise ShapeError("empty pooling window")
    buf = x

    # Candidate refs hold indices into buf; each level pairs adjacent
    # candidates, compares, and keeps winners plus odd leftovers.
    refs = [list(w) for w in windows]
    while max(len(r) for r in refs) > 1:
        left, right, passthrough = [], [], []
        layout = []
        for r in refs:
            pairs = len(r) // 2
            layout.append((pairs, len(r) % 2))
            left += r[0 : 2 * pairs : 2]
            right += r[1 : 2 * pairs : 2]
            if len(r) % 2:
                passthrough.append(r[-1])
        a = buf.gather(left)
        b = buf.gather(right)
        lt = binary.less_than(sess, a, b)
        s_bit = binary.bit_to_arith(sess, lt)
        winners = binary.select(sess, s_bit, b, a)  # lt=1 -> right is larger
        extras = buf.gather(passthrough)
        buf = winners.concat(extras)
        new_refs, w_pos, e_pos = [], 0, len(winners)
        for pairs, odd in layout:
            r = list(range(w_pos, w_pos + pairs))
            w_pos += pairs
            if odd:
                r.append(e_pos)
                e_pos += 1
            new_refs.append(r)
        refs = new_refs
    return buf.gather([r[0] for r in refs])


def avg_pool(
    sess: PartySession,
    x: AShareVec,
    windows: list[list[int]],
    divisor: int,
    mode: TruncMode | None = None,
) -> AShareVec:
    """round(sum(window) / divisor) via a public 31-fractional-bit
    reciprocal multiply and a truncation by the public shift."""
    if divisor < 1:
        raise ShapeError(f"divisor must be positive, got {divisor}")
    mode = sess.mode if mode is None else mode
    total = arith.sum_groups(sess, x, windows)
    recip = ((1 << RECIP_BITS) + divisor // 2) // divisor
    scaled = arith.mul_const(total, recip)
    if mode is TruncMode.EXACT:
        scaled = arith.add_const(sess, scaled, 1 << (RECIP_BITS - 1))
    return trunc(sess, scaled, RECIP_BITS, mode)


def secure_argmax(sess: PartySession, scores: AShareVec) -> int:
    """Index of the maximum score; values are never opened, only the final
    index is.  Ties break toward the lowest index, matching the oracle."""
    if len(scores) == 0:
        raise ShapeError("argmax of empty vector")
    vals = scores
    idxs = arith.share_const(sess, list(range(len(scores))))
    while len(vals) > 1:
        pairs = len(vals) // 2
        odd = len(vals) % 2
        a_v = vals.gather(list(range(0, 2 * pairs, 2)))
        b_v = vals.gather(list(range(1, 2 * pairs, 2)))
        a_i = idxs.gather(list(range(0, 2 * pairs, 2)))
        b_i = idxs.gather(list(range(1, 2 * pairs, 2)))
        # Strict less-than keeps the left (lower) index on ties.
        lt = binary.less_than(sess, a_v, b_v)
        s_bit = binary.bit_to_arith(sess, lt)
        s_both = s_bit.concat(s_bit)
        picked = binary.select(
            sess, s_both, b_v.concat(b_i), a_v.concat(a_i)
        )
        new_v = picked.slice(0, pairs)
        new_i = picked.slice(pairs, 2 * pairs)
        if odd:
            new_v = new_v.concat(vals.slice(len(vals) - 1, len(vals)))
            new_i = new_i.concat(idxs.slice(len(idxs) - 1, len(idxs)))
        vals, idxs = new_v, new_i
    return arith.open_values(sess, idxs)[0]
