"""Truncation protocols over Z_{2^k}.

Four procedures: probabilistic black-box truncation (mask with k shared
random bits, open, correct the top bit), its specialized three-party
variant where P_3 deals correlated randomness and P_1/P_2 run the
black-box protocol two-party (communication linear instead of quadratic
in k), exact truncation (same mask plus a shared borrow bit computed from
the low bits), and truncation by a secret shift hidden as shares of
2^{M-m}.

All entry points take vectors and coalesce same-round messages; every
input must be MSB-free (value < 2^{k-1}), which callers enforce by range
discipline since a violation is undetectable online.
"""

from __future__ import annotations

import numpy as np

from .arith import (
    AShareVec,
    add,
    add_const,
    mul,
    mul_const,
    open_values,
    rand_bits,
    sub,
)
from .binary import BShareMat, bit_to_arith, gen_dabits, gt_const
from .errors import ConfigError
from .session import PartySession, TruncMode


def _check_shift(k: int, m: int) -> None:
    if not 0 < m < k - 1:
        raise ConfigError(f"truncation shift must satisfy 0 < m < k-1, got m={m}")


def _regroup_bit_shares(flat: AShareVec, n: int, k: int) -> "_BitGroups":
    return _BitGroups(flat, n, k)


class _BitGroups:
    """View of a flat (n*k)-long bit-share vector as n groups of k bits.

    Flat layout: element e's bit i sits at index e*k + i, so per-position
    columns are the strided slices [i::k].
    """

    def __init__(self, flat: AShareVec, n: int, k: int):
        self.flat = flat
        self.n = n
        self.k = k

    def weighted(self, lo: int, hi: int, shift: int, mask: int) -> AShareVec:
        """Share of sum_{i=lo}^{hi-1} 2^{i-shift} * bit_i, per element."""
        k = self.k
        out = []
        for comp in (self.flat.c0, self.flat.c1):
            acc = [0] * self.n
            for i in range(lo, hi):
                w = 1 << (i - shift)
                col = comp[i::k]
                acc = [a + w * b for a, b in zip(acc, col)]
            out.append([a & mask for a in acc])
        return AShareVec(self.flat.k, out[0], out[1])

    def bit(self, i: int) -> AShareVec:
        return AShareVec(self.flat.k, self.flat.c0[i :: self.k],
                         self.flat.c1[i :: self.k])


def _bits_to_low_slices(bin_mask_c: int, n: int, k: int, m: int) -> list[int]:
    """Regroup a flat (n*k)-bit binary share component into m slices of n
    bits each (slice i = bit i of every element)."""
    total = n * k
    buf = bin_mask_c.to_bytes((total + 7) // 8, "little")
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8),
                         bitorder="little")[:total].reshape(n, k)
    packed = np.packbits(bits[:, :m].T, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def _apply_top_correction(
    sess: PartySession,
    c: list[int],
    groups: _BitGroups,
    m: int,
) -> AShareVec:
    """Shared c' - r_mid + b*2^{k-m-1} from the opened masked value c."""
    k = sess.k
    mask = sess.ring.mask
    half_span = 1 << (k - m - 1)
    c_shift = [(v >> m) & (half_span - 1) for v in c]
    c_top = [v >> (k - 1) for v in c]

    r_mid = groups.weighted(m, k - 1, m, mask)
    r_top = groups.bit(k - 1)
    # b = r_top XOR c_top, affine because c_top is public.
    b = add_const(sess, mul_const(r_top, [1 - 2 * t for t in c_top]), c_top)
    out = sub(mul_const(b, half_span), r_mid)
    return add_const(sess, out, c_shift)


def trunc_pr(sess: PartySession, x: AShareVec, m: int) -> AShareVec:
    """Probabilistic truncation: floor(x/2^m) + u with
    Pr[u=1] = (x mod 2^m)/2^m.  Requires MSB(x) = 0."""
    _check_shift(sess.k, m)
    n, k = len(x), sess.k
    flat = rand_bits(sess, n * k)
    groups = _regroup_bit_shares(flat, n, k)
    r = groups.weighted(0, k, 0, sess.ring.mask)
    c = open_values(sess, add(x, r))
    return _apply_top_correction(sess, c, groups, m)


def trunc_exact(sess: PartySession, x: AShareVec, m: int) -> AShareVec:
    """Exact floor(x/2^m) for MSB-free x.

    Same mask-and-open as trunc_pr, with the mask bits generated in both
    domains so the low-bit borrow u = [c mod 2^m < r mod 2^m] can be
    computed by a binary comparison against the public opened value and
    subtracted.
    """
    _check_shift(sess.k, m)
    n, k = len(x), sess.k
    bin_flat, arith_flat = gen_dabits(sess, n * k)
    groups = _regroup_bit_shares(arith_flat, n, k)
    r = groups.weighted(0, k, 0, sess.ring.mask)
    c = open_values(sess, add(x, r))
    rounded = _apply_top_correction(sess, c, groups, m)

    r_low = BShareMat(
        m, n,
        _bits_to_low_slices(bin_flat.c0[0], n, k, m),
        _bits_to_low_slices(bin_flat.c1[0], n, k, m),
    )
    borrow = gt_const(sess, r_low, [v & ((1 << m) - 1) for v in c])
    return sub(rounded, bit_to_arith(sess, borrow))


def trunc_pr_sp(sess: PartySession, x: AShareVec, m: int) -> AShareVec:
    """Specialized three-party probabilistic truncation.

    P_3 samples the mask bits in the clear, deals 2-of-2 sharings of
    (r, r_{k-1}, sum r_i 2^{i-m}) plus fresh output components y_1, y_3;
    P_1 and P_2 then run the black-box truncation as a two-party protocol
    on the collapsed sharing and reshare the result.  Traffic is a fixed
    number of ring elements per truncation, hence linear in k.
    """
    _check_shift(sess.k, m)
    ring = sess.ring
    mask = ring.mask
    k, n = sess.k, len(x)
    half_span = 1 << (k - m - 1)

    if sess.party == 3:
        r, rtop, rmid, y1, y3 = [], [], [], [], []
        for _ in range(n):
            bits = sess.rng.getrandbits(k)
            r.append(bits)
            rtop.append(bits >> (k - 1))
            rmid.append(sum(
                ((bits >> i) & 1) << (i - m) for i in range(m, k - 1)
            ))
            y1.append(sess.rand_element())
            y3.append(sess.rand_element())
        first, second = [], []
        for vals in (r, rtop, rmid):
            s1 = sess.rand_elements(n)
            s2 = [(v - a) & mask for v, a in zip(vals, s1)]
            first += s1
            second += s2
        first += y1
        second += y3
        sess.hub.step({1: ring.encode(first), 2: ring.encode(second)}, [])
        return AShareVec(sess.k, y3, y1)

    # P_1 and P_2: collapse to 2-of-2, then run the two-party protocol with
    # P_3's correlated randomness.
    me = sess.party
    peer = 2 if me == 1 else 1
    if me == 1:
        a_local = [(u + v) & mask for u, v in zip(x.c0, x.c1)]
    else:
        a_local = list(x.c1)

    dealt = ring.decode(sess.hub.step({}, [3])[3])
    if len(dealt) != 4 * n:
        raise ConfigError("bad correlated randomness size")
    r_sh, rtop_sh, rmid_sh, y_hat = (
        dealt[0:n], dealt[n : 2 * n], dealt[2 * n : 3 * n], dealt[3 * n :]
    )

    d = [(a + b) & mask for a, b in zip(a_local, r_sh)]
    d_peer = ring.decode(sess.hub.exchange(peer, ring.encode(d)))
    c = [(a + b) & mask for a, b in zip(d, d_peer)]

    c_shift = [(v >> m) & (half_span - 1) for v in c]
    c_top = [v >> (k - 1) for v in c]
    y_prime = []
    for i in range(n):
        b = (1 - 2 * c_top[i]) * rtop_sh[i] + (c_top[i] if me == 1 else 0)
        y = b * half_span - rmid_sh[i] + (c_shift[i] if me == 1 else 0)
        y_prime.append(y & mask)

    delta = [(a - b) & mask for a, b in zip(y_prime, y_hat)]
    tilde = ring.decode(sess.hub.exchange(peer, ring.encode(delta)))
    comp2 = [(a + b) & mask for a, b in zip(delta, tilde)]
    if me == 1:
        return AShareVec(sess.k, y_hat, comp2)
    return AShareVec(sess.k, comp2, y_hat)


def trunc(sess: PartySession, x: AShareVec, m: int,
          mode: TruncMode | None = None) -> AShareVec:
    """Truncation by a public shift in the session's (or given) mode."""
    mode = sess.mode if mode is None else mode
    if mode is TruncMode.EXACT:
        return trunc_exact(sess, x, m)
    return trunc_pr_sp(sess, x, m)


def trunc_priv(
    sess: PartySession,
    x: AShareVec,
    pow_share: AShareVec,
    bound: int,
    mode: TruncMode | None = None,
    nearest: bool = False,
    signed: bool = False,
) -> AShareVec:
    """Truncate by a secret shift m given shares of 2^{bound-m}.

    Multiplies by the shifted power and truncates by the public bound, so
    the transcript depends only on (bound, k), never on m.  The caller
    must guarantee (bound - m) + bitlen(x) < k.  With nearest=True the
    public constant 2^{bound-1} is added first, turning floor into
    round-to-nearest with ties up.

    signed=True accepts two's-complement residues with |value| < 2^{k-2}:
    the product is lifted by 2^{k-2} into the MSB-free range and the
    public 2^{k-2-bound} is subtracted afterwards, which preserves
    floor-toward-minus-infinity semantics.
    """
    _check_shift(sess.k, bound)
    if len(pow_share) == 1 and len(x) > 1:
        pow_share = pow_share.repeat_scalar(len(x))
    prod = mul(sess, x, pow_share)
    offset = 0
    if nearest:
        offset += 1 << (bound - 1)
    if signed:
        offset += 1 << (sess.k - 2)
    if offset:
        prod = add_const(sess, prod, offset)
    out = trunc(sess, prod, bound, mode)
    if signed:
        out = add_const(sess, out, (-(1 << (sess.k - 2 - bound))) & sess.ring.mask)
    return out


def round_nearest(
    sess: PartySession,
    x: AShareVec,
    pow_share: AShareVec,
    bound: int,
    mode: TruncMode | None = None,
) -> AShareVec:
    """Shares of round(x / 2^m) with ties up, m hidden in pow_share."""
    return trunc_priv(sess, x, pow_share, bound, mode, nearest=True)
