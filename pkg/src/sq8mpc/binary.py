"""Replicated sharing of bit vectors over Z_2 and everything built on it:
MSB extraction through a pruned parallel-prefix adder, secure comparison,
daBit-based bit-to-arithmetic conversion, oblivious selection and clamping.

Shares are bitsliced: a BShareMat stores, per bit position, one integer
whose bit e is that position's share for batch element e.  XOR is local;
an AND gate costs one bit per party, and all gates of a layer travel in a
single packed message.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arith import AShareVec, add_const, mul, mul_const, sub
from .bits import chunk_mask, unpack_bits
from .errors import ShapeError
from .session import PartySession


@dataclass
class BShareMat:
    """nbits x n matrix of replicated Z_2 shares, one int per bit slice."""

    nbits: int
    n: int
    c0: list[int]
    c1: list[int]

    def __post_init__(self):
        if len(self.c0) != self.nbits or len(self.c1) != self.nbits:
            raise ShapeError("slice count does not match nbits")

    @property
    def full(self) -> int:
        return (1 << self.n) - 1

    def take(self, idx: list[int]) -> "BShareMat":
        return BShareMat(
            len(idx), self.n, [self.c0[i] for i in idx], [self.c1[i] for i in idx]
        )

    def single(self, j: int) -> "BShareMat":
        return BShareMat(1, self.n, [self.c0[j]], [self.c1[j]])


def bzeros(nbits: int, n: int) -> BShareMat:
    return BShareMat(nbits, n, [0] * nbits, [0] * nbits)


def bconcat(mats: list[BShareMat]) -> BShareMat:
    n = mats[0].n
    if any(m.n != n for m in mats):
        raise ShapeError("batch widths differ")
    c0, c1 = [], []
    for m in mats:
        c0 += m.c0
        c1 += m.c1
    return BShareMat(len(c0), n, c0, c1)


# --- bit transposition (values <-> slices) ---------------------------------


def values_to_slices(values: list[int], nbits: int) -> list[int]:
    """Per-position slices of a list of nbits-wide integers."""
    n = len(values)
    if n == 0:
        return [0] * nbits
    width = (nbits + 7) // 8
    buf = b"".join(v.to_bytes(width, "little") for v in values)
    bits = np.unpackbits(
        np.frombuffer(buf, dtype=np.uint8).reshape(n, width),
        axis=1, bitorder="little",
    )[:, :nbits]
    packed = np.packbits(bits.T, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def slices_to_values(slices: list[int], n: int) -> list[int]:
    """Inverse of values_to_slices for a batch of n elements."""
    nbits = len(slices)
    if n == 0:
        return []
    width = (n + 7) // 8
    buf = b"".join(s.to_bytes(width, "little") for s in slices)
    bits = np.unpackbits(
        np.frombuffer(buf, dtype=np.uint8).reshape(nbits, width),
        axis=1, bitorder="little",
    )[:, :n]
    packed = np.packbits(bits.T, axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def _pack(slices: list[int], n: int) -> bytes:
    width = (n + 7) // 8
    return b"".join(s.to_bytes(width, "little") for s in slices)


def _unpack(payload: bytes, nbits: int, n: int) -> list[int]:
    width = (n + 7) // 8
    if len(payload) != nbits * width:
        raise ShapeError("bad packed bit payload length")
    return [
        int.from_bytes(payload[j * width : (j + 1) * width], "little")
        for j in range(nbits)
    ]


# --- gates ------------------------------------------------------------------


def bxor(a: BShareMat, b: BShareMat) -> BShareMat:
    if (a.nbits, a.n) != (b.nbits, b.n):
        raise ShapeError("bit matrix shapes differ")
    return BShareMat(
        a.nbits, a.n,
        [x ^ y for x, y in zip(a.c0, b.c0)],
        [x ^ y for x, y in zip(a.c1, b.c1)],
    )


def bxor_const(sess: PartySession, a: BShareMat, masks: list[int]) -> BShareMat:
    """XOR with public bits, folded into component 1 like add_const."""
    if len(masks) != a.nbits:
        raise ShapeError("mask count mismatch")
    if sess.party == 1:
        return BShareMat(a.nbits, a.n, [x ^ m for x, m in zip(a.c0, masks)],
                         list(a.c1))
    if sess.party == 3:
        return BShareMat(a.nbits, a.n, list(a.c0),
                         [x ^ m for x, m in zip(a.c1, masks)])
    return BShareMat(a.nbits, a.n, list(a.c0), list(a.c1))


def band_const(a: BShareMat, masks: list[int]) -> BShareMat:
    return BShareMat(
        a.nbits, a.n,
        [x & m for x, m in zip(a.c0, masks)],
        [x & m for x, m in zip(a.c1, masks)],
    )


def band(sess: PartySession, a: BShareMat, b: BShareMat) -> BShareMat:
    """Replicated AND; one bit per party per gate, one message per call."""
    if (a.nbits, a.n) != (b.nbits, b.n):
        raise ShapeError("bit matrix shapes differ")
    n, nbits = a.n, a.nbits
    alpha = chunk_mask(sess.zero_bitmask(nbits * n), n, nbits)
    t = [
        (a.c0[j] & b.c0[j]) ^ (a.c0[j] & b.c1[j]) ^ (a.c1[j] & b.c0[j]) ^ alpha[j]
        for j in range(nbits)
    ]
    t_next = _unpack(sess.hub.shift(_pack(t, n)), nbits, n)
    return BShareMat(nbits, n, t, t_next)


def band_many(sess: PartySession, pairs: list[tuple[BShareMat, BShareMat]]
              ) -> list[BShareMat]:
    """AND several same-width matrices in one round/message."""
    a = bconcat([p[0] for p in pairs])
    b = bconcat([p[1] for p in pairs])
    out = band(sess, a, b)
    res, pos = [], 0
    for pa, _ in pairs:
        res.append(out.take(list(range(pos, pos + pa.nbits))))
        pos += pa.nbits
    return res


def open_bits(sess: PartySession, a: BShareMat) -> list[int]:
    """Reveal the bit matrix; returns public per-position slices."""
    got = _unpack(sess.hub.shift(_pack(a.c1, a.n)), a.nbits, a.n)
    return [x ^ y ^ z for x, y, z in zip(a.c0, a.c1, got)]


# --- carry / comparison prefix fold -----------------------------------------


def _fold_gp(sess: PartySession, g: BShareMat, p: BShareMat) -> BShareMat:
    """Combine per-position (generate, propagate) pairs down to the full
    span's generate bit.

    Spans are merged pairwise per level (the parallel-prefix tree pruned
    to the one output the MSB needs), so rounds stay logarithmic in the
    width while the gate count stays linear.
    """
    while g.nbits > 1:
        m = g.nbits
        pairs = m // 2
        lo = list(range(0, 2 * pairs, 2))
        hi = list(range(1, 2 * pairs, 2))
        g_lo, g_hi = g.take(lo), g.take(hi)
        p_lo, p_hi = p.take(lo), p.take(hi)
        last_level = (pairs + (m & 1)) == 1
        if last_level:
            # The final propagate is never consumed; drop its AND.
            t = band(sess, p_hi, g_lo)
            new_g = bxor(g_hi, t)
            new_p = bzeros(pairs, g.n)
        else:
            t, new_p = band_many(sess, [(p_hi, g_lo), (p_hi, p_lo)])
            new_g = bxor(g_hi, t)
        if m & 1:
            new_g = bconcat([new_g, g.single(m - 1)])
            new_p = bconcat([new_p, p.single(m - 1)])
        g, p = new_g, new_p
    return g


def carry_into_top(sess: PartySession, u: BShareMat, v: BShareMat) -> BShareMat:
    """Carry into bit position nbits of u + v (inputs are nbits wide)."""
    g = band(sess, u, v)
    p = bxor(u, v)
    return _fold_gp(sess, g, p)


def gt_const(sess: PartySession, rbits: BShareMat, consts: list[int]) -> BShareMat:
    """Shared bit [r > c] for shared bit-decomposed r and public c.

    Uses the same generate/propagate fold as the adder: per position,
    generate = r_j AND (not c_j) and propagate = (r_j == c_j); both are
    local because c is public.
    """
    if len(consts) != rbits.n:
        raise ShapeError("constant count mismatch")
    cslices = values_to_slices(consts, rbits.nbits)
    g = band_const(rbits, [~c & rbits.full for c in cslices])
    p = bxor_const(sess, rbits, [~c & rbits.full for c in cslices])
    return _fold_gp(sess, g, p)


# --- MSB and comparison ------------------------------------------------------


def msb(sess: PartySession, x: AShareVec) -> BShareMat:
    """Binary sharing of bit k-1 of a shared ring value.

    Splits x into the two summands u = x_1 + x_2 (known to P_1) and
    v = x_3 (known to P_2 and P_3), injects both as binary sharings, and
    runs the prefix adder.  v's sharing is the trivial one in component 3,
    which leaks nothing new to its holders; u's sharing needs one masked
    k-bit message from P_1 to P_3 because no non-interactive replicated
    sharing of a single-party value exists.
    """
    k, n = sess.k, len(x)
    zeros = [0] * k
    prg_dom = "msb-mask"

    # v = x_3 in component 3: P_3 holds it first, P_2 second.
    if sess.party == 3:
        v = BShareMat(k, n, values_to_slices(x.c0, k), zeros[:])
    elif sess.party == 2:
        v = BShareMat(k, n, zeros[:], values_to_slices(x.c1, k))
    else:
        v = bzeros(k, n)

    # u = x_1 + x_2 in components (1, 2): component 2 is a pairwise PRG
    # stream of P_1/P_2, component 1 = bits(u) ^ stream goes to P_3.
    if sess.party == 1:
        mask_slices = chunk_mask(sess.pair_bits(prg_dom, "next", k * n), n, k)
        uvals = [(a + b) & sess.ring.mask for a, b in zip(x.c0, x.c1)]
        comp1 = [s ^ m for s, m in zip(values_to_slices(uvals, k), mask_slices)]
        sess.hub.step({3: _pack(comp1, n)}, [])
        u = BShareMat(k, n, comp1, mask_slices)
    elif sess.party == 2:
        mask_slices = chunk_mask(sess.pair_bits(prg_dom, "prev", k * n), n, k)
        sess.hub.step({}, [])
        u = BShareMat(k, n, mask_slices, zeros[:])
    else:
        comp1 = _unpack(sess.hub.step({}, [1])[1], k, n)
        u = BShareMat(k, n, zeros[:], comp1)

    low = list(range(k - 1))
    carry = carry_into_top(sess, u.take(low), v.take(low))
    return bxor(bxor(u.single(k - 1), v.single(k - 1)), carry)


def less_than(sess: PartySession, a: AShareVec, b: AShareVec) -> BShareMat:
    """Shared bit [a < b]; valid while |a - b| < 2^{k-1} (range discipline
    is the caller's job, violations are undetectable online)."""
    return msb(sess, sub(a, b))


# --- daBits and conversion ---------------------------------------------------


class _DabitPool:
    """Preprocessing pool; refills in fixed-size batches to amortize the
    two XOR-combination multiplications."""

    def __init__(self):
        self.bin_c0 = 0
        self.bin_c1 = 0
        self.arith_c0: list[int] = []
        self.arith_c1: list[int] = []
        self.count = 0

    def put(self, b: BShareMat, a: AShareVec) -> None:
        self.bin_c0 |= b.c0[0] << self.count
        self.bin_c1 |= b.c1[0] << self.count
        self.arith_c0 += a.c0
        self.arith_c1 += a.c1
        self.count += b.n

    def pop(self, n: int, k: int) -> tuple[BShareMat, AShareVec]:
        full = (1 << n) - 1
        b = BShareMat(1, n, [self.bin_c0 & full], [self.bin_c1 & full])
        a = AShareVec(k, self.arith_c0[:n], self.arith_c1[:n])
        self.bin_c0 >>= n
        self.bin_c1 >>= n
        self.arith_c0 = self.arith_c0[n:]
        self.arith_c1 = self.arith_c1[n:]
        self.count -= n
        return b, a


def gen_dabits(sess: PartySession, n: int) -> tuple[BShareMat, AShareVec]:
    """n random bits shared in both domains at once.

    Each party's pairwise-stream bit enters both domains with the same
    trivial component placement; the binary XOR of the three contributions
    is local while the arithmetic side costs the usual two muls, so both
    sides provably share the identical bit.
    """
    from .arith import xor_shares
    from .transport import prev_party

    bits_next = sess.pair_bits("dabit", "next", n)
    bits_prev = sess.pair_bits("dabit", "prev", n)
    bin_share = BShareMat(1, n, [bits_prev], [bits_next])

    zero = [0] * n
    views = {j: AShareVec(sess.k, zero[:], zero[:]) for j in (1, 2, 3)}
    views[prev_party(sess.party)] = AShareVec(
        sess.k, unpack_bits(bits_prev, n), zero[:]
    )
    views[sess.party] = AShareVec(sess.k, zero[:], unpack_bits(bits_next, n))
    arith = xor_shares(sess, xor_shares(sess, views[1], views[2]), views[3])
    return bin_share, arith


def take_dabits(sess: PartySession, n: int) -> tuple[BShareMat, AShareVec]:
    if sess._dabit_pool is None:
        sess._dabit_pool = _DabitPool()
    pool: _DabitPool = sess._dabit_pool
    while pool.count < n:
        b, a = gen_dabits(sess, sess.dabit_batch)
        pool.put(b, a)
    return pool.pop(n, sess.k)


def bit_to_arith(sess: PartySession, b: BShareMat) -> AShareVec:
    """Convert a shared bit vector to arithmetic shares of the same bits.

    Costs one 1-bit opening per call: open c = b ^ r against a daBit r and
    output c + r - 2cr using r's arithmetic sharing.
    """
    if b.nbits != 1:
        raise ShapeError("bit_to_arith expects single-bit rows")
    n = b.n
    rbin, rarith = take_dabits(sess, n)
    c = unpack_bits(open_bits(sess, bxor(b, rbin))[0], n)
    scaled = mul_const(rarith, [1 - 2 * ci for ci in c])
    return add_const(sess, scaled, c)


# --- selection and clamping --------------------------------------------------


def select(sess: PartySession, s: AShareVec, a1: AShareVec, a0: AShareVec
           ) -> AShareVec:
    """Oblivious mux a_s = s*(a1 - a0) + a0 for a shared bit s; one mul."""
    from .arith import add as aadd

    return aadd(mul(sess, s, sub(a1, a0)), a0)


def clamp(sess: PartySession, x: AShareVec, lo: int, hi: int) -> AShareVec:
    """min(max(x, lo), hi) for public lo <= hi: two comparisons sharing one
    adder batch, then two selections sharing one multiplication round."""
    from .arith import add as aadd

    if lo > hi:
        raise ShapeError(f"clamp bounds inverted: {lo} > {hi}")
    n = len(x)
    x_lo = add_const(sess, x, (-lo) & sess.ring.mask)   # x - lo
    hi_x = add_const(sess, mul_const(x, sess.ring.mask), hi)  # hi - x
    both = msb(sess, x_lo.concat(hi_x))
    below_above = bit_to_arith(
        sess, BShareMat(1, 2 * n, [both.c0[0]], [both.c1[0]])
    )
    below = below_above.slice(0, n)
    above = below_above.slice(n, 2 * n)

    # x + below*(lo - x) + above*(hi - x), batched into one round.
    lo_x = add_const(sess, mul_const(x, sess.ring.mask), lo)  # lo - x
    corr = mul(sess, below.concat(above), lo_x.concat(hi_x))
    return aadd(aadd(x, corr.slice(0, n)), corr.slice(n, 2 * n))
