"""Replicated 2-of-3 arithmetic secret sharing over Z_{2^k}.

Share layout: the secret x satisfies x = x_1 + x_2 + x_3 (mod 2^k);
component x_j is held by P_j (as its first slot) and P_{j-1} (as its
second).  Party i therefore stores the pair (x_i, x_{i+1}).

Public constants are folded into component 1, so P_1 adjusts its first
slot and P_3 its second; any fixed convention works, this one makes
transcripts deterministic.

Multiplication follows the three-ring-element pattern: P_i computes
t_i = a_i*b_i + a_i*b_{i+1} + a_{i+1}*b_i + alpha_i with alpha_i a
PRG-derived zero-sharing component, sends t_i to P_{i-1}, and the t's
become the components of the product.  A dot product accumulates the
local cross terms first and still sends a single element.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bits import unpack_bits
from .errors import ConsistencyError, ShapeError, WidthMismatchError
from .session import PartySession
from .transport import prev_party


@dataclass
class AShareVec:
    """This party's slice of a vector of replicated arithmetic shares."""

    k: int
    c0: list[int]
    c1: list[int]

    def __post_init__(self):
        if len(self.c0) != len(self.c1):
            raise ShapeError("share component lengths differ")

    def __len__(self) -> int:
        return len(self.c0)

    def gather(self, idx: list[int]) -> "AShareVec":
        c0, c1 = self.c0, self.c1
        return AShareVec(self.k, [c0[i] for i in idx], [c1[i] for i in idx])

    def slice(self, lo: int, hi: int) -> "AShareVec":
        return AShareVec(self.k, self.c0[lo:hi], self.c1[lo:hi])

    def concat(self, other: "AShareVec") -> "AShareVec":
        _check_widths(self, other)
        return AShareVec(self.k, self.c0 + other.c0, self.c1 + other.c1)

    def repeat_scalar(self, n: int) -> "AShareVec":
        if len(self) != 1:
            raise ShapeError("repeat_scalar needs a singleton share")
        return AShareVec(self.k, self.c0 * n, self.c1 * n)


def _check_widths(*shs: AShareVec) -> None:
    k = shs[0].k
    for sh in shs[1:]:
        if sh.k != k:
            raise WidthMismatchError(f"share widths differ: {sh.k} vs {k}")


def _check_lens(a: AShareVec, b: AShareVec) -> None:
    if len(a) != len(b):
        raise ShapeError(f"vector lengths differ: {len(a)} vs {len(b)}")


def zeros(sess: PartySession, n: int) -> AShareVec:
    return AShareVec(sess.k, [0] * n, [0] * n)


def share_const(sess: PartySession, values: list[int]) -> AShareVec:
    """Share of a public vector: the value sits in component 1, zero comm."""
    mask = sess.ring.mask
    vals = [v & mask for v in values]
    z = [0] * len(vals)
    if sess.party == 1:
        return AShareVec(sess.k, vals, z)
    if sess.party == 3:
        return AShareVec(sess.k, z, vals)
    return AShareVec(sess.k, z, list(z))


# --- sharing and opening --------------------------------------------------


def input_share(
    sess: PartySession, owner: int, values: list[int] | None, n: int | None = None
) -> AShareVec:
    """Owner secret-shares a vector; everyone returns a valid share slice.

    Components x_o and x_{o+1} come from the owner's two pairwise PRG
    streams; the correction component x_{o-1} = x - x_o - x_{o+1} is the
    only traffic (one message to each other party).
    """
    ring = sess.ring
    me, nxt, prv = sess.party, sess.hub.next_peer, sess.hub.prev_peer

    if me == owner:
        if values is None:
            raise ShapeError("owner must supply values")
        n = len(values)
        comp_o = sess.pair_elements("input", "prev", n)   # x_o
        comp_o1 = sess.pair_elements("input", "next", n)  # x_{o+1}
        corr = [(v - a - b) & ring.mask for v, a, b in zip(values, comp_o, comp_o1)]
        payload = ring.encode(corr)
        sess.hub.step({nxt: payload, prv: payload}, [])
        return AShareVec(sess.k, comp_o, comp_o1)

    if n is None:
        raise ShapeError("non-owners must pass the vector length")
    if owner == prv:
        # I am P_{o+1}: hold (x_{o+1}, x_{o+2}) = (PRG with owner, correction).
        comp = sess.pair_elements("input", "prev", n)
        got = sess.hub.step({}, [prv])[prv]
        return AShareVec(sess.k, comp, ring.decode(got))
    # I am P_{o-1}: hold (x_{o-1}, x_o) = (correction, PRG with owner).
    comp = sess.pair_elements("input", "next", n)
    got = sess.hub.step({}, [nxt])[nxt]
    return AShareVec(sess.k, ring.decode(got), comp)


def open_values(sess: PartySession, sh: AShareVec, check: bool = False) -> list[int]:
    """Reconstruct toward every party: one ring element per party.

    With check=True each party also forwards its first component so peers
    can verify the overlapping component matches (debug aid for the
    semi-honest model, costs a second element).
    """
    ring = sess.ring
    if check:
        payload = ring.encode(sh.c1) + ring.encode(sh.c0)
        got = sess.hub.step(
            {sess.hub.prev_peer: payload}, [sess.hub.next_peer]
        )[sess.hub.next_peer]
        decoded = ring.decode(got)
        missing, echo = decoded[: len(sh)], decoded[len(sh):]
        if echo != sh.c1:
            raise ConsistencyError("adjacent parties disagree on a component")
    else:
        got = sess.hub.shift(ring.encode(sh.c1))
        missing = ring.decode(got)
    mask = ring.mask
    return [(a + b + c) & mask for a, b, c in zip(sh.c0, sh.c1, missing)]


def to_two_party(sess: PartySession, sh: AShareVec) -> list[int] | None:
    """Collapse to a 2-of-2 sharing: P_1 holds x_1+x_2, P_2 holds x_3."""
    mask = sess.ring.mask
    if sess.party == 1:
        return [(a + b) & mask for a, b in zip(sh.c0, sh.c1)]
    if sess.party == 2:
        return list(sh.c1)
    return None


# --- local linear algebra ---------------------------------------------------


def add(a: AShareVec, b: AShareVec) -> AShareVec:
    _check_widths(a, b)
    _check_lens(a, b)
    mask = (1 << a.k) - 1
    return AShareVec(
        a.k,
        [(x + y) & mask for x, y in zip(a.c0, b.c0)],
        [(x + y) & mask for x, y in zip(a.c1, b.c1)],
    )


def sub(a: AShareVec, b: AShareVec) -> AShareVec:
    _check_widths(a, b)
    _check_lens(a, b)
    mask = (1 << a.k) - 1
    return AShareVec(
        a.k,
        [(x - y) & mask for x, y in zip(a.c0, b.c0)],
        [(x - y) & mask for x, y in zip(a.c1, b.c1)],
    )


def neg(a: AShareVec) -> AShareVec:
    mask = (1 << a.k) - 1
    return AShareVec(a.k, [(-x) & mask for x in a.c0], [(-x) & mask for x in a.c1])


def add_const(sess: PartySession, a: AShareVec, c: int | list[int]) -> AShareVec:
    consts = [c] * len(a) if isinstance(c, int) else c
    if len(consts) != len(a):
        raise ShapeError("constant vector length mismatch")
    mask = sess.ring.mask
    if sess.party == 1:
        return AShareVec(a.k, [(x + v) & mask for x, v in zip(a.c0, consts)],
                         list(a.c1))
    if sess.party == 3:
        return AShareVec(a.k, list(a.c0),
                         [(x + v) & mask for x, v in zip(a.c1, consts)])
    return AShareVec(a.k, list(a.c0), list(a.c1))


def mul_const(a: AShareVec, c: int | list[int]) -> AShareVec:
    mask = (1 << a.k) - 1
    if isinstance(c, int):
        return AShareVec(a.k, [(x * c) & mask for x in a.c0],
                         [(x * c) & mask for x in a.c1])
    if len(c) != len(a):
        raise ShapeError("constant vector length mismatch")
    return AShareVec(
        a.k,
        [(x * v) & mask for x, v in zip(a.c0, c)],
        [(x * v) & mask for x, v in zip(a.c1, c)],
    )


def affine_const(
    sess: PartySession, a: AShareVec, scale: int | list[int], offset: int | list[int]
) -> AShareVec:
    """scale*a + offset with public per-element coefficients, zero comm."""
    return add_const(sess, mul_const(a, scale), offset)


def sum_all(sess: PartySession, a: AShareVec) -> AShareVec:
    mask = sess.ring.mask
    return AShareVec(a.k, [sum(a.c0) & mask], [sum(a.c1) & mask])


def sum_groups(sess: PartySession, a: AShareVec, groups: list[list[int]]) -> AShareVec:
    mask = sess.ring.mask
    c0, c1 = a.c0, a.c1
    return AShareVec(
        a.k,
        [sum(c0[i] for i in g) & mask for g in groups],
        [sum(c1[i] for i in g) & mask for g in groups],
    )


# --- interactive ops --------------------------------------------------------


def mul(sess: PartySession, a: AShareVec, b: AShareVec) -> AShareVec:
    """Elementwise secure product; each party sends exactly one element per
    output (three ring elements of traffic in total)."""
    _check_widths(a, b)
    _check_lens(a, b)
    ring = sess.ring
    mask = ring.mask
    alpha = sess.zero_elements(len(a))
    t = [
        (x0 * y0 + x0 * y1 + x1 * y0 + z) & mask
        for x0, x1, y0, y1, z in zip(a.c0, a.c1, b.c0, b.c1, alpha)
    ]
    t_next = ring.decode(sess.hub.shift(ring.encode(t)))
    return AShareVec(a.k, t, t_next)


def dot_gather(
    sess: PartySession,
    a: AShareVec,
    b: AShareVec,
    windows: list[tuple[list[int], list[int]]],
) -> AShareVec:
    """One secure dot product per (index window into a, index window into b).

    Local cross terms are accumulated before the single resharing message,
    so traffic per output equals one multiplication regardless of window
    length.  The raw accumulator never leaves this function unmasked.
    """
    _check_widths(a, b)
    ring = sess.ring
    mask = ring.mask
    a0, a1, b0, b1 = a.c0, a.c1, b.c0, b.c1
    alpha = sess.zero_elements(len(windows))
    t = []
    for (ia, ib), z in zip(windows, alpha):
        if len(ia) != len(ib):
            raise ShapeError("window index lengths differ")
        acc = z
        for i, j in zip(ia, ib):
            x0, x1, y0, y1 = a0[i], a1[i], b0[j], b1[j]
            acc += x0 * y0 + x0 * y1 + x1 * y0
        t.append(acc & mask)
    t_next = ring.decode(sess.hub.shift(ring.encode(t)))
    return AShareVec(a.k, t, t_next)


def dot(sess: PartySession, a: AShareVec, b: AShareVec) -> AShareVec:
    """Single dot product over whole vectors (N >= 1); cost of one mul."""
    _check_lens(a, b)
    if len(a) == 0:
        raise ShapeError("dot of empty vectors")
    idx = list(range(len(a)))
    return dot_gather(sess, a, b, [(idx, idx)])


def xor_shares(sess: PartySession, a: AShareVec, b: AShareVec) -> AShareVec:
    """Arithmetic XOR of shared bits: a + b - 2ab (one mul)."""
    prod = mul(sess, a, b)
    return sub(add(a, b), add(prod, prod))


def rand_bits(sess: PartySession, n: int) -> AShareVec:
    """Shares of n uniform bits unknown to any single party.

    Each party contributes a bit drawn from a pairwise stream (its trivial
    sharing costs nothing and is already known to that pair); the three
    contributions are folded with two arithmetic XORs, so the whole op
    costs exactly two multiplications.
    """
    bits_next = sess.pair_bits("randbit", "next", n)
    bits_prev = sess.pair_bits("randbit", "prev", n)
    zero = [0] * n
    mine_prev = unpack_bits(bits_prev, n)
    mine_next = unpack_bits(bits_next, n)

    # Global sharings S_j (value in component j+1); party i sees S_{i-1}
    # in its first slot, S_i in its second, and only zeros of S_{i+1}.
    views = {j: AShareVec(sess.k, zero[:], zero[:]) for j in (1, 2, 3)}
    views[prev_party(sess.party)] = AShareVec(sess.k, mine_prev, zero[:])
    views[sess.party] = AShareVec(sess.k, zero[:], mine_next)

    folded = xor_shares(sess, views[1], views[2])
    return xor_shares(sess, folded, views[3])
