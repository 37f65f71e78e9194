"""Microbenchmarks: sum-of-products and truncation traffic.

Shares are dealt locally (no input rounds), so the measured bytes are the
protocol's own: a batch of dot products costs one element per party per
output regardless of term count, and the specialized truncation's traffic
grows linearly in k while the black-box one grows quadratically.
"""

from __future__ import annotations

import random
import time

from . import arith, trunc
from .arith import AShareVec
from .harness import run_parties
from .ring import Ring
from .sharing import _deal


def _dealt_vec(values: list[int], k: int, rng: random.Random
               ) -> dict[int, AShareVec]:
    dealt = _deal(values, Ring(k), rng)
    return {p: AShareVec(k, *dealt[p - 1]) for p in (1, 2, 3)}


def bench_sops(count: int, length: int, k: int, seed: int = 0) -> dict:
    """count dot products of `length` terms each; bytes per party and wall
    time for the batch."""
    rng = random.Random(seed)
    mask = (1 << k) - 1
    a = _dealt_vec([rng.getrandbits(k) & mask for _ in range(count * length)],
                   k, rng)
    b = _dealt_vec([rng.getrandbits(k) & mask for _ in range(count * length)],
                   k, rng)
    windows = [
        (list(range(i * length, (i + 1) * length)),) * 2 for i in range(count)
    ]

    def proto(sess):
        before = sess.stats.total_bytes()
        t0 = time.perf_counter()
        arith.dot_gather(sess, a[sess.party], b[sess.party], windows)
        return (sess.stats.total_bytes() - before,
                (time.perf_counter() - t0) * 1e3)

    res = run_parties(proto, k, master_seed=b"bench-sops" + bytes([seed % 256]) * 22)
    return {
        "count": count,
        "length": length,
        "k": k,
        "bytes_per_party": max(r[0] for r in res),
        "wall_ms": round(max(r[1] for r in res), 3),
    }


_PROTOS = {
    "pr": trunc.trunc_pr,
    "prsp": trunc.trunc_pr_sp,
    "exact": trunc.trunc_exact,
}


def bench_trunc(proto_name: str, k: int, count: int = 64, m: int = 4,
                seed: int = 0) -> dict:
    """One batch of `count` truncations by m at width k."""
    fn = _PROTOS[proto_name]
    rng = random.Random(seed)
    xs = [rng.getrandbits(k - 2) for _ in range(count)]
    shares = _dealt_vec(xs, k, rng)

    def proto(sess):
        before = sess.stats.total_bytes()
        t0 = time.perf_counter()
        fn(sess, shares[sess.party], m)
        return (sess.stats.total_bytes() - before,
                (time.perf_counter() - t0) * 1e3)

    res = run_parties(proto, k, master_seed=b"bench-trunc" + bytes([seed % 256]) * 21)
    return {
        "proto": proto_name,
        "k": k,
        "count": count,
        "bytes_per_party": max(r[0] for r in res),
        "bytes_total": sum(r[0] for r in res),
        "wall_ms": round(max(r[1] for r in res), 3),
    }
