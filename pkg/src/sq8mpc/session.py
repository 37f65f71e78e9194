"""Per-party protocol state: identity, ring width, pairwise PRGs, transport.

A session is single-threaded with respect to protocol sequencing; separate
sessions may run concurrently.
"""

from __future__ import annotations

import os
import random
from enum import Enum

from .errors import ConfigError
from .prg import Prg, derive_seed
from .ring import Ring, check_session_width
from .transport import PartyHub, next_party, prev_party

SEED_BYTES = 32
DABIT_BATCH = 1024


class TruncMode(Enum):
    PROBABILISTIC = "prob"
    EXACT = "exact"


class PartySession:
    """One party's view of a live three-party computation."""

    def __init__(
        self,
        hub: PartyHub,
        k: int,
        mode: TruncMode = TruncMode.EXACT,
        master_seed: bytes | None = None,
        dabit_batch: int = DABIT_BATCH,
    ):
        self.hub = hub
        self.party = hub.party
        self.ring = Ring(check_session_width(k))
        self.k = k
        self.mode = mode
        self.dabit_batch = dabit_batch
        self._dabit_pool = None  # lazily created by the binary module

        if master_seed is not None:
            # Reproducible mode: every party derives the same pairwise seeds
            # locally, so setup needs no traffic and transcripts are fixed.
            seed_next = derive_seed(master_seed, f"pair-{self.party}")
            seed_prev = derive_seed(master_seed, f"pair-{prev_party(self.party)}")
            own = derive_seed(master_seed, f"party-{self.party}")
            self.rng = random.Random(own)
        else:
            seed_next = os.urandom(SEED_BYTES)
            got = self.hub.step({self.hub.next_peer: seed_next},
                                [self.hub.prev_peer])
            seed_prev = got[self.hub.prev_peer]
            if len(seed_prev) != SEED_BYTES:
                raise ConfigError("bad pairwise seed length")
            self.rng = random.SystemRandom()

        self._seed_next = seed_next
        self._seed_prev = seed_prev
        self._prgs: dict[tuple[str, str], Prg] = {}

    # --- pairwise streams -------------------------------------------------

    def prg(self, domain: str, side: str) -> Prg:
        """Stream shared with the next ('next') or previous ('prev') party."""
        key = (domain, side)
        if key not in self._prgs:
            seed = self._seed_next if side == "next" else self._seed_prev
            self._prgs[key] = Prg(seed, domain.encode())
        return self._prgs[key]

    def zero_elements(self, n: int) -> list[int]:
        """This party's component of a fresh additive sharing of zero."""
        a = self.prg("zero-arith", "next").draw_elements(n, self.ring)
        b = self.prg("zero-arith", "prev").draw_elements(n, self.ring)
        mask = self.ring.mask
        return [(x - y) & mask for x, y in zip(a, b)]

    def zero_bitmask(self, nbits: int) -> int:
        """XOR-sharing-of-zero component over Z_2, nbits wide."""
        a = self.prg("zero-bin", "next").draw_bitmask(nbits)
        b = self.prg("zero-bin", "prev").draw_bitmask(nbits)
        return a ^ b

    def pair_elements(self, domain: str, side: str, n: int) -> list[int]:
        return self.prg(domain, side).draw_elements(n, self.ring)

    def pair_bits(self, domain: str, side: str, nbits: int) -> int:
        return self.prg(domain, side).draw_bitmask(nbits)

    # --- convenience ------------------------------------------------------

    @property
    def stats(self):
        return self.hub.stats

    def rand_element(self) -> int:
        return self.rng.getrandbits(self.k) & self.ring.mask

    def rand_elements(self, n: int) -> list[int]:
        g = self.rng.getrandbits
        mask = self.ring.mask
        return [g(self.k) & mask for _ in range(n)]

    def close(self) -> None:
        self.hub.close()


def make_local_sessions(
    k: int,
    mode: TruncMode = TruncMode.EXACT,
    master_seed: bytes | None = None,
    timeout: float = 60.0,
    dabit_batch: int = DABIT_BATCH,
) -> dict[int, PartySession]:
    """Three sessions over the in-process mesh (run-local and tests).

    Always seeds deterministically (a fresh random master if none is given):
    constructing three sessions from one thread must not block on a seed
    exchange, and a single process holds all shares anyway.
    """
    from .transport import local_mesh

    if master_seed is None:
        master_seed = os.urandom(SEED_BYTES)
    hubs = local_mesh(timeout=timeout)
    return {
        p: PartySession(hubs[p], k, mode, master_seed, dabit_batch)
        for p in sorted(hubs)
    }


__all__ = [
    "PartySession",
    "TruncMode",
    "make_local_sessions",
    "DABIT_BATCH",
    "next_party",
]
