import random

import pytest

from sq8mpc import arith
from sq8mpc.harness import run_parties

SEED = b"sq8mpc-test-seed-0123456789abcdef"


def share_vec(sess, owner, values):
    """Owner-side/receiver-side input sharing in one call."""
    if sess.party == owner:
        return arith.input_share(sess, owner, values)
    return arith.input_share(sess, owner, None, n=len(values))


@pytest.fixture
def parties():
    """run_parties with a fixed master seed unless overridden."""

    def run(fn, k, **kw):
        kw.setdefault("master_seed", SEED)
        return run_parties(fn, k, **kw)

    return run


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
