import random

import numpy as np
import pytest

from sq8mpc import arith, engine, fixtures, oracle, sharing
from sq8mpc import model as sq8
from sq8mpc.errors import ConfigError
from sq8mpc.session import TruncMode

K = 72
SEED = b"engine-test-seed-................"


def _shared(seed=0, k=K):
    m = fixtures.fixture_model(seed=seed)
    shares = sharing.share_model(m, k, random.Random(seed + 1000))
    return m, shares


def test_plan_pointwise_conv_window_is_channel_count():
    # 1x1 conv lowers to dots of length = input channels.
    m = fixtures.fixture_identity_1layer()
    pub = sq8.strip_secrets(m)
    pl = engine.plan(pub, K)
    conv = pl.steps[0]
    assert all(len(act) == 1 for act, _ in conv.windows)


def test_plan_depthwise_never_crosses_channels():
    rng = random.Random(0)
    tensors = [
        sq8.TensorSpec(sq8.Role.ACTIVATION, (4, 4, 3), 0.02, 100),
        sq8.TensorSpec(sq8.Role.WEIGHTS_U8, (1, 3, 3, 3), 0.01, 120,
                       np.asarray([rng.randrange(256) for _ in range(27)],
                                  dtype=np.uint8).reshape(1, 3, 3, 3)),
        sq8.TensorSpec(sq8.Role.ACTIVATION, (2, 2, 3), 0.04, 90),
        sq8.TensorSpec(sq8.Role.ACTIVATION, (1,), 1.0, 0),
    ]
    layers = [
        sq8.LayerSpec(sq8.LayerKind.DEPTHWISE_CONV_2D, input=0, weights=1,
                      output=2, depth_multiplier=1,
                      multiplier=sq8.FixedMultiplier(1 << 30, 2)),
        sq8.LayerSpec(sq8.LayerKind.ARGMAX_OUTPUT, input=2, output=3),
    ]
    m = sq8.finalize(sq8.Sq8Model(tensors, layers))
    pl = engine.plan(sq8.strip_secrets(m), K)
    step = pl.steps[0]
    # Window length is filter h*w (no channel summation), and all gathered
    # activation indices of one window agree on the channel.
    for act, _ in step.windows:
        assert len(act) == 9
        assert len({i % 3 for i in act}) == 1


def test_plan_counts_one_trunc_batch_per_conv_layer():
    m, shares = _shared(seed=0)
    pl = engine.plan(shares[1].public, K)
    stage_steps = [s for s in pl.steps if s.kind in sq8.CONV_KINDS]
    assert len(stage_steps) == 3  # conv, conv, fc: one truncation batch each
    two_conv = [s for s in stage_steps
                if s.kind != sq8.LayerKind.FULLY_CONNECTED]
    assert len(two_conv) == 2


def test_plan_rejects_insufficient_k():
    m, shares = _shared(seed=0)
    with pytest.raises(ConfigError, match="headroom"):
        engine.plan(shares[1].public, shares[1].public.k_min)


def test_infer_matches_oracle(parties):
    m, shares = _shared(seed=2)
    img = fixtures.fixture_image(m, seed=3)
    want, _ = oracle.reference_infer(m, img)
    pl = engine.plan(shares[1].public, K, TruncMode.EXACT)

    def proto(sess):
        return engine.infer(sess, shares[sess.party], pl,
                            img if sess.party == 1 else None)

    assert parties(proto, K) == [want] * 3


def test_constant_image_identity_model_analytic(parties):
    """Hand-computable: identity conv halves the offset from the common
    zero point 64, then argmax ties break to index 0."""
    m = fixtures.fixture_identity_1layer()
    shares = sharing.share_model(m, K, random.Random(5))
    img = np.full((2, 2, 1), 96, dtype=np.uint8)
    pl = engine.plan(shares[1].public, K, TruncMode.EXACT)

    label, acts = oracle.reference_infer(m, img)
    # (96-64)*1.0 real = 32*0.25 = 8.0 -> /0.5 + 64 = 80 quantized.
    assert acts[2].tolist() == [80, 80, 80, 80]
    assert label == 0

    def proto(sess):
        return engine.infer(sess, shares[sess.party], pl,
                            img if sess.party == 1 else None)

    assert parties(proto, K) == [0, 0, 0]


def test_exact_mode_transcripts_deterministic():
    from sq8mpc.harness import run_parties

    m, shares = _shared(seed=6)
    img = fixtures.fixture_image(m, seed=7)
    pl = engine.plan(shares[1].public, K, TruncMode.EXACT)

    def run_once():
        def proto(sess):
            label = engine.infer(sess, shares[sess.party], pl,
                                 img if sess.party == 1 else None)
            return label, sess.stats.transcript_digest()

        return run_parties(proto, K, master_seed=SEED)

    first, second = run_once(), run_once()
    assert first == second


def test_infer_with_stats_report(parties):
    jsonschema = pytest.importorskip("jsonschema")
    from sq8mpc.report import REPORT_SCHEMA

    m, shares = _shared(seed=1)
    img = fixtures.fixture_image(m, seed=2)
    pl = engine.plan(shares[1].public, K, TruncMode.EXACT)

    def proto(sess):
        return engine.infer_with_stats(sess, shares[sess.party], pl,
                                       img if sess.party == 1 else None)

    res = parties(proto, K)
    want, _ = oracle.reference_infer(m, img)
    for label, rep in res:
        assert label == want
        jsonschema.validate(rep, REPORT_SCHEMA)
        assert rep["rounds"] <= rep["rounds_budget"]
        assert len(rep["layers"]) == len(pl.steps)


def test_conv_bytes_independent_of_kernel_size(parties):
    """Same output count, different kernel footprint: identical traffic."""
    rng = random.Random(3)

    def build(kernel):
        kh, kw = kernel
        in_h = 4 + kh - 1  # VALID conv to a fixed 4x4x1 output
        in_w = 4 + kw - 1
        n_w = kh * kw
        tensors = [
            sq8.TensorSpec(sq8.Role.ACTIVATION, (in_h, in_w, 1), 0.02, 100),
            sq8.TensorSpec(sq8.Role.WEIGHTS_U8, (1, kh, kw, 1), 0.01, 120,
                           np.asarray([rng.randrange(256) for _ in range(n_w)],
                                      dtype=np.uint8).reshape(1, kh, kw, 1)),
            sq8.TensorSpec(sq8.Role.ACTIVATION, (4, 4, 1), 0.004, 90),
            sq8.TensorSpec(sq8.Role.ACTIVATION, (1,), 1.0, 0),
        ]
        layers = [
            sq8.LayerSpec(sq8.LayerKind.CONV_2D, input=0, weights=1, output=2,
                          multiplier=sq8.normalize_multiplier(0.02 * 0.01 / 0.004)),
            sq8.LayerSpec(sq8.LayerKind.ARGMAX_OUTPUT, input=2, output=3),
        ]
        return sq8.finalize(sq8.Sq8Model(tensors, layers))

    traffic = {}
    for kernel in ((1, 1), (3, 3), (5, 5)):
        m = build(kernel)
        shares = sharing.share_model(m, K, random.Random(9))
        pl = engine.plan(shares[1].public, K, TruncMode.EXACT)
        img = fixtures.fixture_image(m, seed=4)

        def proto(sess):
            before = sess.stats.total_bytes()
            s = pl.steps[0]
            bufs = {pl.input_tensor: engine._share_image(
                sess, pl, img if sess.party == 1 else None)}
            base = sess.stats.total_bytes()
            engine._run_step(sess, shares[sess.party], pl, s, bufs)
            return sess.stats.total_bytes() - base

        traffic[kernel] = parties(proto, K)
    assert traffic[(1, 1)] == traffic[(3, 3)] == traffic[(5, 5)]


def test_trunc_bytes_scale_linearly_with_output_count(parties):
    from sq8mpc import binary, trunc
    from conftest import share_vec

    sizes = {}
    for n in (32, 64, 128):
        def proto(sess, n=n):
            binary.take_dabits(sess, 1)  # fill the pool outside the window
            sh = share_vec(sess, 1, list(range(n)))
            before = sess.stats.total_bytes()
            trunc.trunc_exact(sess, sh, 4)
            return sess.stats.total_bytes() - before

        sizes[n] = sum(parties(proto, 32, dabit_batch=16384))
    r1 = sizes[64] / sizes[32]
    r2 = sizes[128] / sizes[64]
    assert 1.9 <= r1 <= 2.1 and 1.9 <= r2 <= 2.1


def test_k_mismatch_between_plan_and_session(parties):
    m, shares = _shared(seed=0)
    pl = engine.plan(shares[1].public, K, TruncMode.EXACT)

    def proto(sess):
        with pytest.raises(ConfigError, match="plan built for"):
            engine.infer(sess, shares[sess.party], pl, None)
        return True

    assert all(parties(proto, 80))
