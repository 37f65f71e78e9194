import json
import random

import numpy as np
import pytest

from sq8mpc import arith, fixtures, sharing
from sq8mpc import model as sq8
from sq8mpc.errors import ConfigError, ModelFormatError


def test_minimal_fc_fixture_loads():
    m = fixtures.fixture_minimal_fc()
    blob = sq8.serialize(m)
    loaded = sq8.load(blob)
    assert len(loaded.layers) == 2
    assert loaded.layers[0].kind == sq8.LayerKind.FULLY_CONNECTED


def test_serialize_roundtrip_bit_identical():
    m = fixtures.fixture_model(seed=4)
    blob = sq8.serialize(m)
    again = sq8.serialize(sq8.load(blob))
    assert blob == again


def test_bad_magic_rejected():
    m = fixtures.fixture_model(seed=0)
    blob = bytearray(sq8.serialize(m))
    blob[:4] = b"NOPE"
    with pytest.raises(ModelFormatError, match="magic"):
        sq8.load(bytes(blob))


def test_bad_version_rejected():
    m = fixtures.fixture_model(seed=0)
    blob = bytearray(sq8.serialize(m))
    blob[4] = 99
    with pytest.raises(ModelFormatError, match="version"):
        sq8.load(bytes(blob))


def test_bias_scale_one_ulp_corruption_detected():
    m = fixtures.fixture_model(seed=0)
    bias = m.tensors[2]
    bias.scale = np.nextafter(bias.scale, 1.0)
    with pytest.raises(ModelFormatError, match="bias-scale"):
        sq8.validate(m)


def test_topology_violation_detected():
    m = fixtures.fixture_model(seed=0)
    m.layers[0].input = m.layers[0].output  # reads its own output
    with pytest.raises(ModelFormatError, match="topology|not yet produced"):
        sq8.validate(m)


def test_multiplier_mismatch_detected():
    m = fixtures.fixture_model(seed=0)
    bad = m.layers[0].multiplier
    m.layers[0].multiplier = sq8.FixedMultiplier(bad.m_prime + 1, bad.n)
    with pytest.raises(ModelFormatError, match="multiplier"):
        sq8.validate(m)


def test_clamp_range_validated():
    m = fixtures.fixture_model(seed=0)
    m.layers[0].clamp = (10, 5)
    with pytest.raises(ModelFormatError, match="clamp"):
        sq8.validate(m)


def test_json_dump_lossless_fields():
    m = fixtures.fixture_model(seed=2)
    doc = sq8.to_json(m)
    assert doc["k_min"] == m.k_min
    assert len(doc["tensors"]) == len(m.tensors)
    assert doc["layers"][0]["kind"] == "CONV_2D"
    assert doc["tensors"][1]["data_b64"] is not None
    json.dumps(doc)  # serializable


def test_image_roundtrip():
    m = fixtures.fixture_model(seed=0)
    img = fixtures.fixture_image(m, seed=3)
    blob = sq8.write_image(m.input_shape, img)
    shape, back = sq8.read_image(blob)
    assert shape == m.input_shape
    assert np.array_equal(back, img)


def test_share_model_reconstructs_plaintext():
    m = fixtures.fixture_model(seed=1)
    k = 72
    shares = sharing.share_model(m, k, random.Random(7))
    mask = (1 << k) - 1

    def reconstruct(section):
        vecs = [getattr(shares[p], section) for p in (1, 2, 3)]
        # components: P1 holds (x1, x2), P2 (x2, x3); duplicates must agree.
        assert vecs[0].c1 == vecs[1].c0
        assert vecs[1].c1 == vecs[2].c0
        assert vecs[2].c1 == vecs[0].c0
        return [
            (a + b + c) & mask
            for a, b, c in zip(vecs[0].c0, vecs[1].c0, vecs[2].c0)
        ]

    weights = reconstruct("weights")
    flat = []
    for t in m.tensors:
        if t.role == sq8.Role.WEIGHTS_U8:
            flat += [int(v) for v in t.data.reshape(-1)]
    assert weights == flat

    zps = reconstruct("zero_points")
    assert zps == [t.zero_point for t in m.tensors]

    pows = reconstruct("pow_shares")
    # Every layer's shared power opens to a power of two within the bound.
    for v in pows:
        assert v != 0 and (v & (v - 1)) == 0 and v <= (1 << m.ell_bound)

    biases = reconstruct("biases")
    flat_b = []
    for t in m.tensors:
        if t.role == sq8.Role.BIAS_I32:
            flat_b += [int(v) & mask for v in t.data.reshape(-1)]
    assert biases == flat_b


def test_share_counts_match_parameter_counts():
    m = fixtures.fixture_model(seed=1)
    shares = sharing.share_model(m, 72, random.Random(7))
    n_weights = sum(t.size for t in m.tensors if t.role == sq8.Role.WEIGHTS_U8)
    n_bias = sum(t.size for t in m.tensors if t.role == sq8.Role.BIAS_I32)
    for p in (1, 2, 3):
        assert len(shares[p].weights) == n_weights
        assert len(shares[p].biases) == n_bias
        assert len(shares[p].zero_points) == len(m.tensors)
        assert len(shares[p].m_primes) == len(m.conv_layers())
        assert len(shares[p].pow_shares) == len(m.conv_layers())


def test_share_file_roundtrip():
    m = fixtures.fixture_model(seed=5)
    shares = sharing.share_model(m, 72, random.Random(11))
    blob = sharing.dump_share(shares[2])
    back = sharing.load_share(blob)
    assert back.party == 2 and back.k == 72
    assert back.weights.c0 == shares[2].weights.c0
    assert back.pow_shares.c1 == shares[2].pow_shares.c1
    assert back.public.public
    assert back.public.k_min == m.k_min


def test_public_model_has_no_secrets():
    m = fixtures.fixture_model(seed=5)
    pub = sq8.strip_secrets(m)
    assert all(t.data is None for t in pub.tensors)
    assert all(t.scale == 0.0 and t.zero_point == 0 for t in pub.tensors)
    assert all(l.multiplier is None for l in pub.layers)
    # Geometry and clamp ranges survive.
    assert [l.kind for l in pub.layers] == [l.kind for l in m.layers]
    assert [l.clamp for l in pub.layers] == [l.clamp for l in m.layers]
    blob = sq8.serialize(pub)
    assert sq8.load(blob).public


def test_sharing_requires_headroom():
    m = fixtures.fixture_model(seed=0)
    with pytest.raises(ConfigError, match="headroom"):
        sharing.share_model(m, 32, random.Random(0))
