"""Programmatically generated SQ8 models and images for tests, benches
and documentation; no converter or external model files needed."""

from __future__ import annotations

import random

import numpy as np

from .model import (
    LayerKind,
    LayerSpec,
    Role,
    Sq8Model,
    TensorSpec,
    finalize,
    validate,
)
from .quantops import normalize_multiplier


def _act(shape, scale, zp):
    return TensorSpec(Role.ACTIVATION, tuple(shape), scale, zp)


def _weights(rng, shape, scale, zp):
    data = np.asarray(
        [rng.randrange(256) for _ in range(int(np.prod(shape)))],
        dtype=np.uint8,
    ).reshape(shape)
    return TensorSpec(Role.WEIGHTS_U8, tuple(shape), scale, zp, data)


def _bias(rng, n, scale, magnitude=1 << 11):
    data = np.asarray(
        [rng.randint(-magnitude, magnitude) for _ in range(n)], dtype=np.int32
    )
    return TensorSpec(Role.BIAS_I32, (n,), scale, 0, data)


def _mult(m1, m2, m3):
    return normalize_multiplier((m1 * m2) / m3)


def fixture_model(seed: int = 0) -> Sq8Model:
    """conv(3x3x8, ReLU) -> maxpool(2x2) -> conv(3x3x16) -> reshape ->
    fc(10) -> argmax, on an 8x8x3 input, with randomized valid quant
    parameters and random weights."""
    rng = random.Random(seed)

    def scale(lo, hi):
        return rng.uniform(lo, hi)

    # Rescale multipliers sized to the random accumulators' spread, so
    # activations land mid-range instead of pinned at the clamp rails:
    # a window of N uniform products has rms about 5400*sqrt(N).
    m_in, z_in = scale(0.01, 0.05), rng.randint(90, 160)
    w1, zw1 = scale(0.004, 0.02), rng.randint(100, 156)
    z_c1 = rng.randint(90, 160)
    target1 = scale(0.6, 1.4) * 40 / (5400 * 27 ** 0.5)
    m_c1 = (m_in * w1) / target1

    w2, zw2 = scale(0.004, 0.02), rng.randint(100, 156)
    z_c2 = rng.randint(90, 160)
    target2 = scale(0.6, 1.4) * 40 / (2900 * 72 ** 0.5)
    m_c2 = (m_c1 * w2) / target2

    wf, zwf = scale(0.004, 0.02), rng.randint(100, 156)
    z_fc = rng.randint(90, 160)
    target3 = scale(0.6, 1.4) * 40 / (2900 * 16 ** 0.5)
    m_fc = (m_c2 * wf) / target3

    tensors = [
        _act((8, 8, 3), m_in, z_in),              # 0 input
        _weights(rng, (8, 3, 3, 3), w1, zw1),     # 1
        _bias(rng, 8, m_in * w1),                 # 2
        _act((6, 6, 8), m_c1, z_c1),              # 3 conv1 out
        _act((3, 3, 8), m_c1, z_c1),              # 4 pool out
        _weights(rng, (16, 3, 3, 8), w2, zw2),    # 5
        _bias(rng, 16, m_c1 * w2),                # 6
        _act((1, 1, 16), m_c2, z_c2),             # 7 conv2 out
        _act((16,), m_c2, z_c2),                  # 8 reshape out
        _weights(rng, (10, 16), wf, zwf),         # 9
        _bias(rng, 10, m_c2 * wf),                # 10
        _act((10,), m_fc, z_fc),                  # 11 fc out
        _act((1,), 1.0, 0),                       # 12 label
    ]
    layers = [
        LayerSpec(LayerKind.CONV_2D, input=0, weights=1, bias=2, output=3,
                  stride=(1, 1), clamp=(z_c1, 255),
                  multiplier=_mult(m_in, w1, m_c1)),
        LayerSpec(LayerKind.MAX_POOL_2D, input=3, output=4, stride=(2, 2),
                  filter=(2, 2)),
        LayerSpec(LayerKind.CONV_2D, input=4, weights=5, bias=6, output=7,
                  stride=(1, 1), multiplier=_mult(m_c1, w2, m_c2)),
        LayerSpec(LayerKind.RESHAPE, input=7, output=8),
        LayerSpec(LayerKind.FULLY_CONNECTED, input=8, weights=9, bias=10,
                  output=11, multiplier=_mult(m_c2, wf, m_fc)),
        LayerSpec(LayerKind.ARGMAX_OUTPUT, input=11, output=12),
    ]
    model = finalize(Sq8Model(tensors, layers))
    validate(model)
    return model


def fixture_minimal_fc(seed: int = 1) -> Sq8Model:
    """Single fully-connected layer plus argmax; the smallest valid model."""
    rng = random.Random(seed)
    m_in, z_in = 0.02, 128
    w, zw = 0.01, 120
    m_out, z_out = 0.05, 110
    tensors = [
        _act((4,), m_in, z_in),
        _weights(rng, (3, 4), w, zw),
        _bias(rng, 3, m_in * w),
        _act((3,), m_out, z_out),
        _act((1,), 1.0, 0),
    ]
    layers = [
        LayerSpec(LayerKind.FULLY_CONNECTED, input=0, weights=1, bias=2,
                  output=3, multiplier=_mult(m_in, w, m_out)),
        LayerSpec(LayerKind.ARGMAX_OUTPUT, input=3, output=4),
    ]
    model = finalize(Sq8Model(tensors, layers))
    validate(model)
    return model


def fixture_identity_1layer() -> Sq8Model:
    """Constant-weight 1x1 conv whose output is hand-computable.

    Scales are powers of two, the single weight dequantizes to exactly 1.0
    and the multiplier is exactly 0.5, so for a constant input q the
    output is round((q - 64) / 2) + 64 before clamping.
    """
    m_in, z_in = 0.25, 64
    w_scale, zw = 0.125, 100     # weight value 108 -> (108-100)*0.125 = 1.0
    m_out, z_out = 0.5, 64
    weights = np.full((1, 1, 1, 1), 108, dtype=np.uint8)
    tensors = [
        _act((2, 2, 1), m_in, z_in),
        TensorSpec(Role.WEIGHTS_U8, (1, 1, 1, 1), w_scale, zw, weights),
        _act((2, 2, 1), m_out, z_out),
        _act((1,), 1.0, 0),
    ]
    layers = [
        LayerSpec(LayerKind.CONV_2D, input=0, weights=1, output=2,
                  stride=(1, 1), multiplier=_mult(m_in, w_scale, m_out)),
        LayerSpec(LayerKind.ARGMAX_OUTPUT, input=2, output=3),
    ]
    model = finalize(Sq8Model(tensors, layers))
    validate(model)
    return model


def fixture_image(model: Sq8Model, seed: int = 0) -> np.ndarray:
    rng = random.Random(seed)
    shape = model.input_shape
    flat = [rng.randrange(256) for _ in range(int(np.prod(shape)))]
    return np.asarray(flat, dtype=np.uint8).reshape(shape)
