"""Standalone writer for the SQ8 container format (version 1).

Layout, little-endian: magic "SQ8\\0" | u16 version | u16 flags |
u16 k_min | u8 L | u8 ndim | input dims u32[] | u32 n_tensors |
u32 n_layers | tensor table | layer table | raw data.

Tensor entry: u8 role | u8 ndim | u32 dims[] | f64 scale | i32 zero_point
| u64 data_offset | u64 data_len.  Layer entry: u8 kind | u8 padding |
u8 stride_h | u8 stride_w | u8 filter_h | u8 filter_w | u8 depth_mult |
u8 clamp_lo | u8 clamp_hi | u32 input | u32 weights | u32 bias |
u32 output | u32 m_prime | i8 shift_n.

The engine re-derives every multiplier from the stored double scales and
rejects a file whose (m_prime, n) disagree, so the normalization here has
to match bit for bit: m = 2^{-n} m'' with m'' in [0.5, 1) via frexp, then
m' = floor(m'' * 2^31 + 0.5).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

MAGIC = b"SQ8\0"
IMAGE_MAGIC = b"SQ8I"
VERSION = 1
NO_TENSOR = 0xFFFFFFFF

_TENSOR_HEAD = struct.Struct("<BB")
_TENSOR_TAIL = struct.Struct("<diQQ")
_LAYER = struct.Struct("<BBBBBBBBBIIIIIb")


class Role(IntEnum):
    ACTIVATION = 0
    WEIGHTS_U8 = 1
    BIAS_I32 = 2


class LayerKind(IntEnum):
    CONV_2D = 1
    DEPTHWISE_CONV_2D = 2
    FULLY_CONNECTED = 3
    AVERAGE_POOL_2D = 4
    MAX_POOL_2D = 5
    RESHAPE = 6
    ARGMAX_OUTPUT = 7


CONV_KINDS = (LayerKind.CONV_2D, LayerKind.DEPTHWISE_CONV_2D,
              LayerKind.FULLY_CONNECTED)


@dataclass
class Tensor:
    role: Role
    shape: tuple[int, ...]
    scale: float
    zero_point: int
    data: np.ndarray | None = None
    source: int | None = None  # originating TFLite tensor index


@dataclass
class Layer:
    kind: LayerKind
    input: int
    output: int
    weights: int | None = None
    bias: int | None = None
    stride: tuple[int, int] = (1, 1)
    filter: tuple[int, int] = (0, 0)
    same_padding: bool = False
    depth_multiplier: int = 0
    clamp: tuple[int, int] = (0, 255)
    m_prime: int = 0
    shift_n: int = 0


@dataclass
class Graph:
    tensors: list[Tensor] = field(default_factory=list)
    layers: list[Layer] = field(default_factory=list)

    def add_tensor(self, t: Tensor) -> int:
        self.tensors.append(t)
        return len(self.tensors) - 1


def normalize_multiplier(m: float) -> tuple[int, int]:
    """(m_prime, n) with m = 2^{-n-31} * m_prime to 31 fractional bits."""
    if not 0.0 < m < 1.0:
        raise ValueError(f"multiplier {m} outside (0, 1)")
    frac, exp = math.frexp(m)
    return math.floor(frac * (1 << 31) + 0.5), -exp


def window_length(graph: Graph, layer: Layer) -> int:
    shape = graph.tensors[layer.weights].shape
    if layer.kind == LayerKind.CONV_2D:
        return shape[1] * shape[2] * shape[3]
    if layer.kind == LayerKind.DEPTHWISE_CONV_2D:
        return shape[1] * shape[2]
    return shape[1]


def derived_bounds(graph: Graph) -> tuple[int, int]:
    """(L, k_min): max multiplier shift and the ring-width headroom the
    engine will demand (16-bit products + log2 N + 32-bit multiplier +
    shift gap + rounding bit)."""
    ells = [l.shift_n + 31 for l in graph.layers if l.kind in CONV_KINDS]
    bound = max(ells) if ells else 0
    widths = [16]
    for layer in graph.layers:
        if layer.kind not in CONV_KINDS:
            continue
        n = window_length(graph, layer)
        widths.append(
            16 + max(0, math.ceil(math.log2(n))) + 32
            + (bound - (layer.shift_n + 31)) + 1
        )
    return bound, max(widths)


def serialize(graph: Graph) -> bytes:
    bound, k_min = derived_bounds(graph)
    ishape = graph.tensors[0].shape
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HHHBB", VERSION, 0, k_min, bound, len(ishape))
    out += struct.pack(f"<{len(ishape)}I", *ishape)
    out += struct.pack("<II", len(graph.tensors), len(graph.layers))

    data = bytearray()
    for t in graph.tensors:
        out += _TENSOR_HEAD.pack(int(t.role), len(t.shape))
        out += struct.pack(f"<{len(t.shape)}I", *t.shape)
        if t.data is not None:
            raw = t.data.astype(
                np.uint8 if t.role == Role.WEIGHTS_U8 else "<i4"
            ).tobytes()
            off, ln = len(data), len(raw)
            data += raw
        else:
            off = ln = 0
        out += _TENSOR_TAIL.pack(t.scale, t.zero_point, off, ln)

    for l in graph.layers:
        out += _LAYER.pack(
            int(l.kind), int(l.same_padding), l.stride[0], l.stride[1],
            l.filter[0], l.filter[1], l.depth_multiplier,
            l.clamp[0], l.clamp[1],
            l.input,
            NO_TENSOR if l.weights is None else l.weights,
            NO_TENSOR if l.bias is None else l.bias,
            l.output,
            l.m_prime, l.shift_n,
        )
    return bytes(out) + bytes(data)


def write_image(data: np.ndarray) -> bytes:
    arr = np.asarray(data, dtype=np.uint8)
    head = IMAGE_MAGIC + struct.pack("<I", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.reshape(-1).tobytes()
