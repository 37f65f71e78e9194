"""SQ8 model container: self-describing serialized format for quantized
CNNs, loader/validator, JSON debug dump, and sharing-time preparation.

On-disk layout (all little-endian):

    magic "SQ8\\0" | u16 version | u16 flags | u16 k_min | u8 L | u8 ndim
    input dims (u32 * ndim) | u32 n_tensors | u32 n_layers
    tensor table | layer table | raw data section

Tensor entry: u8 role | u8 ndim | u32 dims[] | f64 scale | i32 zero_point
| u64 data_offset | u64 data_len.  Layer entry: u8 kind | u8 padding |
u8 stride_h | u8 stride_w | u8 filter_h | u8 filter_w | u8 depth_mult |
u8 clamp_lo | u8 clamp_hi | u32 input | u32 weights | u32 bias |
u32 output | u32 m_prime | i8 shift_n.

Scales are stored as IEEE-754 doubles together with the derived
(m_prime, n) pair, so the runtime never re-derives floating values.
Flag bit 0 marks a public (stripped) model: geometry only, secrets
zeroed, raw data absent.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from . import geometry
from .errors import ModelFormatError, ShapeError
from .quantops import FixedMultiplier, QuantParams, normalize_multiplier

MAGIC = b"SQ8\0"
IMAGE_MAGIC = b"SQ8I"
SHARE_MAGIC = b"SQ8S"
GOLDEN_MAGIC = b"SQ8G"
VERSION = 1
FLAG_PUBLIC = 1
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
POOL_KINDS = (LayerKind.AVERAGE_POOL_2D, LayerKind.MAX_POOL_2D)


@dataclass
class TensorSpec:
    role: Role
    shape: tuple[int, ...]
    scale: float
    zero_point: int
    data: np.ndarray | None = None  # uint8 for weights, int32 for bias

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def quant(self) -> QuantParams:
        return QuantParams(self.scale, self.zero_point)


@dataclass
class LayerSpec:
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
    multiplier: FixedMultiplier | None = None


@dataclass
class Sq8Model:
    tensors: list[TensorSpec]
    layers: list[LayerSpec]
    input_tensor: int = 0
    public: bool = False
    ell_bound: int = field(default=0)   # L, max multiplier shift
    k_min: int = field(default=0)

    def conv_layers(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind in CONV_KINDS]

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.tensors[self.input_tensor].shape


def derived_bounds(model: Sq8Model) -> tuple[int, int]:
    """(L, k_min) recomputed from the layer table.

    k_min follows the accumulator budget: 16-bit products, log2(N) window
    growth, the 32-bit multiplier, the secret-shift gap L - ell, and one
    bit for the rounding constant.
    """
    ells = [model.layers[i].multiplier.ell for i in model.conv_layers()]
    bound = max(ells) if ells else 0
    widths = [16]
    for i in model.conv_layers():
        layer = model.layers[i]
        n = _window_length(model, layer)
        widths.append(
            16 + max(0, math.ceil(math.log2(n))) + 32
            + (bound - layer.multiplier.ell) + 1
        )
    return bound, max(widths)


def finalize(model: Sq8Model) -> Sq8Model:
    """Fill the derived header fields (L, k_min) from the layer table."""
    model.ell_bound, model.k_min = derived_bounds(model)
    return model


def _window_length(model: Sq8Model, layer: LayerSpec) -> int:
    wshape = model.tensors[layer.weights].shape
    if layer.kind == LayerKind.CONV_2D:
        return wshape[1] * wshape[2] * wshape[3]
    if layer.kind == LayerKind.DEPTHWISE_CONV_2D:
        return wshape[1] * wshape[2]
    return wshape[1]  # fully connected


# --- serialization -----------------------------------------------------------


def serialize(model: Sq8Model) -> bytes:
    out = bytearray()
    flags = FLAG_PUBLIC if model.public else 0
    ishape = model.input_shape
    out += MAGIC
    out += struct.pack("<HHHBB", VERSION, flags, model.k_min,
                       model.ell_bound, len(ishape))
    out += struct.pack(f"<{len(ishape)}I", *ishape)
    out += struct.pack("<II", len(model.tensors), len(model.layers))

    data = bytearray()
    for t in model.tensors:
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

    for l in model.layers:
        m = l.multiplier
        out += _LAYER.pack(
            int(l.kind), int(l.same_padding), l.stride[0], l.stride[1],
            l.filter[0], l.filter[1], l.depth_multiplier,
            l.clamp[0], l.clamp[1],
            l.input,
            NO_TENSOR if l.weights is None else l.weights,
            NO_TENSOR if l.bias is None else l.bias,
            l.output,
            m.m_prime if m else 0, m.n if m else 0,
        )
    return bytes(out) + bytes(data)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: struct.Struct | str):
        s = fmt if isinstance(fmt, struct.Struct) else struct.Struct(fmt)
        if self.pos + s.size > len(self.buf):
            raise ModelFormatError("truncated model file")
        vals = s.unpack_from(self.buf, self.pos)
        self.pos += s.size
        return vals


def load(blob: bytes, validate_model: bool = True) -> Sq8Model:
    r = _Reader(blob)
    (magic,) = r.take("<4s")
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}")
    version, flags, k_min, ell_bound, ndim = r.take("<HHHBB")
    if version != VERSION:
        raise ModelFormatError(f"unsupported SQ8 version {version}")
    ishape = tuple(r.take(f"<{ndim}I"))
    n_tensors, n_layers = r.take("<II")
    public = bool(flags & FLAG_PUBLIC)

    entries = []
    for _ in range(n_tensors):
        role, td = r.take(_TENSOR_HEAD)
        shape = tuple(r.take(f"<{td}I"))
        scale, zp, off, ln = r.take(_TENSOR_TAIL)
        entries.append((Role(role), shape, scale, zp, off, ln))

    layers = []
    for _ in range(n_layers):
        (kind, same, sh, sw, fh, fw, dm, clo, chi,
         tin, tw, tb, tout, mp, n) = r.take(_LAYER)
        layers.append(LayerSpec(
            kind=LayerKind(kind), input=tin,
            weights=None if tw == NO_TENSOR else tw,
            bias=None if tb == NO_TENSOR else tb,
            output=tout, stride=(sh, sw), filter=(fh, fw),
            same_padding=bool(same), depth_multiplier=dm,
            clamp=(clo, chi),
            multiplier=FixedMultiplier(mp, n) if mp else None,
        ))

    data = blob[r.pos:]
    tensors = []
    for role, shape, scale, zp, off, ln in entries:
        arr = None
        if ln:
            if off + ln > len(data):
                raise ModelFormatError("tensor data outside data section")
            raw = data[off : off + ln]
            if role == Role.WEIGHTS_U8:
                arr = np.frombuffer(raw, dtype=np.uint8).reshape(shape).copy()
            elif role == Role.BIAS_I32:
                arr = np.frombuffer(raw, dtype="<i4").reshape(shape).copy()
            else:
                raise ModelFormatError("activation tensor carries data")
        tensors.append(TensorSpec(role, shape, scale, zp, arr))

    model = Sq8Model(tensors, layers, input_tensor=0, public=public,
                     ell_bound=ell_bound, k_min=k_min)
    if ishape != model.input_shape:
        raise ModelFormatError("header input shape disagrees with tensor 0")
    if validate_model:
        validate(model)
    return model


# --- validation --------------------------------------------------------------


def _fail(what: str) -> ModelFormatError:
    return ModelFormatError(what)


def infer_shapes(model: Sq8Model) -> dict[int, tuple[int, ...]]:
    """Walk the layer list, checking geometry; returns activation shapes."""
    shapes: dict[int, tuple[int, ...]] = {
        model.input_tensor: model.input_shape
    }
    for li, layer in enumerate(model.layers):
        if layer.input not in shapes:
            raise _fail(f"layer {li}: input tensor {layer.input} not yet produced"
                        " (topology violation)")
        in_shape = shapes[layer.input]
        refs = [layer.input] + [t for t in (layer.weights, layer.bias)
                                if t is not None]
        if any(t >= layer.output for t in refs):
            raise _fail(f"layer {li}: output tensor must come after its inputs")
        if layer.output in shapes:
            raise _fail(f"layer {li}: tensor {layer.output} produced twice")

        wt = model.tensors[layer.weights] if layer.weights is not None else None
        if layer.kind == LayerKind.CONV_2D:
            if len(in_shape) != 3 or len(wt.shape) != 4:
                raise _fail(f"layer {li}: conv needs HWC input and OHWI weights")
            if wt.shape[3] != in_shape[2]:
                raise _fail(f"layer {li}: weight depth {wt.shape[3]} != input"
                            f" channels {in_shape[2]}")
            _, out_shape = geometry.conv_windows(
                in_shape, wt.shape[0], (wt.shape[1], wt.shape[2]),
                layer.stride, layer.same_padding)
        elif layer.kind == LayerKind.DEPTHWISE_CONV_2D:
            if wt.shape[0] != 1:
                raise _fail(f"layer {li}: depthwise weights must be 1HWC")
            if layer.depth_multiplier < 1:
                raise _fail(f"layer {li}: bad depth multiplier")
            if wt.shape[3] != in_shape[2] * layer.depth_multiplier:
                raise _fail(f"layer {li}: depthwise weight channels mismatch")
            _, out_shape = geometry.depthwise_windows(
                in_shape, layer.depth_multiplier,
                (wt.shape[1], wt.shape[2]), layer.stride, layer.same_padding)
        elif layer.kind == LayerKind.FULLY_CONNECTED:
            in_len = int(np.prod(in_shape))
            if len(wt.shape) != 2 or wt.shape[1] != in_len:
                raise _fail(f"layer {li}: fc weight shape {wt.shape} vs input"
                            f" length {in_len}")
            out_shape = (wt.shape[0],)
        elif layer.kind in POOL_KINDS:
            if len(in_shape) != 3:
                raise _fail(f"layer {li}: pooling needs HWC input")
            _, out_shape = geometry.pool_windows(
                in_shape, layer.filter, layer.stride, layer.same_padding)
        elif layer.kind == LayerKind.RESHAPE:
            out_shape = model.tensors[layer.output].shape
            if int(np.prod(out_shape)) != int(np.prod(in_shape)):
                raise _fail(f"layer {li}: reshape changes element count")
        elif layer.kind == LayerKind.ARGMAX_OUTPUT:
            if li != len(model.layers) - 1:
                raise _fail("argmax must be the final layer")
            out_shape = (1,)
        else:
            raise _fail(f"layer {li}: unknown kind {layer.kind}")

        declared = model.tensors[layer.output].shape
        if layer.kind != LayerKind.ARGMAX_OUTPUT and tuple(out_shape) != declared:
            raise _fail(f"layer {li}: inferred output shape {tuple(out_shape)}"
                        f" != declared {declared}")
        shapes[layer.output] = tuple(out_shape)
    return shapes


def validate(model: Sq8Model) -> None:
    """All load-time invariants; each violation is a distinct diagnostic."""
    if not model.layers:
        raise _fail("model has no layers")
    t0 = model.tensors[model.input_tensor]
    if t0.role != Role.ACTIVATION:
        raise _fail("tensor 0 must be the input activation")

    for ti, t in enumerate(model.tensors):
        if any(d <= 0 for d in t.shape):
            raise _fail(f"tensor {ti}: non-positive dimension")
        if t.role == Role.BIAS_I32:
            if t.zero_point != 0:
                raise _fail(f"tensor {ti}: bias zero point must be 0")
        elif not model.public:
            t.quant()  # raises on invalid scale / zero point

    infer_shapes(model)

    for li, layer in enumerate(model.layers):
        lo, hi = layer.clamp
        if not (0 <= lo <= hi <= 255):
            raise _fail(f"layer {li}: clamp range [{lo}, {hi}] invalid")
        if layer.kind in CONV_KINDS:
            if layer.weights is None:
                raise _fail(f"layer {li}: missing weights")
            if layer.multiplier is None and not model.public:
                raise _fail(f"layer {li}: missing output multiplier")
            if model.tensors[layer.weights].role != Role.WEIGHTS_U8:
                raise _fail(f"layer {li}: weight tensor role mismatch")
            if not model.public:
                _check_scales(model, li, layer)
        if layer.kind in POOL_KINDS:
            if layer.filter[0] < 1 or layer.filter[1] < 1:
                raise _fail(f"layer {li}: pooling filter unset")
            tin, tout = model.tensors[layer.input], model.tensors[layer.output]
            # Pooling compares/averages raw quantized values, which is only
            # meaningful under one set of quantization parameters.
            if not model.public and (tin.scale, tin.zero_point) != (
                    tout.scale, tout.zero_point):
                raise _fail(f"layer {li}: pooling must preserve quantization"
                            " parameters")

    if not model.public:
        bound, k_min = derived_bounds(model)
        if model.ell_bound != bound:
            raise _fail(f"header L={model.ell_bound} != max layer shift {bound}")
        if model.k_min != k_min:
            raise _fail(f"header k_min={model.k_min} != computed {k_min}")


def _check_scales(model: Sq8Model, li: int, layer: LayerSpec) -> None:
    m1 = model.tensors[layer.input].scale
    m2 = model.tensors[layer.weights].scale
    m3 = model.tensors[layer.output].scale
    if layer.bias is not None:
        b = model.tensors[layer.bias]
        if b.role != Role.BIAS_I32:
            raise _fail(f"layer {li}: bias tensor role mismatch")
        if b.scale != m1 * m2:
            raise _fail(
                f"layer {li}: bias scale {b.scale!r} != input*weight scale"
                f" {m1 * m2!r} (bias-scale violation)"
            )
    m = (m1 * m2) / m3
    want = normalize_multiplier(m)
    if layer.multiplier != want:
        raise _fail(
            f"layer {li}: stored multiplier {layer.multiplier} does not match"
            f" scales (expected {want})"
        )


# --- JSON debug dump ---------------------------------------------------------


def to_json(model: Sq8Model) -> dict:
    """Lossless dump except raw tensor data, which is base64."""
    return {
        "format": "sq8",
        "version": VERSION,
        "public": model.public,
        "k_min": model.k_min,
        "ell_bound": model.ell_bound,
        "input_tensor": model.input_tensor,
        "tensors": [
            {
                "id": i,
                "role": t.role.name,
                "shape": list(t.shape),
                "scale": t.scale,
                "zero_point": t.zero_point,
                "data_b64": (
                    base64.b64encode(
                        t.data.astype(
                            np.uint8 if t.role == Role.WEIGHTS_U8 else "<i4"
                        ).tobytes()
                    ).decode()
                    if t.data is not None else None
                ),
            }
            for i, t in enumerate(model.tensors)
        ],
        "layers": [
            {
                "id": i,
                "kind": l.kind.name,
                "input": l.input,
                "weights": l.weights,
                "bias": l.bias,
                "output": l.output,
                "stride": list(l.stride),
                "filter": list(l.filter),
                "padding": "SAME" if l.same_padding else "VALID",
                "depth_multiplier": l.depth_multiplier,
                "clamp": list(l.clamp),
                "m_prime": l.multiplier.m_prime if l.multiplier else None,
                "shift_n": l.multiplier.n if l.multiplier else None,
            }
            for i, l in enumerate(model.layers)
        ],
    }


def strip_secrets(model: Sq8Model) -> Sq8Model:
    """Public counterpart: geometry, clamp ranges and L survive; scales,
    zero points, multipliers and raw data are removed."""
    tensors = [
        TensorSpec(t.role, t.shape, 0.0, 0, None) for t in model.tensors
    ]
    layers = [replace(l, multiplier=None) for l in model.layers]
    return Sq8Model(
        tensors, layers, model.input_tensor, public=True,
        ell_bound=model.ell_bound, k_min=model.k_min,
    )


# --- input images ------------------------------------------------------------


def write_image(shape: tuple[int, ...], data: np.ndarray) -> bytes:
    arr = np.asarray(data, dtype=np.uint8).reshape(-1)
    if arr.size != int(np.prod(shape)):
        raise ShapeError("image data does not match shape")
    head = IMAGE_MAGIC + struct.pack("<I", len(shape))
    head += struct.pack(f"<{len(shape)}I", *shape)
    return head + arr.tobytes()


def read_image(blob: bytes) -> tuple[tuple[int, ...], np.ndarray]:
    if blob[:4] != IMAGE_MAGIC:
        raise ModelFormatError("bad SQ8I magic")
    (nd,) = struct.unpack_from("<I", blob, 4)
    shape = struct.unpack_from(f"<{nd}I", blob, 8)
    data = np.frombuffer(blob, dtype=np.uint8, offset=8 + 4 * nd)
    if data.size != int(np.prod(shape)):
        raise ModelFormatError("SQ8I payload size mismatch")
    return tuple(shape), data.reshape(shape).copy()


__all__ = [
    "Sq8Model", "TensorSpec", "LayerSpec", "Role", "LayerKind",
    "serialize", "load", "validate", "finalize", "to_json",
    "strip_secrets", "write_image", "read_image",
    "MAGIC", "VERSION", "CONV_KINDS", "POOL_KINDS",
]
