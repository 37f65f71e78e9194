"""Cleartext references.

reference_infer evaluates an SQ8 model with integer-only arithmetic and
exactly the semantics the secure exact-mode path implements: 32-bit-safe
window accumulation, the full-width product with the 32-bit multiplier,
a single shift-with-round-half-up by ell, zero-point addition, clamping.
No floating point touches the inference path.

brute-force oracles provide exhaustive expected-value tables for small-k
protocol tests.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from . import geometry
from . import model as sq8
from .errors import ModelFormatError, ShapeError
from .quantops import RECIP_BITS


def _gather_matrix(flat: np.ndarray, windows, sentinel_val: int) -> np.ndarray:
    """(n_windows, window_len) int64 matrix; index -1 reads the sentinel."""
    ext = np.concatenate([flat.astype(np.int64), [sentinel_val]])
    idx = np.asarray([[i if i >= 0 else len(flat) for i in w] for w, _ in windows])
    return ext[idx]


def _stage(s_vals: list[int], m_prime: int, ell: int, z3: int,
           lo: int, hi: int) -> list[int]:
    half = 1 << (ell - 1)
    out = []
    for s in s_vals:
        t = m_prime * s  # exceeds 64 bits only in headroom, never wraps here
        y = (t + half) >> ell  # arithmetic shift: floor, so ties round up
        out.append(min(max(y + z3, lo), hi))
    return out


def reference_infer(
    model: sq8.Sq8Model, image: np.ndarray
) -> tuple[int, dict[int, np.ndarray]]:
    """(label, activations keyed by tensor id).  Deterministic and
    platform-independent: pure integer arithmetic throughout."""
    if model.public:
        raise ModelFormatError("reference inference needs the plaintext model")
    if tuple(image.shape) != model.input_shape:
        raise ShapeError(
            f"image shape {tuple(image.shape)} != model input {model.input_shape}"
        )
    acts: dict[int, np.ndarray] = {
        model.input_tensor: np.asarray(image, dtype=np.uint8).reshape(-1)
    }
    shapes = {model.input_tensor: model.input_shape}
    label = None

    for layer in model.layers:
        x = acts[layer.input]
        in_shape = shapes[layer.input]
        if layer.kind in sq8.CONV_KINDS:
            wt = model.tensors[layer.weights]
            z1 = model.tensors[layer.input].zero_point
            z2 = wt.zero_point
            z3 = model.tensors[layer.output].zero_point
            if layer.kind == sq8.LayerKind.CONV_2D:
                windows, out_shape = geometry.conv_windows(
                    in_shape, wt.shape[0], (wt.shape[1], wt.shape[2]),
                    layer.stride, layer.same_padding)
            elif layer.kind == sq8.LayerKind.DEPTHWISE_CONV_2D:
                windows, out_shape = geometry.depthwise_windows(
                    in_shape, layer.depth_multiplier,
                    (wt.shape[1], wt.shape[2]), layer.stride,
                    layer.same_padding)
            else:
                windows = geometry.fc_windows(len(x), wt.shape[0])
                out_shape = (wt.shape[0],)

            a = _gather_matrix(x, windows, z1) - z1
            wflat = wt.data.reshape(-1).astype(np.int64)
            widx = np.asarray([w for _, w in windows])
            b = wflat[widx] - z2
            s = (a * b).sum(axis=1)
            if layer.bias is not None:
                # Windows run (oy, ox, oc) row-major, so bias cycles with
                # the output-channel period.
                bias = model.tensors[layer.bias].data.reshape(-1).astype(np.int64)
                n_out = out_shape[-1]
                s = s + bias[np.arange(len(windows)) % n_out]
            mult = layer.multiplier
            vals = _stage(s.tolist(), mult.m_prime, mult.ell, z3, *layer.clamp)
            out = np.asarray(vals, dtype=np.uint8)
        elif layer.kind == sq8.LayerKind.MAX_POOL_2D:
            windows, out_shape = geometry.pool_windows(
                in_shape, layer.filter, layer.stride, layer.same_padding)
            out = np.asarray([max(int(x[i]) for i in w) for w in windows],
                             dtype=np.uint8)
            lo, hi = layer.clamp
            if (lo, hi) != (0, 255):
                out = np.clip(out, lo, hi)
        elif layer.kind == sq8.LayerKind.AVERAGE_POOL_2D:
            windows, out_shape = geometry.pool_windows(
                in_shape, layer.filter, layer.stride, layer.same_padding)
            vals = []
            for w in windows:
                total = sum(int(x[i]) for i in w)
                recip = ((1 << RECIP_BITS) + len(w) // 2) // len(w)
                vals.append((total * recip + (1 << (RECIP_BITS - 1)))
                            >> RECIP_BITS)
            lo, hi = layer.clamp
            out = np.asarray([min(max(v, lo), hi) for v in vals], dtype=np.uint8)
        elif layer.kind == sq8.LayerKind.RESHAPE:
            out = x.copy()
            out_shape = model.tensors[layer.output].shape
        elif layer.kind == sq8.LayerKind.ARGMAX_OUTPUT:
            label = int(np.argmax(x))  # first occurrence on ties
            out = np.asarray([label], dtype=np.int64)
            out_shape = (1,)
        else:
            raise ModelFormatError(f"unsupported layer kind {layer.kind}")
        acts[layer.output] = out.reshape(-1)
        shapes[layer.output] = tuple(out_shape)

    if label is None:
        final = acts[model.layers[-1].output]
        label = int(np.argmax(final))
    return label, acts


# --- golden activation dumps -------------------------------------------------


def dump_activations(acts: dict[int, np.ndarray]) -> bytes:
    """Documented binary dump: magic, entry count, then per tensor its id,
    byte length and raw little-endian data."""
    out = bytearray(sq8.GOLDEN_MAGIC)
    out += struct.pack("<I", len(acts))
    for tid in sorted(acts):
        raw = np.asarray(acts[tid]).astype("<i8").tobytes()
        out += struct.pack("<II", tid, len(raw))
        out += raw
    return bytes(out)


def load_activations(blob: bytes) -> dict[int, np.ndarray]:
    if blob[:4] != sq8.GOLDEN_MAGIC:
        raise ModelFormatError("bad golden dump magic")
    (count,) = struct.unpack_from("<I", blob, 4)
    pos = 8
    out = {}
    for _ in range(count):
        tid, ln = struct.unpack_from("<II", blob, pos)
        pos += 8
        out[tid] = np.frombuffer(blob, dtype="<i8", count=ln // 8, offset=pos)
        pos += ln
    return out


def content_digest(blob: bytes) -> str:
    """Short content hash used to address golden files by value."""
    return hashlib.sha256(blob).hexdigest()[:16]


# --- brute-force protocol oracles -------------------------------------------


def floor_div_table(k: int, m: int) -> list[int]:
    """floor(x / 2^m) for every x in [0, 2^k)."""
    _small(k)
    return [x >> m for x in range(1 << k)]


def msb_table(k: int) -> list[int]:
    _small(k)
    return [x >> (k - 1) for x in range(1 << k)]


def less_than_table(k: int) -> list[list[int]]:
    """table[a][b] = [a < b] over the comparison-safe range [0, 2^{k-1})."""
    _small(k)
    half = 1 << (k - 1)
    return [[1 if a < b else 0 for b in range(half)] for a in range(half)]


def clamp_table(k: int, lo: int, hi: int) -> list[int]:
    _small(k)
    return [min(max(x, lo), hi) for x in range(1 << k)]


def _small(k: int) -> None:
    if k > 16:
        raise ShapeError("brute-force oracles are for k <= 16")
