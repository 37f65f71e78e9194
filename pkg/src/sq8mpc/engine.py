"""Secure inference executor.

plan() lowers a model's public structure to index maps and a static round
budget before any communication happens; infer() walks the plan over a
live session.  Convolutions become gathered dot products (im2col index
maps reference the activation buffer, shares are never copied per
window), every layer's truncations run as one batch, and both clamp
comparisons share one adder batch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import arith, binary, geometry, quantops
from . import model as sq8
from .errors import ConfigError, ShapeError
from .session import PartySession, TruncMode
from .sharing import SharedModel

#: Extra width the engine requires beyond the model's own headroom: one
#: bit because truncation inputs must stay MSB-free and one because signed
#: accumulators are lifted by a public 2^{k-2} offset first.
SIGNED_MARGIN = 2


@dataclass
class LayerStep:
    layer_id: int
    kind: sq8.LayerKind
    in_tensor: int
    out_tensor: int
    out_len: int
    windows: list = field(default_factory=list)
    bias_map: list[int] | None = None
    weights_tensor: int | None = None
    bias_tensor: int | None = None
    clamp: tuple[int, int] = (0, 255)
    divisor_groups: list[tuple[int, list[int], list[list[int]]]] = field(
        default_factory=list
    )  # (divisor, output positions, windows)
    rounds: int = 0
    dabits: int = 0


@dataclass
class ExecutionPlan:
    k: int
    mode: TruncMode
    input_shape: tuple[int, ...]
    input_tensor: int
    ell_bound: int
    steps: list[LayerStep]
    rounds_estimate: int
    dabit_estimate: int


def _fold_levels(n: int) -> int:
    return max(0, math.ceil(math.log2(n))) if n > 1 else 0


def _msb_rounds(k: int) -> int:
    return 2 + _fold_levels(k - 1)


def _trunc_rounds(k: int, shift: int, mode: TruncMode) -> int:
    if mode is TruncMode.EXACT:
        return 4 + _fold_levels(shift)
    return 3


def _clamp_rounds(k: int) -> int:
    return _msb_rounds(k) + 2


def _tournament_rounds(k: int, width: int) -> int:
    return _fold_levels(width) * (_msb_rounds(k) + 2) if width > 1 else 0


def plan(
    public: sq8.Sq8Model, k: int, mode: TruncMode = TruncMode.EXACT
) -> ExecutionPlan:
    """Static lowering; headroom and shape failures surface here, before
    any communication."""
    if k < public.k_min + SIGNED_MARGIN:
        raise ConfigError(
            f"model headroom needs k >= {public.k_min + SIGNED_MARGIN}"
            f" (k_min {public.k_min} + {SIGNED_MARGIN} signed margin), got {k}"
        )
    shapes = sq8.infer_shapes(public)
    bound = public.ell_bound
    steps: list[LayerStep] = []
    rounds = 1  # input sharing
    dabits = 0

    for li, layer in enumerate(public.layers):
        in_shape = shapes[layer.input]
        step = LayerStep(
            layer_id=li, kind=layer.kind, in_tensor=layer.input,
            out_tensor=layer.output, out_len=int(np.prod(shapes[layer.output])),
            clamp=layer.clamp, weights_tensor=layer.weights,
            bias_tensor=layer.bias,
        )
        if layer.kind in sq8.CONV_KINDS:
            wt_shape = public.tensors[layer.weights].shape
            if layer.kind == sq8.LayerKind.CONV_2D:
                raw, out_shape = geometry.conv_windows(
                    in_shape, wt_shape[0], (wt_shape[1], wt_shape[2]),
                    layer.stride, layer.same_padding)
            elif layer.kind == sq8.LayerKind.DEPTHWISE_CONV_2D:
                raw, out_shape = geometry.depthwise_windows(
                    in_shape, layer.depth_multiplier,
                    (wt_shape[1], wt_shape[2]), layer.stride,
                    layer.same_padding)
            else:
                raw = geometry.fc_windows(int(np.prod(in_shape)), wt_shape[0])
                out_shape = (wt_shape[0],)
            # Padded positions contribute (z1 - z1) = 0; drop them.
            step.windows = [
                ([a for a in act if a >= 0],
                 [w for a, w in zip(act, wgt) if a >= 0])
                for act, wgt in raw
            ]
            n_out = out_shape[-1]
            if layer.bias is not None:
                step.bias_map = [i % n_out for i in range(len(step.windows))]
            step.rounds = (
                1                                   # dot
                + 2                                 # m' mul + power mul
                + _trunc_rounds(k, bound, mode)
                + _clamp_rounds(k)
            )
            step.dabits = (1 if mode is TruncMode.EXACT else 0) * step.out_len \
                + 2 * step.out_len
        elif layer.kind == sq8.LayerKind.MAX_POOL_2D:
            step.windows, _ = geometry.pool_windows(
                in_shape, layer.filter, layer.stride, layer.same_padding)
            wmax = max(len(w) for w in step.windows)
            step.rounds = _tournament_rounds(k, wmax)
            step.dabits = sum(len(w) - 1 for w in step.windows)
            if layer.clamp != (0, 255):
                step.rounds += _clamp_rounds(k)
                step.dabits += 2 * step.out_len
        elif layer.kind == sq8.LayerKind.AVERAGE_POOL_2D:
            windows, _ = geometry.pool_windows(
                in_shape, layer.filter, layer.stride, layer.same_padding)
            groups: dict[int, tuple[list[int], list[list[int]]]] = {}
            for pos, w in enumerate(windows):
                groups.setdefault(len(w), ([], []))
                groups[len(w)][0].append(pos)
                groups[len(w)][1].append(w)
            step.divisor_groups = [
                (d, pos, wins) for d, (pos, wins) in sorted(groups.items())
            ]
            step.rounds = len(step.divisor_groups) * _trunc_rounds(
                k, quantops.RECIP_BITS, mode)
            step.dabits = step.out_len if mode is TruncMode.EXACT else 0
            if layer.clamp != (0, 255):
                step.rounds += _clamp_rounds(k)
                step.dabits += 2 * step.out_len
        elif layer.kind == sq8.LayerKind.RESHAPE:
            step.rounds = 0
        elif layer.kind == sq8.LayerKind.ARGMAX_OUTPUT:
            width = int(np.prod(in_shape))
            step.rounds = _tournament_rounds(k, width) + 1
            step.dabits = max(0, width - 1)
        steps.append(step)
        rounds += step.rounds
        dabits += step.dabits

    return ExecutionPlan(
        k=k, mode=mode, input_shape=public.input_shape,
        input_tensor=public.input_tensor, ell_bound=bound, steps=steps,
        rounds_estimate=rounds, dabit_estimate=dabits,
    )


def _run_step(
    sess: PartySession,
    shared: SharedModel,
    pl: ExecutionPlan,
    step: LayerStep,
    bufs: dict[int, arith.AShareVec],
) -> int | None:
    """Execute one layer; returns the label for the argmax step."""
    x = bufs[step.in_tensor]
    if step.kind in sq8.CONV_KINDS:
        weights = shared.weight_slice(step.weights_tensor)
        z1 = shared.zero_point(step.in_tensor)
        z2 = shared.zero_point(step.weights_tensor)
        z3 = shared.zero_point(step.out_tensor)
        bias = (shared.bias_slice(step.bias_tensor)
                if step.bias_tensor is not None else None)
        s = quantops.conv_accumulate(
            sess, x, weights, z1, z2, step.windows, bias, step.bias_map)
        m_prime, pow_share = shared.layer_multiplier(step.layer_id)
        bufs[step.out_tensor] = quantops.output_stage(
            sess, s, m_prime, pow_share, z3, pl.ell_bound,
            step.clamp[0], step.clamp[1], mode=pl.mode)
        return None
    if step.kind == sq8.LayerKind.MAX_POOL_2D:
        out = quantops.max_pool(sess, x, step.windows)
        if step.clamp != (0, 255):
            out = binary.clamp(sess, out, *step.clamp)
        bufs[step.out_tensor] = out
        return None
    if step.kind == sq8.LayerKind.AVERAGE_POOL_2D:
        parts = [None] * step.out_len
        for divisor, positions, wins in step.divisor_groups:
            got = quantops.avg_pool(sess, x, wins, divisor, mode=pl.mode)
            for j, pos in enumerate(positions):
                parts[pos] = (got.c0[j], got.c1[j])
        out = arith.AShareVec(
            sess.k, [p[0] for p in parts], [p[1] for p in parts])
        if step.clamp != (0, 255):
            out = binary.clamp(sess, out, *step.clamp)
        bufs[step.out_tensor] = out
        return None
    if step.kind == sq8.LayerKind.RESHAPE:
        bufs[step.out_tensor] = bufs[step.in_tensor]
        return None
    if step.kind == sq8.LayerKind.ARGMAX_OUTPUT:
        return quantops.secure_argmax(sess, x)
    raise ConfigError(f"unsupported layer kind {step.kind}")


def _share_image(
    sess: PartySession, pl: ExecutionPlan, image: np.ndarray | None
) -> arith.AShareVec:
    n = int(np.prod(pl.input_shape))
    if sess.party == 1:
        if image is None:
            raise ShapeError("party 1 provides the input image")
        if tuple(image.shape) != pl.input_shape:
            raise ShapeError(
                f"image shape {tuple(image.shape)} != plan input {pl.input_shape}")
        vals = [int(v) for v in np.asarray(image, dtype=np.uint8).reshape(-1)]
        return arith.input_share(sess, 1, vals)
    return arith.input_share(sess, 1, None, n=n)


def infer(
    sess: PartySession,
    shared: SharedModel,
    pl: ExecutionPlan,
    image: np.ndarray | None,
) -> int:
    """Run the plan; every party returns the same public label index."""
    if sess.k != pl.k:
        raise ConfigError(f"plan built for k={pl.k}, session has k={sess.k}")
    bufs = {pl.input_tensor: _share_image(sess, pl, image)}
    label = None
    for step in pl.steps:
        got = _run_step(sess, shared, pl, step, bufs)
        if got is not None:
            label = got
    if label is None:
        label = quantops.secure_argmax(sess, bufs[pl.steps[-1].out_tensor])
    return label


def infer_with_stats(
    sess: PartySession,
    shared: SharedModel,
    pl: ExecutionPlan,
    image: np.ndarray | None,
) -> tuple[int, dict]:
    """infer() plus a structured per-layer traffic/timing report."""
    t_start = time.perf_counter()
    before = sess.stats.snapshot()
    bufs = {pl.input_tensor: _share_image(sess, pl, image)}
    label = None
    layers = []
    for step in pl.steps:
        b0, f0, r0 = sess.stats.snapshot()
        t0 = time.perf_counter()
        got = _run_step(sess, shared, pl, step, bufs)
        b1, f1, r1 = sess.stats.snapshot()
        layers.append({
            "layer": step.layer_id,
            "kind": step.kind.name,
            "bytes": b1 - b0,
            "frames": f1 - f0,
            "rounds": r1 - r0,
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        })
        if got is not None:
            label = got
    after = sess.stats.snapshot()
    total_rounds = after[2] - before[2]
    # Pool refills can only make the actual count undershoot the estimate.
    budget = pl.rounds_estimate + 2 * (pl.dabit_estimate // sess.dabit_batch + 1)
    if total_rounds > budget:
        raise ConfigError(
            f"round budget exceeded: {total_rounds} > static estimate {budget}")
    report = {
        "party": sess.party,
        "k": sess.k,
        "mode": pl.mode.value,
        "label": label,
        "bytes": after[0] - before[0],
        "frames": after[1] - before[1],
        "rounds": total_rounds,
        "rounds_budget": budget,
        "wall_ms": (time.perf_counter() - t_start) * 1e3,
        "layers": layers,
    }
    return label, report
