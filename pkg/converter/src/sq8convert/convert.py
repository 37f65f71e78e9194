"""Quantized TFLite flatbuffer -> SQ8.

Supported op set: CONV_2D, DEPTHWISE_CONV_2D, FULLY_CONNECTED,
AVERAGE_POOL_2D, MAX_POOL_2D, RESHAPE, SOFTMAX.  The softmax is dropped
and replaced by a terminal argmax layer (exponentiation is monotone, the
label is unchanged).  Fused ReLU/ReLU6 activations become clamp ranges on
the producing layer.  int8-typed per-tensor models are normalized to the
uint8 convention by shifting stored values and zero points up by 128,
which leaves every (value - zero_point) difference untouched.

Per-channel quantized tensors, float tensors, dilated convolutions and
unrepresentable fused activations are rejected, never approximated.
"""

from __future__ import annotations

import numpy as np
from tensorflow.lite.python import schema_py_generated as tfl

from . import sq8format as sq8
from .sq8format import Graph, Layer, LayerKind, Role, Tensor

# TFLite schema constants (stable, part of the flatbuffer contract).
_FLOAT32, _INT32, _UINT8, _INT8 = 0, 2, 3, 9
_BUILTIN_NAMES = {
    0: "ADD", 1: "AVERAGE_POOL_2D", 2: "CONCATENATION", 3: "CONV_2D",
    4: "DEPTHWISE_CONV_2D", 9: "FULLY_CONNECTED", 14: "LOGISTIC",
    17: "MAX_POOL_2D", 18: "MUL", 22: "RESHAPE", 25: "SOFTMAX",
    34: "PAD", 40: "MEAN", 77: "SHAPE", 83: "PACK",
}
_ACT_NONE, _ACT_RELU, _ACT_RELU6 = 0, 1, 3
_PAD_SAME = 0


class ConversionError(ValueError):
    pass


def _fail(msg: str) -> ConversionError:
    return ConversionError(msg)


class _TflModel:
    def __init__(self, blob: bytes):
        self.model = tfl.Model.GetRootAsModel(blob, 0)
        if self.model.SubgraphsLength() != 1:
            raise _fail("only single-subgraph models are supported")
        self.sg = self.model.Subgraphs(0)

    def opcode(self, op) -> int:
        oc = self.model.OperatorCodes(op.OpcodeIndex())
        return max(oc.BuiltinCode(), oc.DeprecatedBuiltinCode())

    def tensor(self, idx):
        return self.sg.Tensors(idx)

    def tensor_name(self, idx) -> str:
        name = self.tensor(idx).Name()
        return name.decode() if name else f"tensor#{idx}"

    def buffer_data(self, idx) -> np.ndarray | None:
        buf = self.model.Buffers(self.tensor(idx).Buffer())
        if buf is None or buf.DataLength() == 0:
            return None
        return buf.DataAsNumpy()

    def quant(self, idx) -> tuple[float, int]:
        t = self.tensor(idx)
        q = t.Quantization()
        if q is None or q.ScaleLength() == 0:
            raise _fail(f"tensor {self.tensor_name(idx)} is not quantized")
        if q.ScaleLength() > 1:
            raise _fail(
                f"tensor {self.tensor_name(idx)} is per-channel quantized;"
                " only per-tensor models are supported"
            )
        return float(q.Scale(0)), int(q.ZeroPoint(0))

    def shape(self, idx) -> tuple[int, ...]:
        return tuple(int(d) for d in self.tensor(idx).ShapeAsNumpy())


def _strip_batch(shape: tuple[int, ...], name: str) -> tuple[int, ...]:
    if len(shape) > 1:
        if shape[0] != 1:
            raise _fail(f"{name}: batch dimension must be 1, got {shape[0]}")
        return shape[1:]
    return shape


def _options(op, cls):
    opt = cls()
    table = op.BuiltinOptions()
    opt.Init(table.Bytes, table.Pos)
    return opt


class _Converter:
    def __init__(self, blob: bytes):
        self.src = _TflModel(blob)
        self.graph = Graph()
        self.act_map: dict[int, int] = {}

    # --- tensor plumbing ----------------------------------------------------

    def _map_activation(self, idx: int) -> int:
        if idx in self.act_map:
            return self.act_map[idx]
        t = self.src.tensor(idx)
        dtype = t.Type()
        if dtype == _FLOAT32:
            raise _fail(f"float tensor {self.src.tensor_name(idx)} present;"
                        " quantize the model first")
        if dtype not in (_INT8, _UINT8):
            raise _fail(f"activation {self.src.tensor_name(idx)} has"
                        f" unsupported type {dtype}")
        scale, zp = self.src.quant(idx)
        if dtype == _INT8:
            zp += 128
        shape = _strip_batch(self.src.shape(idx), self.src.tensor_name(idx))
        sid = self.graph.add_tensor(
            Tensor(Role.ACTIVATION, shape, scale, zp, source=idx))
        self.act_map[idx] = sid
        return sid

    def _input_activation(self, idx: int) -> int:
        if idx not in self.act_map:
            raise _fail(
                f"operator consumes {self.src.tensor_name(idx)} before it is"
                " produced; unsupported graph structure")
        return self.act_map[idx]

    def _map_weights(self, idx: int) -> int:
        t = self.src.tensor(idx)
        dtype = t.Type()
        data = self.src.buffer_data(idx)
        if data is None:
            raise _fail(f"weights {self.src.tensor_name(idx)} carry no data")
        scale, zp = self.src.quant(idx)
        shape = self.src.shape(idx)
        if dtype == _INT8:
            vals = (data.view(np.int8).astype(np.int16) + 128).astype(np.uint8)
            zp += 128
        elif dtype == _UINT8:
            vals = data.view(np.uint8)
        else:
            raise _fail(f"weights {self.src.tensor_name(idx)} have"
                        f" unsupported type {dtype}")
        return self.graph.add_tensor(
            Tensor(Role.WEIGHTS_U8, shape, scale, zp,
                   vals.reshape(shape), source=idx))

    def _map_bias(self, idx: int, m1: float, m2: float) -> int:
        t = self.src.tensor(idx)
        if t.Type() != _INT32:
            raise _fail(f"bias {self.src.tensor_name(idx)} must be int32")
        data = self.src.buffer_data(idx)
        if data is None:
            raise _fail(f"bias {self.src.tensor_name(idx)} carries no data")
        scale, zp = self.src.quant(idx)
        if zp != 0:
            raise _fail(f"bias {self.src.tensor_name(idx)} zero point != 0")
        exact = m1 * m2
        if not np.isclose(scale, exact, rtol=1e-6, atol=0.0):
            raise _fail(
                f"bias {self.src.tensor_name(idx)} scale {scale} does not"
                f" match input*weight scale {exact}")
        shape = self.src.shape(idx)
        # Rewrite with the exact double product; the engine checks equality.
        return self.graph.add_tensor(
            Tensor(Role.BIAS_I32, shape, exact, 0,
                   data.view("<i4").reshape(shape), source=idx))

    # --- per-op handlers ------------------------------------------------------

    def _clamp_range(self, act: int, out_scale: float, out_zp: int,
                     where: str) -> tuple[int, int]:
        if act == _ACT_NONE:
            return (0, 255)
        if act == _ACT_RELU:
            return (min(max(out_zp, 0), 255), 255)
        if act == _ACT_RELU6:
            q6 = int(np.floor(6.0 / out_scale + 0.5)) + out_zp
            return (min(max(out_zp, 0), 255), min(max(q6, 0), 255))
        raise _fail(f"{where}: fused activation {act} cannot be expressed as"
                    " a clamp range")

    def _multiplier(self, m1: float, m2: float, m3: float, where: str
                    ) -> tuple[int, int]:
        m = (m1 * m2) / m3
        if not 0.0 < m < 1.0:
            raise _fail(f"{where}: rescale multiplier {m} outside (0, 1);"
                        " unsupported quantization regime")
        return sq8.normalize_multiplier(m)

    def _conv(self, op, depthwise: bool):
        opts = _options(op, tfl.DepthwiseConv2DOptions if depthwise
                        else tfl.Conv2DOptions)
        if opts.DilationWFactor() != 1 or opts.DilationHFactor() != 1:
            raise _fail("dilated convolutions are not supported")
        in_id = self._input_activation(op.Inputs(0))
        w_id = self._map_weights(op.Inputs(1))
        m1 = self.graph.tensors[in_id].scale
        m2 = self.graph.tensors[w_id].scale
        bias_id = None
        if op.InputsLength() > 2 and op.Inputs(2) >= 0:
            bias_id = self._map_bias(op.Inputs(2), m1, m2)
        out_id = self._map_activation(op.Outputs(0))
        out = self.graph.tensors[out_id]
        m_prime, n = self._multiplier(m1, m2, out.scale, "conv")
        self.graph.layers.append(Layer(
            kind=LayerKind.DEPTHWISE_CONV_2D if depthwise else LayerKind.CONV_2D,
            input=in_id, weights=w_id, bias=bias_id, output=out_id,
            stride=(opts.StrideH(), opts.StrideW()),
            same_padding=opts.Padding() == _PAD_SAME,
            depth_multiplier=opts.DepthMultiplier() if depthwise else 0,
            clamp=self._clamp_range(opts.FusedActivationFunction(),
                                    out.scale, out.zero_point, "conv"),
            m_prime=m_prime, shift_n=n,
        ))

    def _fully_connected(self, op):
        opts = _options(op, tfl.FullyConnectedOptions)
        if opts.WeightsFormat() != 0:
            raise _fail("fully-connected weights format must be DEFAULT")
        in_id = self._input_activation(op.Inputs(0))
        w_id = self._map_weights(op.Inputs(1))
        m1 = self.graph.tensors[in_id].scale
        m2 = self.graph.tensors[w_id].scale
        bias_id = None
        if op.InputsLength() > 2 and op.Inputs(2) >= 0:
            bias_id = self._map_bias(op.Inputs(2), m1, m2)
        out_id = self._map_activation(op.Outputs(0))
        out = self.graph.tensors[out_id]
        m_prime, n = self._multiplier(m1, m2, out.scale, "fully-connected")
        self.graph.layers.append(Layer(
            kind=LayerKind.FULLY_CONNECTED,
            input=in_id, weights=w_id, bias=bias_id, output=out_id,
            clamp=self._clamp_range(opts.FusedActivationFunction(),
                                    out.scale, out.zero_point,
                                    "fully-connected"),
            m_prime=m_prime, shift_n=n,
        ))

    def _pool(self, op, kind: LayerKind):
        opts = _options(op, tfl.Pool2DOptions)
        in_id = self._input_activation(op.Inputs(0))
        out_id = self._map_activation(op.Outputs(0))
        tin, tout = self.graph.tensors[in_id], self.graph.tensors[out_id]
        if (tin.scale, tin.zero_point) != (tout.scale, tout.zero_point):
            raise _fail("pooling must preserve quantization parameters")
        self.graph.layers.append(Layer(
            kind=kind, input=in_id, output=out_id,
            stride=(opts.StrideH(), opts.StrideW()),
            filter=(opts.FilterHeight(), opts.FilterWidth()),
            same_padding=opts.Padding() == _PAD_SAME,
            clamp=self._clamp_range(opts.FusedActivationFunction(),
                                    tout.scale, tout.zero_point, "pool"),
        ))

    def _reshape(self, op):
        in_id = self._input_activation(op.Inputs(0))
        out_id = self._map_activation(op.Outputs(0))
        tin, tout = self.graph.tensors[in_id], self.graph.tensors[out_id]
        if (tin.scale, tin.zero_point) != (tout.scale, tout.zero_point):
            raise _fail("reshape must preserve quantization parameters")
        if int(np.prod(tin.shape)) != int(np.prod(tout.shape)):
            raise _fail("reshape changes the element count")
        self.graph.layers.append(Layer(
            kind=LayerKind.RESHAPE, input=in_id, output=out_id))

    # --- driver ---------------------------------------------------------------

    def run(self) -> tuple[bytes, dict]:
        sg = self.src.sg
        if sg.InputsLength() != 1:
            raise _fail("model must have exactly one input")
        self._map_activation(sg.Inputs(0))

        logits_tfl = None
        for i in range(sg.OperatorsLength()):
            op = sg.Operators(i)
            code = self.src.opcode(op)
            if code == 25:  # SOFTMAX: dropped, argmax reads its input
                if i != sg.OperatorsLength() - 1:
                    raise _fail("softmax must be the final operator")
                logits_tfl = op.Inputs(0)
                continue
            if code == 3:
                self._conv(op, depthwise=False)
            elif code == 4:
                self._conv(op, depthwise=True)
            elif code == 9:
                self._fully_connected(op)
            elif code == 1:
                self._pool(op, LayerKind.AVERAGE_POOL_2D)
            elif code == 17:
                self._pool(op, LayerKind.MAX_POOL_2D)
            elif code == 22:
                self._reshape(op)
            else:
                name = _BUILTIN_NAMES.get(code, f"builtin#{code}")
                raise _fail(f"unsupported operator {name}")

        if not self.graph.layers:
            raise _fail("model has no supported layers")
        logits = (self._input_activation(logits_tfl)
                  if logits_tfl is not None else self.graph.layers[-1].output)
        label_id = self.graph.add_tensor(
            Tensor(Role.ACTIVATION, (1,), 1.0, 0))
        self.graph.layers.append(Layer(
            kind=LayerKind.ARGMAX_OUTPUT, input=logits, output=label_id))

        blob = sq8.serialize(self.graph)
        return blob, self._manifest(logits)

    def _manifest(self, logits: int) -> dict:
        bound, k_min = sq8.derived_bounds(self.graph)
        return {
            "format": "sq8",
            "k_min": k_min,
            "ell_bound": bound,
            "logits_tensor": logits,
            "conv_layers": sum(
                1 for l in self.graph.layers if l.kind in sq8.CONV_KINDS),
            "tensors": [
                {
                    "id": i,
                    "role": t.role.name,
                    "shape": list(t.shape),
                    "scale": t.scale,
                    "zero_point": t.zero_point,
                    "source_tflite_tensor": t.source,
                }
                for i, t in enumerate(self.graph.tensors)
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
                    "m_prime": l.m_prime or None,
                    "shift_n": l.shift_n if l.m_prime else None,
                }
                for i, l in enumerate(self.graph.layers)
            ],
        }


def convert(tflite_bytes: bytes) -> tuple[bytes, dict]:
    """SQ8 bytes plus a JSON-able manifest (tensor mapping, headroom)."""
    return _Converter(tflite_bytes).run()
