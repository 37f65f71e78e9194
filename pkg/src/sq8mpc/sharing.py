"""Sharing-time preparation: the model owner splits every secret quantity
into replicated shares and emits one file per party.

Shared per model: all weight values, all bias values (as two's-complement
residues), every tensor's zero point, every conv layer's 32-bit
multiplier m', and the per-layer power 2^{L-ell} that hides the rescale
shift.  Geometry, clamp ranges and L stay public.

Share file: magic "SQ8S" | u16 version | u8 party | u16 k |
u32 public-model length | public model bytes | five share sections, each
u32 count then count * 2 ring elements (both held components).
"""

from __future__ import annotations

import random
import struct

from . import model as sq8
from .arith import AShareVec
from .errors import ConfigError, ModelFormatError
from .ring import Ring

SHARE_VERSION = 1


class SharedModel:
    """One party's view: public structure plus its share components."""

    def __init__(
        self,
        party: int,
        k: int,
        public: sq8.Sq8Model,
        weights: AShareVec,
        biases: AShareVec,
        zero_points: AShareVec,
        m_primes: AShareVec,
        pow_shares: AShareVec,
    ):
        self.party = party
        self.k = k
        self.public = public
        self.weights = weights
        self.biases = biases
        self.zero_points = zero_points
        self.m_primes = m_primes
        self.pow_shares = pow_shares
        self.weight_off = _offsets(public, sq8.Role.WEIGHTS_U8)
        self.bias_off = _offsets(public, sq8.Role.BIAS_I32)
        self.conv_index = {li: j for j, li in enumerate(public.conv_layers())}

    def weight_slice(self, tensor_id: int) -> AShareVec:
        off, size = self.weight_off[tensor_id]
        return self.weights.slice(off, off + size)

    def bias_slice(self, tensor_id: int) -> AShareVec:
        off, size = self.bias_off[tensor_id]
        return self.biases.slice(off, off + size)

    def zero_point(self, tensor_id: int) -> AShareVec:
        return self.zero_points.slice(tensor_id, tensor_id + 1)

    def layer_multiplier(self, layer_id: int) -> tuple[AShareVec, AShareVec]:
        j = self.conv_index[layer_id]
        return (
            self.m_primes.slice(j, j + 1),
            self.pow_shares.slice(j, j + 1),
        )


def _offsets(model: sq8.Sq8Model, role: sq8.Role) -> dict[int, tuple[int, int]]:
    out, pos = {}, 0
    for i, t in enumerate(model.tensors):
        if t.role == role:
            out[i] = (pos, t.size)
            pos += t.size
    return out


def _secret_values(model: sq8.Sq8Model, ring: Ring) -> dict[str, list[int]]:
    weights, biases = [], []
    for t in model.tensors:
        if t.role == sq8.Role.WEIGHTS_U8:
            weights += [int(v) for v in t.data.reshape(-1)]
        elif t.role == sq8.Role.BIAS_I32:
            biases += [ring.norm(int(v)) for v in t.data.reshape(-1)]
    zps = [t.zero_point for t in model.tensors]
    m_primes, pows = [], []
    for li in model.conv_layers():
        mult = model.layers[li].multiplier
        m_primes.append(mult.m_prime)
        pows.append(1 << (model.ell_bound - mult.ell))
    return {
        "weights": weights,
        "biases": biases,
        "zero_points": zps,
        "m_primes": m_primes,
        "pow_shares": pows,
    }


def _deal(values: list[int], ring: Ring, rng: random.Random
          ) -> list[tuple[list[int], list[int]]]:
    """Replicated sharing of a vector; returns each party's (c0, c1)."""
    comp = [[], [], []]
    for v in values:
        x1 = rng.getrandbits(ring.k) & ring.mask
        x2 = rng.getrandbits(ring.k) & ring.mask
        x3 = (v - x1 - x2) & ring.mask
        comp[0].append(x1)
        comp[1].append(x2)
        comp[2].append(x3)
    return [
        (comp[0], comp[1]),
        (comp[1], comp[2]),
        (comp[2], comp[0]),
    ]


def share_model(
    model: sq8.Sq8Model, k: int, rng: random.Random | None = None
) -> dict[int, SharedModel]:
    """Dealer-style sharing by the model owner; one SharedModel per party.

    Per-party share counts are a pure function of the model's shapes, and
    opening every section reconstructs the plaintext model exactly.
    """
    if model.public:
        raise ConfigError("cannot share a stripped model")
    if k < model.k_min:
        raise ConfigError(
            f"model needs k >= {model.k_min} (headroom), session has k={k}"
        )
    ring = Ring(k)
    rng = rng or random.SystemRandom()
    public = sq8.strip_secrets(model)
    sections = _secret_values(model, ring)

    per_party: dict[int, dict[str, AShareVec]] = {1: {}, 2: {}, 3: {}}
    for name, values in sections.items():
        dealt = _deal(values, ring, rng)
        for p in (1, 2, 3):
            c0, c1 = dealt[p - 1]
            per_party[p][name] = AShareVec(k, c0, c1)

    return {
        p: SharedModel(p, k, public, **per_party[p]) for p in (1, 2, 3)
    }


# --- share files -------------------------------------------------------------


def dump_share(sm: SharedModel) -> bytes:
    public_blob = sq8.serialize(sm.public)
    out = bytearray()
    out += sq8.SHARE_MAGIC
    out += struct.pack("<HBH", SHARE_VERSION, sm.party, sm.k)
    out += struct.pack("<I", len(public_blob))
    out += public_blob
    ring = Ring(sm.k)
    for vec in (sm.weights, sm.biases, sm.zero_points, sm.m_primes,
                sm.pow_shares):
        out += struct.pack("<I", len(vec))
        out += ring.encode(vec.c0)
        out += ring.encode(vec.c1)
    return bytes(out)


def load_share(blob: bytes) -> SharedModel:
    if blob[:4] != sq8.SHARE_MAGIC:
        raise ModelFormatError("bad share file magic")
    version, party, k = struct.unpack_from("<HBH", blob, 4)
    if version != SHARE_VERSION:
        raise ModelFormatError(f"unsupported share file version {version}")
    (blob_len,) = struct.unpack_from("<I", blob, 9)
    pos = 13
    public = sq8.load(blob[pos : pos + blob_len])
    if not public.public:
        raise ModelFormatError("share file embeds a non-stripped model")
    pos += blob_len

    ring = Ring(k)
    esz = ring.byte_size
    vecs = []
    for _ in range(5):
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        c0 = ring.decode(blob[pos : pos + count * esz])
        pos += count * esz
        c1 = ring.decode(blob[pos : pos + count * esz])
        pos += count * esz
        vecs.append(AShareVec(k, c0, c1))
    return SharedModel(party, k, public, *vecs)
