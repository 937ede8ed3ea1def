"""Versioned binary serialization for combined models.

Layout (all little-endian):

    magic "ODOF" | u16 version | u8 frozen bitmask | u8 branch count
    per branch: u8 dof_index | u8 activation id | u8 layer count
                | per layer u32 rows, u32 cols
                | mean f64[6] | std f64[6]
                | per layer weight f64[rows*cols] row-major, bias f64[rows]
    u8 fusion flag | fusion weight f64[6*12] | fusion bias f64[6]
    u32 metadata length | metadata JSON (UTF-8)
    u32 CRC32 of everything above

The version check runs before the checksum so a reader can say "newer
format" instead of "corrupt" when only the version field moved.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from .activations import ActivationKind
from .combined import FUSION_INPUTS, CombinedModel
from .errors import ModelFormatError, ModelVersionError
from .mlp import N_INPUTS, MlpBranch

MAGIC = b"ODOF"
FORMAT_VERSION = 1


def save_model(model: CombinedModel, path, meta: dict | None = None) -> None:
    """Write the model; `meta` (training settings etc.) rides along as JSON."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<H", FORMAT_VERSION)
    flags = 0
    for i, frozen in enumerate(model.frozen):
        if frozen:
            flags |= 1 << i
    out += struct.pack("<BB", flags, len(model.branches))
    for branch in model.branches:
        out += struct.pack("<BBB", branch.dof_index, int(branch.activation), len(branch.layers))
        for w, b in branch.layers:
            out += struct.pack("<II", w.shape[0], w.shape[1])
        out += branch.input_mean.astype("<f8").tobytes()
        out += branch.input_std.astype("<f8").tobytes()
        for w, b in branch.layers:
            out += np.ascontiguousarray(w, dtype="<f8").tobytes()
            out += np.ascontiguousarray(b, dtype="<f8").tobytes()
    out += struct.pack("<B", 1)
    out += np.ascontiguousarray(model.fusion_weight, dtype="<f8").tobytes()
    out += np.ascontiguousarray(model.fusion_bias, dtype="<f8").tobytes()
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(blob))
    out += blob
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("model file is truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def _parse(data: bytes) -> tuple[CombinedModel, dict]:
    if len(data) < 12:
        raise ModelFormatError("model file is truncated")
    if data[:4] != MAGIC:
        raise ModelFormatError("bad magic bytes; not a model file")
    (version,) = struct.unpack("<H", data[4:6])
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"model format version {version}; this build reads {FORMAT_VERSION}"
        )
    (stored_crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != stored_crc:
        raise ModelFormatError("checksum mismatch; model file is corrupt")

    r = _Reader(data[:-4])
    r.take(6)
    flags, n_branches = r.unpack("<BB")
    branches = []
    for _ in range(n_branches):
        dof_index, act_id, n_layers = r.unpack("<BBB")
        try:
            kind = ActivationKind(act_id)
        except ValueError:
            raise ModelFormatError(f"unknown activation id {act_id}") from None
        dims = [r.unpack("<II") for _ in range(n_layers)]
        mean = r.floats(N_INPUTS)
        std = r.floats(N_INPUTS)
        layers = []
        for rows, cols in dims:
            w = r.floats(rows * cols).reshape(rows, cols)
            b = r.floats(rows)
            layers.append((w, b))
        try:
            branches.append(MlpBranch(dof_index, tuple(layers), kind, mean, std))
        except ValueError as exc:
            raise ModelFormatError(f"invalid branch in model file: {exc}") from None
    (fusion_flag,) = r.unpack("<B")
    if fusion_flag != 1:
        raise ModelFormatError(f"unsupported fusion flag {fusion_flag}")
    fusion_w = r.floats(N_INPUTS * FUSION_INPUTS).reshape(N_INPUTS, FUSION_INPUTS)
    fusion_b = r.floats(N_INPUTS)
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"bad metadata block: {exc}") from None
    if r.pos != len(r.data):
        raise ModelFormatError("trailing bytes after model payload")
    frozen = tuple(bool(flags >> i & 1) for i in range(n_branches))
    try:
        model = CombinedModel(tuple(branches), fusion_w, fusion_b, frozen)
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent model file: {exc}") from None
    return model, meta


def load_model(path) -> CombinedModel:
    with open(path, "rb") as fh:
        data = fh.read()
    return _parse(data)[0]


def read_model_meta(path) -> dict:
    """The JSON metadata stored alongside the parameters."""
    with open(path, "rb") as fh:
        data = fh.read()
    return _parse(data)[1]
