"""Versioned binary checkpoints with a bit-exact parameter round trip.

Layout (all little-endian):

    u32   magic "STC1"
    u32   format version (currently 1)
    u32   stem kind code, input height/width/channels, patch size,
          stem channels, grid height/width           (8 fields)
    u32   frames, dim, heads, blocks, mlp_dim, classes (6 fields)
    u32   epoch counter
    u64   parameter count
    8s    training-config digest
    4*u64 + 2*u32  PCG64 state (state hi/lo, inc hi/lo, has_uint32, uinteger)
    f32[] parameter payload, in ModelParams.tensors() order, C-order raveled
    u64   blake2b-64 of the payload bytes

The checksum covers the payload only; a corrupted or hand-edited header
surfaces instead as a version, geometry, or length error, which keeps the
three failure kinds distinguishable.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .embed import STEM_KINDS, StemConfig
from .errors import (
    CheckpointChecksumError,
    CheckpointCorruptError,
    CheckpointGeometryError,
    CheckpointVersionError,
    ConfigError,
    InputError,
)
from .model import ModelGeometry, ModelParams, init_params, parameter_count

MAGIC = int.from_bytes(b"STC1", "little")
FORMAT_VERSION = 1
DIGEST_BYTES = 8

_HEADER = struct.Struct("<17IQ8s4Q2I")
_MASK64 = (1 << 64) - 1


@dataclass
class Checkpoint:
    params: ModelParams
    epoch: int
    rng_state: dict
    config_digest: bytes = b"\x00" * DIGEST_BYTES


def _payload_checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _pack_rng(state: dict) -> tuple:
    if state.get("bit_generator") != "PCG64":
        raise InputError(f"only PCG64 rng state is supported, got {state.get('bit_generator')!r}")
    s = state["state"]["state"]
    inc = state["state"]["inc"]
    return (s >> 64, s & _MASK64, inc >> 64, inc & _MASK64,
            int(state["has_uint32"]), int(state["uinteger"]))


def _unpack_rng(fields: tuple) -> dict:
    s_hi, s_lo, i_hi, i_lo, has, uint = fields
    return {
        "bit_generator": "PCG64",
        "state": {"state": (s_hi << 64) | s_lo, "inc": (i_hi << 64) | i_lo},
        "has_uint32": int(has),
        "uinteger": int(uint),
    }


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    params = ckpt.params
    g = params.geometry
    named = params.tensors()
    for name, t in named:
        if t.dtype != np.float32:
            raise InputError(f"checkpoint payload is float32; parameter {name} is {t.dtype}")
    if len(ckpt.config_digest) != DIGEST_BYTES:
        raise InputError(f"config digest must be {DIGEST_BYTES} bytes, got {len(ckpt.config_digest)}")
    payload = b"".join(np.ascontiguousarray(t.data, dtype="<f4").tobytes() for _, t in named)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION,
        STEM_KINDS.index(g.stem.kind), g.stem.in_height, g.stem.in_width, g.stem.in_channels,
        g.stem.patch_size, g.stem.channels, g.stem.grid_h, g.stem.grid_w,
        g.frames, g.dim, g.heads, g.blocks, g.mlp_dim, g.classes,
        ckpt.epoch, parameter_count(g), ckpt.config_digest, *_pack_rng(ckpt.rng_state),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(struct.pack("<Q", _payload_checksum(payload)))


def load_checkpoint(path, expected_geometry: ModelGeometry | None = None,
                    expected_digest: bytes | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size + 8:
        raise CheckpointCorruptError(f"file is {len(raw)} bytes, too short for the header")
    fields = _HEADER.unpack_from(raw)
    if fields[0] != MAGIC:
        raise CheckpointCorruptError(f"bad magic 0x{fields[0]:08x}")
    if fields[1] != FORMAT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {fields[1]}")
    (kind_code, in_h, in_w, in_c, patch, channels, grid_h, grid_w,
     frames, dim, heads, blocks, mlp_dim, classes) = fields[2:16]
    epoch, count, digest = fields[16], fields[17], fields[18]
    rng_state = _unpack_rng(fields[19:25])
    if kind_code >= len(STEM_KINDS):
        raise CheckpointGeometryError(f"unknown stem kind code {kind_code}")
    try:
        stem = StemConfig(kind=STEM_KINDS[kind_code], in_height=in_h, in_width=in_w,
                          in_channels=in_c, grid_h=grid_h, grid_w=grid_w,
                          channels=channels, patch_size=patch)
        geometry = ModelGeometry(stem=stem, frames=frames, dim=dim, heads=heads,
                                 blocks=blocks, mlp_dim=mlp_dim, classes=classes)
    except ConfigError as e:
        raise CheckpointGeometryError(f"header geometry is not self-consistent: {e}") from e
    if count != parameter_count(geometry):
        raise CheckpointGeometryError(
            f"header claims {count} parameters, geometry implies {parameter_count(geometry)}")
    if expected_geometry is not None and geometry != expected_geometry:
        raise CheckpointGeometryError(
            f"checkpoint geometry {geometry} does not match expected {expected_geometry}")
    if expected_digest is not None and digest != expected_digest:
        raise ConfigError("checkpoint was written under a different training configuration")
    body = raw[_HEADER.size :]
    if len(body) != count * 4 + 8:
        raise CheckpointCorruptError(
            f"payload is {len(body) - 8} bytes, header implies {count * 4}")
    payload, (stored_sum,) = body[:-8], struct.unpack("<Q", body[-8:])
    if _payload_checksum(payload) != stored_sum:
        raise CheckpointChecksumError("payload checksum mismatch")
    params = init_params(geometry, np.random.default_rng(0), dtype=np.float32)
    flat = np.frombuffer(payload, dtype="<f4")
    offset = 0
    for _, t in params.tensors():
        t.data = flat[offset : offset + t.size].reshape(t.shape).copy()
        offset += t.size
    return Checkpoint(params=params, epoch=epoch, rng_state=rng_state, config_digest=digest)
