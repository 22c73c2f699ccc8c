"""Clip-to-token pipeline: frame sampling, feature stems, token-grid assembly.

A clip of raw frames is reduced to F = segments * span frames by segment
sampling, turned into a (F, H, W, C) feature map by a stem, flattened and
projected to width d, and finally assembled into the (H*W, F+1, d) token grid
the attention blocks consume: learned spatial offsets added per patch, one
learned classification vector replicated across all patches at temporal slot 0,
learned temporal offsets added per slot.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import tensor as T
from .errors import (
    ConfigError,
    DimensionError,
    FeatureFormatError,
    FeatureSizeError,
    FeatureVersionError,
    InputError,
)
from .tensor import Tensor

STEM_KINDS = ("conv-stem", "linear-patch", "precomputed")

# Two 3x3 stride-2 layers: the conv stem always downsamples by 4.
CONV_STEM_FACTOR = 4
_CONV_KERNEL = 3
_CONV_STRIDE = 2
_CONV_PAD = 1


# ---- frame sampling ----


@dataclass(frozen=True)
class SamplingPlan:
    """Segment-based sampling: ``segments`` segments of ``span`` consecutive frames."""

    segments: int
    span: int
    mode: Literal["train", "test"] = "test"

    def __post_init__(self):
        if self.segments < 1 or self.span < 1:
            raise InputError(f"segments and span must be >= 1, got {self.segments}, {self.span}")
        if self.mode not in ("train", "test"):
            raise InputError(f"mode must be 'train' or 'test', got {self.mode!r}")

    @property
    def frames(self) -> int:
        return self.segments * self.span


def sample_frames(clip_length: int, plan: SamplingPlan, rng: np.random.Generator | None = None) -> np.ndarray:
    """Frame indices for one clip: span-length runs from each of S near-equal segments.

    Remainder frames go to the leading segments. Train mode draws a uniform
    random run start per segment; test mode centers the run. Short segments
    repeat their last frame; segments past the end of a very short clip repeat
    the clip's final frame.
    """
    if clip_length < 1:
        raise InputError(f"clip_length must be >= 1, got {clip_length}")
    if plan.mode == "train" and rng is None:
        raise InputError("train-mode sampling requires an rng")
    base, rem = divmod(clip_length, plan.segments)
    out = np.empty(plan.frames, dtype=np.int64)
    offsets = np.arange(plan.span, dtype=np.int64)
    pos = 0
    seg_start = 0
    for s in range(plan.segments):
        seg_len = base + (1 if s < rem else 0)
        if seg_len == 0:
            out[pos : pos + plan.span] = clip_length - 1
        elif seg_len >= plan.span:
            slack = seg_len - plan.span
            first = seg_start + (int(rng.integers(slack + 1)) if plan.mode == "train" else slack // 2)
            out[pos : pos + plan.span] = first + offsets
        else:
            out[pos : pos + plan.span] = np.minimum(seg_start + offsets, seg_start + seg_len - 1)
        pos += plan.span
        seg_start += seg_len
    return out


# ---- stems ----


@dataclass(frozen=True)
class StemConfig:
    """Geometry of the frame-feature stem.

    ``channels`` is the stem's output width C; the token projection then maps
    C -> dim. For linear-patch, C is forced to patch_size**2 * in_channels.
    """

    kind: str
    in_height: int
    in_width: int
    in_channels: int
    grid_h: int
    grid_w: int
    channels: int
    patch_size: int = 0

    def __post_init__(self):
        if self.kind not in STEM_KINDS:
            raise ConfigError(f"unknown stem kind {self.kind!r}, expected one of {STEM_KINDS}")
        if min(self.in_height, self.in_width, self.in_channels, self.grid_h, self.grid_w, self.channels) < 1:
            raise ConfigError("stem dimensions must be positive")
        if self.kind == "linear-patch":
            p = self.patch_size
            if p < 1:
                raise ConfigError("linear-patch stem needs patch_size >= 1")
            if self.in_height != self.grid_h * p or self.in_width != self.grid_w * p:
                raise ConfigError(
                    f"input {self.in_height}x{self.in_width} is not grid {self.grid_h}x{self.grid_w} "
                    f"of {p}x{p} patches"
                )
            if self.channels != p * p * self.in_channels:
                raise ConfigError(
                    f"linear-patch channels must be patch_size**2 * in_channels = {p * p * self.in_channels}"
                )
        elif self.kind == "conv-stem":
            if self.in_height != self.grid_h * CONV_STEM_FACTOR or self.in_width != self.grid_w * CONV_STEM_FACTOR:
                raise ConfigError(
                    f"conv stem downsamples by {CONV_STEM_FACTOR}; input {self.in_height}x{self.in_width} "
                    f"does not map to grid {self.grid_h}x{self.grid_w}"
                )
        elif self.kind == "precomputed":
            if (self.in_height, self.in_width, self.in_channels) != (self.grid_h, self.grid_w, self.channels):
                raise ConfigError("precomputed stem requires input geometry == output geometry")

    @property
    def patches(self) -> int:
        return self.grid_h * self.grid_w


@dataclass
class StemParams:
    """Learnable stem weights; empty for linear-patch and precomputed stems."""

    k1: Tensor | None = None
    b1: Tensor | None = None
    k2: Tensor | None = None
    b2: Tensor | None = None

    def tensors(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in (("stem.k1", self.k1), ("stem.b1", self.b1),
                                    ("stem.k2", self.k2), ("stem.b2", self.b2)) if t is not None]


def init_stem_params(cfg: StemConfig, rng: np.random.Generator, dtype=np.float32, scale: float = 0.02) -> StemParams:
    if cfg.kind != "conv-stem":
        return StemParams()
    c = cfg.channels
    k = _CONV_KERNEL * _CONV_KERNEL
    return StemParams(
        k1=Tensor(scale * rng.standard_normal((k * cfg.in_channels, c)), requires_grad=True, dtype=dtype),
        b1=Tensor(np.zeros(c), requires_grad=True, dtype=dtype),
        k2=Tensor(scale * rng.standard_normal((k * c, c)), requires_grad=True, dtype=dtype),
        b2=Tensor(np.zeros(c), requires_grad=True, dtype=dtype),
    )


def stem_forward(frames: Tensor, cfg: StemConfig, params: StemParams | None = None) -> Tensor:
    """Per-frame features: (..., F, H0, W0, Cin) -> (..., F, H, W, C).

    The stem is stateless across frames; a leading batch axis is allowed.
    """
    if frames.ndim not in (4, 5):
        raise DimensionError(f"expected (F, H, W, C) or (B, F, H, W, C), got shape {frames.shape}")
    if frames.shape[-3:] != (cfg.in_height, cfg.in_width, cfg.in_channels):
        raise ConfigError(
            f"frame geometry {frames.shape[-3:]} does not match stem input "
            f"({cfg.in_height}, {cfg.in_width}, {cfg.in_channels})"
        )
    if cfg.kind == "precomputed":
        return frames
    lead = frames.shape[:-3]
    x = T.reshape(frames, (-1, cfg.in_height, cfg.in_width, cfg.in_channels))
    if cfg.kind == "linear-patch":
        out = T.extract_patches(x, cfg.patch_size, cfg.patch_size)
    else:
        if params is None or params.k1 is None:
            raise ConfigError("conv-stem requires stem parameters")
        h = T.extract_patches(x, _CONV_KERNEL, _CONV_STRIDE, pad=_CONV_PAD)
        h = T.gelu(T.matmul(h, params.k1) + params.b1)
        h = T.extract_patches(h, _CONV_KERNEL, _CONV_STRIDE, pad=_CONV_PAD)
        out = T.matmul(h, params.k2) + params.b2
    return T.reshape(out, lead + (cfg.grid_h, cfg.grid_w, cfg.channels))


def tokenize_project(features: Tensor, w_proj: Tensor) -> Tensor:
    """Flatten the spatial grid row-major and project channels: -> (..., F, H*W, d)."""
    if features.ndim < 4:
        raise DimensionError(f"expected (..., F, H, W, C), got shape {features.shape}")
    if w_proj.ndim != 2 or w_proj.shape[0] != features.shape[-1]:
        raise DimensionError(
            f"projection {w_proj.shape} does not accept channel width {features.shape[-1]}"
        )
    h, w, c = features.shape[-3], features.shape[-2], features.shape[-1]
    flat = T.reshape(features, features.shape[:-3] + (h * w, c))
    return T.matmul(flat, w_proj)


# ---- token grid assembly ----


@dataclass
class PositionalEmbeddings:
    """Learned offsets: per-patch (1, H*W, d), per-slot (1, F+1, d), and the cls vector (d,)."""

    e_space: Tensor
    e_time: Tensor
    cls: Tensor


def init_positional(patches: int, frames: int, dim: int, rng: np.random.Generator,
                    dtype=np.float32, scale: float = 0.02) -> PositionalEmbeddings:
    return PositionalEmbeddings(
        e_space=Tensor(scale * rng.standard_normal((1, patches, dim)), requires_grad=True, dtype=dtype),
        e_time=Tensor(scale * rng.standard_normal((1, frames + 1, dim)), requires_grad=True, dtype=dtype),
        cls=Tensor(scale * rng.standard_normal(dim), requires_grad=True, dtype=dtype),
    )


def assemble_input(f1: Tensor, pe: PositionalEmbeddings) -> Tensor:
    """Build the token grid: (..., F, H*W, d) -> (..., H*W, F+1, d).

    Spatial offsets are added per patch (shared across frames), the clip axis
    is transposed inward, the cls vector is replicated across all patches at
    slot 0, and temporal offsets are added per slot (shared across patches).
    """
    if f1.ndim < 3:
        raise DimensionError(f"expected (..., F, P, d), got shape {f1.shape}")
    frames, patches, dim = f1.shape[-3], f1.shape[-2], f1.shape[-1]
    if pe.e_space.shape != (1, patches, dim):
        raise DimensionError(f"e_space {pe.e_space.shape} does not match ({1}, {patches}, {dim})")
    if pe.e_time.shape != (1, frames + 1, dim):
        raise DimensionError(f"e_time {pe.e_time.shape} does not match (1, {frames + 1}, {dim})")
    if pe.cls.shape != (dim,):
        raise DimensionError(f"cls {pe.cls.shape} does not match ({dim},)")
    f2 = f1 + pe.e_space
    lead = f1.shape[:-3]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    per_patch = T.transpose(f2, axes)  # (..., P, F, d)
    cls_block = T.expand(T.reshape(pe.cls, (1, 1, dim)), lead + (patches, 1, dim))
    z = T.concat([cls_block, per_patch], axis=-2)
    return z + pe.e_time


# ---- precomputed-feature files ----

FEATURE_MAGIC = int.from_bytes(b"STF1", "little")
FEATURE_VERSION = 1
_HEADER = struct.Struct("<6I")


def write_features(path, features: np.ndarray) -> None:
    """Write one clip's stem features (F, H, W, C) as little-endian float32."""
    arr = np.ascontiguousarray(features, dtype="<f4")
    if arr.ndim != 4:
        raise InputError(f"features must be (F, H, W, C), got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, *arr.shape))
        fh.write(arr.tobytes())


def read_features(path) -> np.ndarray:
    """Read a feature file back; the round trip is bitwise exact."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FeatureSizeError(f"file is {len(raw)} bytes, smaller than the {_HEADER.size}-byte header")
    magic, version, f, h, w, c = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise FeatureFormatError(f"bad magic 0x{magic:08x}")
    if version != FEATURE_VERSION:
        raise FeatureVersionError(f"unsupported feature-file version {version}")
    if min(f, h, w, c) < 1:
        raise FeatureFormatError(f"impossible geometry ({f}, {h}, {w}, {c})")
    expected = f * h * w * c * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise FeatureSizeError(f"payload is {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(f, h, w, c).copy()
