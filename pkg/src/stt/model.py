"""Factorized space-time attention over a token grid.

Tokens live on a (H*W patches) x (F+1 slots) grid of width d; slot 0 holds the
replicated classification vector, slots 1..F hold the frames. Each block runs

  1. spatial attention: every token attends to the H*W tokens of its own slot;
  2. temporal attention: every token (p, t) attends to F+1 keys: the global
     classification token's key at (0, 0) plus patch p's keys at slots 1..F;
  3. a two-layer gelu MLP.

All three stages are pre-normalized (layer norm feeds the projections, the
residual bypasses it) and all attention projections are bias-free. Class
logits are an affine map of the final (0, 0) token; ablation variants that
disable the temporal stage read the mean frame token instead, since slot 0
never receives clip information without temporal attention.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tensor as T
from .embed import (
    PositionalEmbeddings,
    SamplingPlan,
    StemConfig,
    StemParams,
    assemble_input,
    init_positional,
    init_stem_params,
    sample_frames,
    stem_forward,
    tokenize_project,
)
from .errors import ConfigError, DimensionError
from .tensor import Tensor


class Variant(Enum):
    """Which attention stages run; disabled stages become the identity map."""

    BASELINE = "baseline"
    SPATIAL_ONLY = "spatial-only"
    TEMPORAL_ONLY = "temporal-only"
    BOTH = "both"

    @property
    def spatial(self) -> bool:
        return self in (Variant.SPATIAL_ONLY, Variant.BOTH)

    @property
    def temporal(self) -> bool:
        return self in (Variant.TEMPORAL_ONLY, Variant.BOTH)


@dataclass(frozen=True)
class ModelGeometry:
    """Everything that determines parameter shapes."""

    stem: StemConfig
    frames: int
    dim: int
    heads: int
    blocks: int
    mlp_dim: int
    classes: int

    def __post_init__(self):
        if min(self.frames, self.dim, self.heads, self.blocks, self.mlp_dim) < 1:
            raise ConfigError("all model dimensions must be positive")
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} is not divisible by {self.heads} heads")

    @property
    def patches(self) -> int:
        return self.stem.patches

    @property
    def slots(self) -> int:
        return self.frames + 1

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass
class AttentionParams:
    """Pre-norm + bias-free projections for one attention stage.

    The (d, d) projection matrices hold all heads side by side: columns
    [h*head_dim : (h+1)*head_dim] are head h's d -> head_dim map.
    """

    ln_gamma: Tensor
    ln_beta: Tensor
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor


@dataclass
class MlpParams:
    ln_gamma: Tensor
    ln_beta: Tensor
    w1: Tensor
    w2: Tensor


@dataclass
class BlockParams:
    spatial: AttentionParams
    temporal: AttentionParams
    mlp: MlpParams


@dataclass
class ModelParams:
    """All learnable state, with a fixed flattening order for optimizer/checkpoint."""

    geometry: ModelGeometry
    stem: StemParams
    w_proj: Tensor
    pos: PositionalEmbeddings
    blocks: list[BlockParams]
    head_w: Tensor
    head_b: Tensor

    def tensors(self) -> list[tuple[str, Tensor]]:
        """Canonical (name, tensor) order: stem, projection, embeddings, blocks, head."""
        out = self.stem.tensors()
        out.append(("proj.w", self.w_proj))
        out += [("pos.e_space", self.pos.e_space), ("pos.e_time", self.pos.e_time), ("pos.cls", self.pos.cls)]
        for i, blk in enumerate(self.blocks):
            for stage, ap in (("spatial", blk.spatial), ("temporal", blk.temporal)):
                out += [
                    (f"block{i}.{stage}.ln_gamma", ap.ln_gamma),
                    (f"block{i}.{stage}.ln_beta", ap.ln_beta),
                    (f"block{i}.{stage}.wq", ap.wq),
                    (f"block{i}.{stage}.wk", ap.wk),
                    (f"block{i}.{stage}.wv", ap.wv),
                    (f"block{i}.{stage}.wo", ap.wo),
                ]
            out += [
                (f"block{i}.mlp.ln_gamma", blk.mlp.ln_gamma),
                (f"block{i}.mlp.ln_beta", blk.mlp.ln_beta),
                (f"block{i}.mlp.w1", blk.mlp.w1),
                (f"block{i}.mlp.w2", blk.mlp.w2),
            ]
        out += [("head.w", self.head_w), ("head.b", self.head_b)]
        return out

    @property
    def dtype(self) -> np.dtype:
        return self.head_w.dtype

    def zero_grad(self) -> None:
        for _, t in self.tensors():
            t.grad = None


def parameter_count(geometry: ModelGeometry) -> int:
    d, c = geometry.dim, geometry.classes
    n = geometry.stem.channels * d  # projection
    if geometry.stem.kind == "conv-stem":
        ch = geometry.stem.channels
        n += 9 * geometry.stem.in_channels * ch + ch + 9 * ch * ch + ch
    n += geometry.patches * d + geometry.slots * d + d  # embeddings + cls
    per_attn = 2 * d + 4 * d * d
    per_mlp = 2 * d + 2 * d * geometry.mlp_dim
    n += geometry.blocks * (2 * per_attn + per_mlp)
    n += d * c + c  # head
    return n


def init_params(geometry: ModelGeometry, rng: np.random.Generator,
                dtype=np.float32, scale: float = 0.02) -> ModelParams:
    """Zero-mean normal (scale 0.02) projections, unit/zero layer norms, zero biases."""
    d = geometry.dim

    def w(*shape):
        return Tensor(scale * rng.standard_normal(shape), requires_grad=True, dtype=dtype)

    def ones(n):
        return Tensor(np.ones(n), requires_grad=True, dtype=dtype)

    def zeros(n):
        return Tensor(np.zeros(n), requires_grad=True, dtype=dtype)

    def attention():
        return AttentionParams(ln_gamma=ones(d), ln_beta=zeros(d),
                               wq=w(d, d), wk=w(d, d), wv=w(d, d), wo=w(d, d))

    stem = init_stem_params(geometry.stem, rng, dtype=dtype, scale=scale)
    w_proj = w(geometry.stem.channels, d)
    pos = init_positional(geometry.patches, geometry.frames, d, rng, dtype=dtype, scale=scale)
    blocks = [
        BlockParams(
            spatial=attention(),
            temporal=attention(),
            mlp=MlpParams(ln_gamma=ones(d), ln_beta=zeros(d),
                          w1=w(d, geometry.mlp_dim), w2=w(geometry.mlp_dim, d)),
        )
        for _ in range(geometry.blocks)
    ]
    return ModelParams(geometry=geometry, stem=stem, w_proj=w_proj, pos=pos,
                       blocks=blocks, head_w=w(d, geometry.classes), head_b=zeros(geometry.classes))


# ---- attention stages ----


def qkv_project(z: Tensor, params: AttentionParams, heads: int) -> tuple[Tensor, Tensor, Tensor]:
    """Pre-normalized, bias-free projections split by head.

    z: (..., P, S, d) -> each of q, k, v: (..., P, S, heads, d // heads).
    """
    d = z.shape[-1]
    if d % heads != 0:
        raise ConfigError(f"token width {d} is not divisible by {heads} heads")
    if params.wq.shape != (d, d):
        raise DimensionError(f"projection {params.wq.shape} does not match token width {d}")
    h = T.layer_norm(z, params.ln_gamma, params.ln_beta)
    split = z.shape[:-1] + (heads, d // heads)
    return (
        T.reshape(T.matmul(h, params.wq), split),
        T.reshape(T.matmul(h, params.wk), split),
        T.reshape(T.matmul(h, params.wv), split),
    )


def _swap_last(t: Tensor) -> Tensor:
    axes = tuple(range(t.ndim - 2)) + (t.ndim - 1, t.ndim - 2)
    return T.transpose(t, axes)


def _merge_heads(ctx: Tensor) -> Tensor:
    # (..., P, S, heads, head_dim) -> (..., P, S, d); axis order IS head concatenation.
    shape = ctx.shape[:-2] + (ctx.shape[-2] * ctx.shape[-1],)
    return T.reshape(ctx, shape)


def spatial_attention(z: Tensor, params: AttentionParams, heads: int, return_weights: bool = False):
    """Per-slot attention over the H*W patches; output projection plus residual.

    z: (..., P, S, d). Optional weights: (..., S, heads, P, P), rows sum to 1.
    """
    q, k, v = qkv_project(z, params, heads)
    lead = z.ndim - 3
    head_axes = tuple(range(lead)) + (lead + 1, lead + 2, lead, lead + 3)  # -> (..., S, H, P, Dh)
    back_axes = tuple(range(lead)) + (lead + 2, lead, lead + 1, lead + 3)  # -> (..., P, S, H, Dh)
    qh, kh, vh = (T.transpose(t, head_axes) for t in (q, k, v))
    scores = T.matmul(qh, _swap_last(kh)) * (1.0 / np.sqrt(q.shape[-1]))
    weights = T.softmax(scores, axis=-1)
    ctx = T.transpose(T.matmul(weights, vh), back_axes)
    out = T.matmul(_merge_heads(ctx), params.wo) + z
    return (out, weights.data) if return_weights else out


def temporal_attention(z: Tensor, params: AttentionParams, heads: int, return_weights: bool = False):
    """Per-patch attention over F+1 keys: global cls key at (0,0) plus own-patch frames.

    z: (..., P, S, d). Optional weights: (..., P, heads, S, F+1), rows sum to 1;
    weight column 0 is the classification-token key shared by every patch.
    """
    q, k, v = qkv_project(z, params, heads)
    lead = z.ndim - 3
    head_axes = tuple(range(lead)) + (lead, lead + 2, lead + 1, lead + 3)  # -> (..., P, H, S, Dh)
    qh, kh, vh = (T.transpose(t, head_axes) for t in (q, k, v))

    def keyset(t: Tensor) -> Tensor:
        anchor = t[..., 0:1, :, 0:1, :]  # patch 0, slot 0: the classification token
        anchor = T.expand(anchor, t.shape[:-2] + (1, t.shape[-1]))
        return T.concat([anchor, t[..., 1:, :]], axis=-2)

    scores = T.matmul(qh, _swap_last(keyset(kh))) * (1.0 / np.sqrt(q.shape[-1]))
    weights = T.softmax(scores, axis=-1)
    ctx = T.transpose(T.matmul(weights, keyset(vh)), head_axes)  # the swap is self-inverse
    out = T.matmul(_merge_heads(ctx), params.wo) + z
    return (out, weights.data) if return_weights else out


def block_mlp(z: Tensor, params: MlpParams) -> Tensor:
    """Pre-normalized two-layer gelu MLP with residual."""
    if params.w1.shape[0] != z.shape[-1] or params.w2.shape[-1] != z.shape[-1]:
        raise DimensionError(
            f"mlp weights {params.w1.shape}/{params.w2.shape} do not match token width {z.shape[-1]}"
        )
    h = T.layer_norm(z, params.ln_gamma, params.ln_beta)
    return T.matmul(T.gelu(T.matmul(h, params.w1)), params.w2) + z


def encode(z: Tensor, params: ModelParams, variant: Variant = Variant.BOTH) -> Tensor:
    heads = params.geometry.heads
    for blk in params.blocks:
        if variant.spatial:
            z = spatial_attention(z, blk.spatial, heads)
        if variant.temporal:
            z = temporal_attention(z, blk.temporal, heads)
        z = block_mlp(z, blk.mlp)
    return z


def _affine_head(x: Tensor, params: ModelParams) -> Tensor:
    lead = x.shape[:-1]
    flat = T.reshape(x, (-1, x.shape[-1]))
    return T.reshape(T.matmul(flat, params.head_w) + params.head_b, lead + (params.geometry.classes,))


def forward_tokens(z0: Tensor, params: ModelParams, variant: Variant = Variant.BOTH) -> Tensor:
    """Token grid (..., P, F+1, d) -> logits (..., C)."""
    g = params.geometry
    if z0.shape[-3:] != (g.patches, g.slots, g.dim):
        raise ConfigError(f"token grid {z0.shape[-3:]} does not match geometry "
                          f"({g.patches}, {g.slots}, {g.dim})")
    z = encode(z0, params, variant)
    if variant.temporal:
        readout = z[..., 0, 0, :]
    else:
        frames_part = z[..., :, 1:, :]
        readout = T.tensor_sum(frames_part, axis=(-3, -2)) * (1.0 / (g.patches * g.frames))
    return _affine_head(readout, params)


def forward_batch(frames: Tensor, params: ModelParams, variant: Variant = Variant.BOTH) -> Tensor:
    """Already-sampled frames (B, F, H0, W0, Cin) -> logits (B, C)."""
    g = params.geometry
    if frames.ndim != 5:
        raise DimensionError(f"expected (B, F, H0, W0, C), got shape {frames.shape}")
    if frames.shape[1] != g.frames:
        raise ConfigError(f"got {frames.shape[1]} frames, geometry expects {g.frames}")
    feats = stem_forward(frames, g.stem, params.stem)
    tokens = tokenize_project(feats, params.w_proj)
    z0 = assemble_input(tokens, params.pos)
    return forward_tokens(z0, params, variant)


def forward(clip_frames: np.ndarray, params: ModelParams, plan: SamplingPlan,
            rng: np.random.Generator | None = None, variant: Variant = Variant.BOTH) -> Tensor:
    """One raw clip (F_raw, H0, W0, Cin) -> logits (C,). Sampling follows ``plan``."""
    if clip_frames.ndim != 4:
        raise DimensionError(f"expected (F_raw, H0, W0, C), got shape {clip_frames.shape}")
    if plan.frames != params.geometry.frames:
        raise ConfigError(f"plan yields {plan.frames} frames, geometry expects {params.geometry.frames}")
    idx = sample_frames(clip_frames.shape[0], plan, rng)
    sampled = Tensor(np.ascontiguousarray(clip_frames[idx])[None], dtype=params.dtype)
    return forward_batch(sampled, params, variant)[0]
