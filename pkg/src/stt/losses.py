"""Classification losses: cross entropy, label smoothing, compact softmax cross entropy.

The compact loss augments cross entropy with a symmetric KL penalty that
pushes the softmax over the C-1 non-target classes toward uniform. Two
penalty variants exist: "standard" weights the p-to-u direction by the
predicted probabilities (the textbook KL), "unweighted" leaves that sum
unweighted, which makes it exactly (C-1) times the u-to-p direction. Both
are nonnegative and vanish exactly when the non-target logits are equal.

All losses accept a single logits vector (C,) with an integer label, or a
batch (B, C) with labels (B,); batched calls return the mean over the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, InputError
from .tensor import Tensor

LOSS_KINDS = ("ce", "label-smoothing", "compact")
KL_VARIANTS = ("standard", "unweighted")


@dataclass(frozen=True)
class LossConfig:
    kind: str = "ce"
    smoothing: float = 0.1
    beta: float = 0.2
    kl_variant: str = "standard"

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}, expected one of {LOSS_KINDS}")
        if not 0.0 <= self.smoothing < 1.0:
            raise ConfigError(f"smoothing must lie in [0, 1), got {self.smoothing}")
        if self.beta < 0.0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if self.kl_variant not in KL_VARIANTS:
            raise ConfigError(f"unknown kl variant {self.kl_variant!r}, expected one of {KL_VARIANTS}")


def _validate(logits: Tensor, y):
    """Common checks; returns the label as int (single) or intp array (batched)."""
    if logits.ndim not in (1, 2):
        raise InputError(f"logits must be (C,) or (B, C), got shape {logits.shape}")
    c = logits.shape[-1]
    if c < 2:
        raise InputError(f"need at least 2 classes, got {c}")
    if logits.ndim == 1:
        yi = int(y)
        if not 0 <= yi < c:
            raise InputError(f"label {yi} outside [0, {c})")
        return yi
    labels = np.asarray(y)
    if labels.shape != (logits.shape[0],):
        raise InputError(f"labels {labels.shape} do not match batch of {logits.shape[0]}")
    if labels.size == 0:
        raise InputError("empty batch")
    if labels.min() < 0 or labels.max() >= c:
        raise InputError(f"labels outside [0, {c})")
    return labels.astype(np.intp)


def _batch_mean(per_sample: Tensor, batched: bool) -> Tensor:
    return T.mean(per_sample) if batched else per_sample


def cross_entropy(logits: Tensor, y) -> Tensor:
    """Negative log softmax probability of the target class."""
    y = _validate(logits, y)
    picked = T.pick(T.log_softmax(logits, axis=-1), y)
    return _batch_mean(-picked, logits.ndim == 2)


def label_smoothing_loss(logits: Tensor, y, smoothing: float) -> Tensor:
    """Cross entropy against (1 - smoothing) * onehot(y) + smoothing * uniform."""
    if not 0.0 <= smoothing < 1.0:
        raise InputError(f"smoothing must lie in [0, 1), got {smoothing}")
    y = _validate(logits, y)
    c = logits.shape[-1]
    lsm = T.log_softmax(logits, axis=-1)
    per = T.pick(lsm, y) * (1.0 - smoothing) + T.tensor_sum(lsm, axis=-1) * (smoothing / c)
    return _batch_mean(-per, logits.ndim == 2)


def _nontarget_logits(logits: Tensor, y) -> Tensor:
    """Drop each row's target column, keeping the remaining columns in class order."""
    c = logits.shape[-1]
    if logits.ndim == 1:
        idx = np.concatenate([np.arange(y), np.arange(y + 1, c)])
        return T.take(logits, idx, axis=0)
    # Stable argsort of the onehot mask lists non-target columns first, in order.
    keep = np.argsort(np.arange(c)[None, :] == y[:, None], kind="stable", axis=1)[:, : c - 1]
    flat_idx = keep + c * np.arange(logits.shape[0])[:, None]
    return T.take(T.reshape(logits, (-1,)), flat_idx, axis=0)


def nontarget_softmax(logits: Tensor, y) -> Tensor:
    """Softmax over the C-1 logits excluding the target class."""
    y = _validate(logits, y)
    return T.softmax(_nontarget_logits(logits, y), axis=-1)


def compact_loss(logits: Tensor, y, beta: float = 0.2, kl_variant: str = "standard") -> Tensor:
    """Cross entropy plus beta/2 times the symmetric non-target KL penalty."""
    if beta < 0.0:
        raise InputError(f"beta must be >= 0, got {beta}")
    if kl_variant not in KL_VARIANTS:
        raise InputError(f"unknown kl variant {kl_variant!r}, expected one of {KL_VARIANTS}")
    ce = cross_entropy(logits, y)
    if beta == 0.0:
        return ce
    yv = _validate(logits, y)
    m = logits.shape[-1] - 1
    log_m = math.log(m)
    lsp = T.log_softmax(_nontarget_logits(logits, yv), axis=-1)
    kl_u_to_p = T.mean(lsp, axis=-1) * -1.0 - log_m
    if kl_variant == "standard":
        kl_p_to_u = T.tensor_sum(T.exp(lsp) * lsp, axis=-1) + log_m
    else:
        kl_p_to_u = T.tensor_sum(lsp, axis=-1) * -1.0 - m * log_m
    reg = _batch_mean((kl_u_to_p + kl_p_to_u) * 0.5, logits.ndim == 2)
    return ce + reg * beta


def compute_loss(logits: Tensor, y, cfg: LossConfig) -> Tensor:
    if cfg.kind == "ce":
        return cross_entropy(logits, y)
    if cfg.kind == "label-smoothing":
        return label_smoothing_loss(logits, y, cfg.smoothing)
    return compact_loss(logits, y, cfg.beta, cfg.kl_variant)
