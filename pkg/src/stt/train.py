"""SGD training loop, deterministic evaluation, and the variant ablation.

One generator (seeded from the optimizer seed) drives parameter init, the
per-epoch shuffle and train-mode frame sampling, in that order; checkpoints
carry its state so a resumed run replays the same stream. Evaluation always
samples in test mode and breaks argmax ties toward the lowest class index.
"""

from __future__ import annotations

import numpy as np

from .checkpoint import Checkpoint
from .config import OptimizerConfig, RunConfig, config_digest
from .embed import SamplingPlan, sample_frames
from .errors import ConfigError, NumericError
from .losses import compute_loss
from .metrics import EvalReport, uar_war
from .model import ModelParams, Variant, forward_batch, init_params
from .synthetic import ClipSet, SyntheticData, gen_synthetic
from .tensor import Tensor

VARIANT_LABELS = {
    Variant.BASELINE: "baseline",
    Variant.SPATIAL_ONLY: "spatial-only",
    Variant.TEMPORAL_ONLY: "temporal-only",
    Variant.BOTH: "both",
}

ABLATION_ORDER = (Variant.BASELINE, Variant.SPATIAL_ONLY, Variant.TEMPORAL_ONLY, Variant.BOTH)


def lr_at(opt: OptimizerConfig, epoch: int) -> float:
    """Step decay: a tenth of the base rate per completed decay period.

    Dividing by an exactly-representable power of ten rounds once, so decade
    values like 0.01 -> 0.001 -> 0.0001 come out exact.
    """
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return opt.lr / (10.0 ** (epoch // opt.lr_decay_epochs))


def sgd_step(tensors, velocity, lr, momentum, weight_decay) -> None:
    """In-place update; parameters a variant never touched keep a None grad."""
    lr32 = np.float32(lr)
    mu32 = np.float32(momentum)
    wd32 = np.float32(weight_decay)
    for name, t in tensors:
        g = t.grad
        if g is None:
            continue
        if weight_decay > 0.0:
            g = g + wd32 * t.data
        if momentum > 0.0:
            v = velocity[name]
            v *= mu32
            v += g
            g = v
        t.data -= lr32 * g


def _sample_batch(clips: np.ndarray, indices, plan: SamplingPlan, rng) -> np.ndarray:
    out = np.empty((len(indices), plan.frames) + clips.shape[2:], dtype=np.float32)
    for row, i in enumerate(indices):
        out[row] = clips[i, sample_frames(clips.shape[1], plan, rng)]
    return out


def train_epoch(params: ModelParams, train_set: ClipSet, plan: SamplingPlan,
                loss_cfg, opt: OptimizerConfig, rng, velocity, lr: float,
                variant: Variant, epoch: int) -> float:
    """One pass over a shuffled epoch; returns the clip-weighted mean loss."""
    order = rng.permutation(len(train_set))
    tensors = params.tensors()
    total = 0.0
    for start in range(0, len(order), opt.batch):
        batch_idx = order[start:start + opt.batch]
        frames = _sample_batch(train_set.clips, batch_idx, plan, rng)
        logits = forward_batch(Tensor(frames, dtype=params.dtype), params, variant)
        loss = compute_loss(logits, train_set.labels[batch_idx], loss_cfg)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NumericError(
                f"non-finite loss {value} at epoch {epoch}, "
                f"batch {start // opt.batch} (seed {opt.seed})")
        params.zero_grad()
        loss.backward()
        sgd_step(tensors, velocity, lr, opt.momentum, opt.weight_decay)
        total += value * len(batch_idx)
    return total / len(order)


def train_model(cfg: RunConfig, train_set: ClipSet, start: Checkpoint | None = None,
                variant: Variant = Variant.BOTH, progress=None):
    """Train from scratch or from a checkpoint; returns (checkpoint, history).

    The returned checkpoint is not written anywhere. Momentum velocity is not
    part of the checkpoint format, so a resumed momentum run restarts its
    velocity from zero; with momentum 0 resume is bit-identical to an
    uninterrupted run.
    """
    digest = config_digest(cfg)
    opt = cfg.optimizer
    if start is None:
        rng = np.random.default_rng(opt.seed)
        params = init_params(cfg.geometry, rng, np.float32)
        first_epoch = 0
    else:
        if start.config_digest != digest:
            raise ConfigError("checkpoint was trained under a different configuration")
        params = start.params
        rng = np.random.default_rng()
        rng.bit_generator.state = start.rng_state
        first_epoch = start.epoch
    plan = cfg.plan("train")
    velocity = ({name: np.zeros_like(t.data) for name, t in params.tensors()}
                if opt.momentum > 0.0 else {})
    history = []
    for epoch in range(first_epoch, opt.epochs):
        lr = lr_at(opt, epoch)
        loss = train_epoch(params, train_set, plan, cfg.loss, opt, rng,
                           velocity, lr, variant, epoch)
        record = {"epoch": epoch, "lr": lr, "loss": loss}
        history.append(record)
        if progress is not None:
            progress(record)
    final_epoch = max(first_epoch, opt.epochs)
    return Checkpoint(params=params, epoch=final_epoch,
                      rng_state=rng.bit_generator.state, config_digest=digest), history


def evaluate(params: ModelParams, clip_set: ClipSet, plan: SamplingPlan,
             variant: Variant = Variant.BOTH, chunk: int = 64) -> EvalReport:
    """Deterministic test-mode evaluation regardless of the plan's mode flag."""
    plan = SamplingPlan(segments=plan.segments, span=plan.span, mode="test")
    idx = sample_frames(clip_set.clips.shape[1], plan, None)
    preds = np.empty(len(clip_set), dtype=np.int64)
    for start in range(0, len(clip_set), chunk):
        block = clip_set.clips[start:start + chunk][:, idx]
        logits = forward_batch(Tensor(block, dtype=params.dtype), params, variant)
        preds[start:start + chunk] = np.argmax(logits.data, axis=-1)
    return uar_war(preds, clip_set.labels, params.geometry.classes)


def ablate(cfg: RunConfig, data: SyntheticData | None = None, progress=None) -> dict:
    """Train all four attention variants from identical initial weights.

    Every variant re-derives its generator from the same optimizer seed, so
    initial parameters match bit for bit across rows of the table.
    """
    if data is None:
        data = gen_synthetic(cfg.synthetic_spec())
    reports = {}
    for variant in ABLATION_ORDER:
        label = VARIANT_LABELS[variant]
        wrapped = None
        if progress is not None:
            wrapped = lambda record, _label=label: progress(_label, record)
        ckpt, _ = train_model(cfg, data.train, variant=variant, progress=wrapped)
        reports[label] = evaluate(ckpt.params, data.test, cfg.plan("test"), variant)
    return reports


def history_lines(history) -> list[str]:
    return [f"epoch={r['epoch']} lr={r['lr']:.10g} loss={r['loss']:.6f}" for r in history]


def ablation_lines(reports: dict) -> list[str]:
    width = max(len(label) for label in reports)
    lines = [f"{'variant'.ljust(width)}  war       uar"]
    for label, report in reports.items():
        lines.append(f"{label.ljust(width)}  {report.war:.6f}  {report.uar:.6f}")
    return lines


def ablation_csv(reports: dict) -> str:
    rows = ["variant,war,uar"]
    rows += [f"{label},{r.war:.6f},{r.uar:.6f}" for label, r in reports.items()]
    return "\n".join(rows) + "\n"
