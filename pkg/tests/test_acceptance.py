"""Shipping gate: one test per primary acceptance criterion.

Each test prints a single verdict line (visible with ``pytest -s``); the same
text rides the assertion message so a failure names its criterion. Criterion
5 trains eight desk-scale models and dominates the runtime; everything else
finishes in seconds.
"""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np

import stt.tensor as T
from helpers_losses import (
    compact_binary_vs_ce_deviation,
    compact_uniform_regularizer_deviation,
    smoothing_dual_form_deviation,
    worked_example_loss,
)
from helpers_model import (
    cls_uniformity_deviation,
    random_attention_params,
    random_grid,
    ref_spatial,
    ref_temporal,
    spatial_equivariance_deviation,
    temporal_invariance_deviation,
    weight_normalization_deviation,
)
from stt.checkpoint import load_checkpoint, save_checkpoint
from stt.config import OutputConfig, load_config, full_scale_config, parse_config
from stt.gradcheck import grad_check
from stt.losses import LossConfig, compute_loss
from stt.metrics import uar_war
from stt.model import Variant, forward_batch, init_params, spatial_attention, temporal_attention
from stt.synthetic import gen_synthetic
from stt.tensor import Tensor
from stt.train import ablate, lr_at, train_model

SEEDS = range(50)


def _verdict(tag: str, ok: bool, detail: str) -> None:
    line = f"[{tag}] {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


def _op_suite_worst(rng) -> float:
    """One finite-difference probe per differentiable op."""

    def leaf(*shape, scale=1.0, offset=0.0):
        return Tensor(offset + scale * rng.standard_normal(shape), requires_grad=True)

    def mixer(out_shape):
        mix = Tensor(rng.standard_normal(out_shape))
        return lambda out: T.tensor_sum(out * mix)

    a = leaf(3, 4)
    b = leaf(3, 4)
    m_left = leaf(2, 3)
    m_right = leaf(3, 4)
    v = leaf(6)
    pos = Tensor(0.5 + rng.random((3, 4)), requires_grad=True)
    gamma = leaf(4, offset=1.0, scale=0.1)
    beta = leaf(4, scale=0.1)
    img = leaf(1, 6, 6, 2)

    cases = [
        ("add", [a, b], lambda s=mixer((3, 4)): s(a + b)),
        ("sub", [a, b], lambda s=mixer((3, 4)): s(a - b)),
        ("mul", [a, b], lambda s=mixer((3, 4)): s(a * b)),
        ("neg", [a], lambda s=mixer((3, 4)): s(-a)),
        ("matmul", [m_left, m_right], lambda s=mixer((2, 4)): s(T.matmul(m_left, m_right))),
        ("reshape", [a], lambda s=mixer((4, 3)): s(T.reshape(a, (4, 3)))),
        ("transpose", [a], lambda s=mixer((4, 3)): s(T.transpose(a, (1, 0)))),
        ("getitem", [a], lambda s=mixer((2, 2)): s(a[0:2, 1:3])),
        ("take", [v], lambda s=mixer((4,)): s(T.take(v, [0, 2, 2, 5], axis=0))),
        ("pick", [a], lambda s=mixer((3,)): s(T.pick(a, np.array([1, 3, 0])))),
        ("concat", [m_left, a], lambda s=mixer((3, 6)): s(T.concat([T.transpose(m_left, (1, 0)), a], axis=1))),
        ("expand", [v], lambda s=mixer((3, 5, 6)): s(T.expand(T.reshape(v, (1, 1, 6)), (3, 5, 6)))),
        ("tensor_sum", [a], lambda s=mixer((4,)): s(T.tensor_sum(a, axis=0))),
        ("mean", [a], lambda s=mixer((3,)): s(T.mean(a, axis=1))),
        ("exp", [a], lambda s=mixer((3, 4)): s(T.exp(a * 0.3))),
        ("log", [pos], lambda s=mixer((3, 4)): s(T.log(pos))),
        ("gelu", [a], lambda s=mixer((3, 4)): s(T.gelu(a))),
        ("softmax", [a], lambda s=mixer((3, 4)): s(T.softmax(a, axis=-1))),
        ("log_softmax", [a], lambda s=mixer((3, 4)): s(T.log_softmax(a, axis=-1))),
        ("layer_norm", [a, gamma, beta], lambda s=mixer((3, 4)): s(T.layer_norm(a, gamma, beta))),
        ("extract_patches", [img], lambda s=mixer((1, 3, 3, 18)): s(T.extract_patches(img, 3, 2, pad=1))),
    ]
    worst = 0.0
    for name, params, f in cases:
        err = grad_check(f, params)
        assert np.isfinite(err), name
        worst = max(worst, err)
    return worst


def tiny_geometry():
    return parse_config(
        "[model]\nin_height = 8\nin_width = 8\nframes = 4\ndim = 16\nheads = 2\n"
        "blocks = 2\nmlp_dim = 32\nclasses = 3\n[sampling]\nsegments = 2\n"
        "[data]\nraw_frames = 4\n").geometry


def test_primary_1_gradient_suite():
    t0 = time.time()
    rng = np.random.default_rng(7)
    worst_ops = _op_suite_worst(rng)

    geometry = tiny_geometry()
    params = init_params(geometry, np.random.default_rng(11), dtype=np.float64)
    frames = Tensor(rng.standard_normal((2, 4, 8, 8, 1)), dtype=np.float64)
    labels = np.array([0, 2])
    loss_cfg = LossConfig(kind="compact", beta=0.2)

    def objective():
        return compute_loss(forward_batch(frames, params, Variant.BOTH), labels, loss_cfg)

    worst_model = grad_check(objective, [t for _, t in params.tensors()])
    elapsed = time.time() - t0
    ok = worst_ops < 1e-4 and worst_model < 1e-4 and elapsed < 60.0
    _verdict("PRIMARY 1 gradient suite", ok,
             f"ops={worst_ops:.2e} model={worst_model:.2e} elapsed={elapsed:.1f}s")


def test_primary_2_loss_identities():
    dual = smoothing_dual_form_deviation(0, count=1000)

    uniform_dev = max(compact_uniform_regularizer_deviation(s) for s in range(5))

    # spread non-target logits must strictly increase the loss over plain CE
    rng = np.random.default_rng(1)
    min_reg = np.inf
    for _ in range(200):
        while True:
            c = int(rng.integers(3, 8))
            logits = Tensor(3.0 * rng.standard_normal(c))
            y = int(rng.integers(c))
            if np.ptp(np.delete(logits.data, y)) > 1e-2:
                break
        ce = compute_loss(logits, y, LossConfig(kind="ce"))
        compact = compute_loss(logits, y, LossConfig(kind="compact", beta=1.0))
        min_reg = min(min_reg, float(compact.data) - float(ce.data))

    binary_dev = max(compact_binary_vs_ce_deviation(s) for s in range(5))
    worked_err = abs(worked_example_loss() - 1.636903)

    ok = (dual < 1e-10 and uniform_dev < 1e-12 and min_reg > 0.0
          and binary_dev == 0.0 and worked_err < 1e-5)
    _verdict("PRIMARY 2 loss identities", ok,
             f"dual={dual:.2e} uniform={uniform_dev:.2e} min_reg={min_reg:.2e} "
             f"binary={binary_dev:.2e} worked={worked_err:.2e}")


def test_primary_3_attention_invariants():
    sums = max(weight_normalization_deviation(s) for s in SEEDS)
    equiv = max(spatial_equivariance_deviation(s) for s in SEEDS)
    t_inv = max(temporal_invariance_deviation(s) for s in SEEDS)
    cls_u = max(cls_uniformity_deviation(s) for s in SEEDS)
    ok = sums < 1e-6 and equiv < 1e-6 and t_inv < 1e-5 and cls_u < 1e-9
    _verdict("PRIMARY 3 attention invariants", ok,
             f"sum={sums:.2e} equivariance={equiv:.2e} "
             f"temporal={t_inv:.2e} cls_uniformity={cls_u:.2e}")


def test_primary_4_oracle_equivalence():
    worst = 0.0
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        d = 2 * int(rng.integers(2, 5))
        heads = int(rng.choice([1, 2]))
        z = random_grid(rng, patches=2, slots=3, d=d)  # 2 patches, 2 frames + cls
        ap = random_attention_params(rng, d)
        got_s = spatial_attention(z, ap, heads).data
        got_t = temporal_attention(z, ap, heads).data
        worst = max(worst,
                    float(np.abs(got_s - ref_spatial(z.data, ap, heads)).max()),
                    float(np.abs(got_t - ref_temporal(z.data, ap, heads)).max()))
    ok = worst < 1e-6
    _verdict("PRIMARY 4 oracle equivalence", ok, f"max_abs_diff={worst:.2e}")


def test_primary_5_ablation_trend():
    t0 = time.time()
    configs = Path(__file__).resolve().parents[1] / "configs"
    motion_cfg = replace(load_config(configs / "motion_desk.cfg"),
                         output=OutputConfig())
    motion = ablate(motion_cfg, gen_synthetic(motion_cfg.synthetic_spec()))

    static_cfg = replace(load_config(configs / "static_desk.cfg"),
                         output=OutputConfig())
    static = ablate(static_cfg, gen_synthetic(static_cfg.synthetic_spec()))
    elapsed = time.time() - t0

    motion_wars = {label: r.war for label, r in motion.items()}
    static_wars = {label: r.war for label, r in static.items()}
    ok = (motion_wars["both"] >= 0.9 and motion_wars["temporal-only"] >= 0.9
          and 0.4 <= motion_wars["baseline"] <= 0.6
          and all(war >= 0.9 for war in static_wars.values())
          and elapsed < 1800.0)
    detail_m = " ".join(f"{k}={v:.3f}" for k, v in motion_wars.items())
    detail_s = " ".join(f"{k}={v:.3f}" for k, v in static_wars.items())
    _verdict("PRIMARY 5 ablation trend", ok,
             f"motion[{detail_m}] static[{detail_s}] elapsed={elapsed:.0f}s")


def test_primary_6_schedule_metrics_reproducibility(tmp_path):
    opt = full_scale_config().optimizer
    schedule_ok = (lr_at(opt, 0) == 0.01 and lr_at(opt, 40) == 0.001
                   and lr_at(opt, 80) == 0.0001)

    perfect = uar_war(np.array([0, 1, 0, 1]), np.array([0, 1, 0, 1]), 2)
    preds = np.array([0] * 8 + [1] * 2 + [0] * 3 + [1] * 7)
    labels = np.array([0] * 10 + [1] * 10)
    mixed = uar_war(preds, labels, 2)
    metrics_ok = (perfect.war == 1.0 and perfect.uar == 1.0
                  and mixed.war == 0.75 and mixed.uar == 0.75
                  and tuple(mixed.per_class_recall) == (0.8, 0.7))

    micro = parse_config(
        "[model]\nin_height = 8\nin_width = 8\nframes = 4\ndim = 16\nheads = 2\n"
        "blocks = 1\nmlp_dim = 32\n[sampling]\nsegments = 2\n"
        "[data]\ntrain_size = 16\ntest_size = 16\nraw_frames = 4\n"
        "[optimizer]\nepochs = 2\nbatch = 8\n")
    data = gen_synthetic(micro.synthetic_spec())
    ckpt_a, hist_a = train_model(micro, data.train)
    ckpt_b, hist_b = train_model(micro, data.train)
    path_a, path_b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(ckpt_a, path_a)
    save_checkpoint(ckpt_b, path_b)
    same_seed_ok = hist_a == hist_b and path_a.read_bytes() == path_b.read_bytes()

    loaded = load_checkpoint(path_a)
    round_trip_ok = (loaded.epoch == ckpt_a.epoch
                     and loaded.rng_state == ckpt_a.rng_state
                     and all(np.array_equal(ta.data, tb.data) and ta.data.dtype == tb.data.dtype
                             for (_, ta), (_, tb) in zip(loaded.params.tensors(),
                                                         ckpt_a.params.tensors())))

    ok = schedule_ok and metrics_ok and same_seed_ok and round_trip_ok
    _verdict("PRIMARY 6 schedule metrics reproducibility", ok,
             f"schedule={schedule_ok} metrics={metrics_ok} "
             f"same_seed={same_seed_ok} round_trip={round_trip_ok}")
