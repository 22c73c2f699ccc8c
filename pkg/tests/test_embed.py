"""Frame sampling, stems, token assembly, feature files."""

import numpy as np
import pytest

from stt import embed
from stt import tensor as T
from stt.embed import (
    PositionalEmbeddings,
    SamplingPlan,
    StemConfig,
    assemble_input,
    init_stem_params,
    read_features,
    sample_frames,
    stem_forward,
    tokenize_project,
    write_features,
)
from stt.errors import (
    ConfigError,
    DimensionError,
    FeatureFormatError,
    FeatureSizeError,
    FeatureVersionError,
    InputError,
)
from stt.tensor import Tensor


# ---- sampling ----


def test_test_mode_centers_runs_in_48_frame_clip():
    plan = SamplingPlan(segments=8, span=2, mode="test")
    idx = sample_frames(48, plan)
    expected = sorted(v for s in range(8) for v in (6 * s + 2, 6 * s + 3))
    assert idx.tolist() == expected


def test_sixteen_frame_clip_is_fully_covered_either_mode():
    for mode in ("train", "test"):
        plan = SamplingPlan(segments=8, span=2, mode=mode)
        idx = sample_frames(16, plan, np.random.default_rng(3))
        assert idx.tolist() == list(range(16))


def test_default_plan_films_sixteen_frames():
    assert SamplingPlan(segments=8, span=2).frames == 16


def test_train_mode_draws_stay_inside_segment_bounds():
    plan = SamplingPlan(segments=4, span=2, mode="train")
    rng = np.random.default_rng(11)
    length = 13  # segments sized 4,3,3,3
    bounds = [(0, 3), (4, 6), (7, 9), (10, 12)]
    for _ in range(10_000):
        idx = sample_frames(length, plan, rng)
        for s, (lo, hi) in enumerate(bounds):
            seg = idx[2 * s : 2 * s + 2]
            assert lo <= seg[0] <= seg[1] <= hi
            assert seg[1] == seg[0] + 1


def test_indices_ordered_within_and_across_segments():
    plan = SamplingPlan(segments=5, span=3, mode="train")
    rng = np.random.default_rng(5)
    for length in (15, 17, 23, 40):
        idx = sample_frames(length, plan, rng)
        runs = idx.reshape(5, 3)
        assert (np.diff(runs, axis=1) >= 0).all()
        assert (runs[1:, 0] > runs[:-1, -1]).all()


def test_short_segments_repeat_their_last_frame():
    plan = SamplingPlan(segments=4, span=2, mode="test")
    assert sample_frames(5, plan).tolist() == [0, 1, 2, 2, 3, 3, 4, 4]
    assert sample_frames(1, plan).tolist() == [0] * 8
    assert sample_frames(3, plan).tolist() == [0, 0, 1, 1, 2, 2, 2, 2]


def test_sampling_input_validation():
    plan = SamplingPlan(segments=2, span=2, mode="train")
    with pytest.raises(InputError):
        sample_frames(0, SamplingPlan(segments=2, span=2))
    with pytest.raises(InputError):
        sample_frames(8, plan)  # train mode without rng
    with pytest.raises(InputError):
        SamplingPlan(segments=0, span=2)
    with pytest.raises(InputError):
        SamplingPlan(segments=2, span=2, mode="validate")


def test_test_mode_is_deterministic():
    plan = SamplingPlan(segments=3, span=2, mode="test")
    a = sample_frames(20, plan)
    b = sample_frames(20, plan)
    assert (a == b).all()


# ---- stems ----


def _patch_cfg(h0=8, w0=8, cin=1, patch=4):
    return StemConfig(
        kind="linear-patch", in_height=h0, in_width=w0, in_channels=cin,
        grid_h=h0 // patch, grid_w=w0 // patch, channels=patch * patch * cin, patch_size=patch,
    )


def test_precomputed_stem_is_identity():
    cfg = StemConfig(kind="precomputed", in_height=2, in_width=2, in_channels=5,
                     grid_h=2, grid_w=2, channels=5)
    frames = Tensor(np.random.default_rng(0).normal(size=(3, 2, 2, 5)))
    out = stem_forward(frames, cfg)
    assert out is frames


def test_linear_patch_stem_matches_manual_flatten():
    cfg = _patch_cfg(h0=4, w0=4, cin=2, patch=2)
    rng = np.random.default_rng(1)
    frames = rng.normal(size=(3, 4, 4, 2))
    out = stem_forward(Tensor(frames), cfg).data
    assert out.shape == (3, 2, 2, 8)
    for f in range(3):
        for gi in range(2):
            for gj in range(2):
                block = frames[f, 2 * gi : 2 * gi + 2, 2 * gj : 2 * gj + 2, :].reshape(-1)
                np.testing.assert_array_equal(out[f, gi, gj], block)


def test_conv_stem_shape_and_per_frame_independence():
    cfg = StemConfig(kind="conv-stem", in_height=16, in_width=16, in_channels=1,
                     grid_h=4, grid_w=4, channels=8)
    params = init_stem_params(cfg, np.random.default_rng(2), dtype=np.float64)
    frames = np.random.default_rng(3).normal(size=(4, 16, 16, 1))
    out = stem_forward(Tensor(frames), cfg, params).data
    assert out.shape == (4, 4, 4, 8)
    perm = [2, 0, 3, 1]
    out_perm = stem_forward(Tensor(frames[perm]), cfg, params).data
    np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)


def test_conv_stem_requires_params_and_matching_geometry():
    cfg = StemConfig(kind="conv-stem", in_height=16, in_width=16, in_channels=1,
                     grid_h=4, grid_w=4, channels=8)
    frames = Tensor(np.zeros((2, 16, 16, 1)))
    with pytest.raises(ConfigError):
        stem_forward(frames, cfg, None)
    with pytest.raises(ConfigError):
        stem_forward(Tensor(np.zeros((2, 8, 8, 1))), cfg, init_stem_params(cfg, np.random.default_rng(0)))
    with pytest.raises(ConfigError):
        StemConfig(kind="conv-stem", in_height=10, in_width=16, in_channels=1,
                   grid_h=4, grid_w=4, channels=8)
    with pytest.raises(ConfigError):
        StemConfig(kind="mlp-stem", in_height=16, in_width=16, in_channels=1,
                   grid_h=4, grid_w=4, channels=8)


def test_stem_is_stateless():
    cfg = _patch_cfg()
    frames = Tensor(np.random.default_rng(4).normal(size=(2, 8, 8, 1)))
    a = stem_forward(frames, cfg).data
    b = stem_forward(frames, cfg).data
    np.testing.assert_array_equal(a, b)


# ---- tokenization ----


def test_identity_projection_is_pure_flatten():
    rng = np.random.default_rng(5)
    feat = rng.normal(size=(2, 3, 3, 6))
    out = tokenize_project(Tensor(feat), Tensor(np.eye(6))).data
    np.testing.assert_array_equal(out, feat.reshape(2, 9, 6))


def test_degenerate_single_patch_grid():
    feat = np.random.default_rng(6).normal(size=(4, 1, 1, 3))
    w = np.random.default_rng(7).normal(size=(3, 5))
    out = tokenize_project(Tensor(feat), Tensor(w)).data
    assert out.shape == (4, 1, 5)
    np.testing.assert_allclose(out[:, 0, :], feat.reshape(4, 3) @ w, atol=1e-12)


def test_tokenize_per_token_oracle_row_major():
    rng = np.random.default_rng(8)
    feat = rng.normal(size=(2, 2, 3, 4))
    w = rng.normal(size=(4, 5))
    out = tokenize_project(Tensor(feat), Tensor(w)).data
    for f in range(2):
        for p in range(6):
            gi, gj = divmod(p, 3)
            np.testing.assert_allclose(out[f, p], feat[f, gi, gj] @ w, atol=1e-12)


def test_tokenize_channel_mismatch():
    with pytest.raises(DimensionError):
        tokenize_project(Tensor(np.zeros((1, 2, 2, 3))), Tensor(np.zeros((4, 5))))


# ---- assembly ----


def _zero_pe(patches, frames, dim):
    return PositionalEmbeddings(
        e_space=Tensor(np.zeros((1, patches, dim))),
        e_time=Tensor(np.zeros((1, frames + 1, dim))),
        cls=Tensor(np.zeros(dim)),
    )


def test_assemble_with_zero_embeddings_is_reshape_plus_prepend():
    rng = np.random.default_rng(9)
    f1 = rng.normal(size=(3, 4, 5))  # F=3, P=4, d=5
    z0 = assemble_input(Tensor(f1), _zero_pe(4, 3, 5)).data
    assert z0.shape == (4, 4, 5)
    assert not z0[:, 0, :].any()
    np.testing.assert_array_equal(z0[:, 1:, :], f1.transpose(1, 0, 2))
    assert np.isclose(np.abs(z0[:, 1:, :]).sum(), np.abs(f1).sum())


def test_assemble_replicates_cls_across_patches():
    rng = np.random.default_rng(10)
    f1 = rng.normal(size=(2, 6, 4))
    pe = PositionalEmbeddings(
        e_space=Tensor(rng.normal(size=(1, 6, 4))),
        e_time=Tensor(rng.normal(size=(1, 3, 4))),
        cls=Tensor(rng.normal(size=4)),
    )
    z0 = assemble_input(Tensor(f1), pe).data
    expected_slot0 = pe.cls.data + pe.e_time.data[0, 0]
    for p in range(6):
        np.testing.assert_allclose(z0[p, 0], expected_slot0, atol=1e-12)
    np.testing.assert_allclose(
        z0[:, 1:, :],
        (f1 + pe.e_space.data).transpose(1, 0, 2) + pe.e_time.data[0, 1:, :],
        atol=1e-12,
    )


def test_assemble_batched_matches_per_clip():
    rng = np.random.default_rng(11)
    f1 = rng.normal(size=(2, 3, 4, 5))
    pe = PositionalEmbeddings(
        e_space=Tensor(rng.normal(size=(1, 4, 5))),
        e_time=Tensor(rng.normal(size=(1, 4, 5))),
        cls=Tensor(rng.normal(size=5)),
    )
    batched = assemble_input(Tensor(f1), pe).data
    for b in range(2):
        single = assemble_input(Tensor(f1[b]), pe).data
        np.testing.assert_array_equal(batched[b], single)


def test_assemble_shape_mismatch_errors():
    f1 = Tensor(np.zeros((2, 4, 5)))
    with pytest.raises(DimensionError):
        assemble_input(f1, _zero_pe(3, 2, 5))
    with pytest.raises(DimensionError):
        assemble_input(f1, _zero_pe(4, 3, 5))


# ---- feature files ----


def test_feature_file_round_trip_is_bitwise(tmp_path):
    rng = np.random.default_rng(12)
    feat = rng.normal(size=(3, 2, 4, 6)).astype(np.float32)
    path = tmp_path / "clip.stf"
    write_features(path, feat)
    back = read_features(path)
    assert back.dtype == np.float32
    assert (back == feat).all()
    assert back.tobytes() == feat.tobytes()


def test_feature_file_error_kinds(tmp_path):
    feat = np.ones((2, 2, 2, 2), dtype=np.float32)
    path = tmp_path / "clip.stf"
    write_features(path, feat)
    raw = path.read_bytes()

    bad_magic = tmp_path / "magic.stf"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FeatureFormatError):
        read_features(bad_magic)

    bad_version = tmp_path / "version.stf"
    bad_version.write_bytes(raw[:4] + (9).to_bytes(4, "little") + raw[8:])
    with pytest.raises(FeatureVersionError):
        read_features(bad_version)

    short = tmp_path / "short.stf"
    short.write_bytes(raw[:-8])
    with pytest.raises(FeatureSizeError):
        read_features(short)
