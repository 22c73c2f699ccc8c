"""Synthetic clip benchmark with controlled spatio-temporal structure.

Three tasks:

- motion-direction: a full-height two-pixel bright bar drifts cyclically at
  2 px/frame. Class 0 drifts right, class 1 left; classes 2 and 3 add a
  vertical roll of the bar's brightness profile (down / up) on top of the
  two drift directions. Start columns are drawn uniformly from the even
  columns, so the bar-position distribution at every frame index is the
  same uniform-over-even-columns law for every class: no single frame, and
  in fact no unordered set of frames, carries class information. Only frame
  order does.
- apex-frame: a centered bright disk appears during exactly one third of
  the clip; the class says which third. Three classes by construction.
- static-pattern: a fixed texture (vertical stripes, horizontal stripes,
  checkerboard, flat gray) repeated in every frame; any single frame
  decides the class. Control task.

Gaussian pixel noise of scale sigma is added after the content. Train and
test splits are drawn from independent child streams of one seed, so they
are disjoint and individually reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

TASKS = ("motion-direction", "apex-frame", "static-pattern")

_DRIFT = 2  # bar drift in px/frame; also the vertical roll speed
_BAR_WIDTH = 3  # odd width keeps every partial patch overlap distinct


@dataclass(frozen=True)
class SyntheticSpec:
    task: str = "motion-direction"
    classes: int = 2
    frames: int = 8
    height: int = 16
    width: int = 16
    channels: int = 1
    sigma: float = 0.1
    train_size: int = 400
    test_size: int = 400
    seed: int = 0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}, expected one of {TASKS}")
        if min(self.frames, self.height, self.width, self.channels) < 1:
            raise ConfigError("clip geometry must be positive")
        if self.sigma < 0.0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.train_size < 1 or self.test_size < 1:
            raise ConfigError("train and test sizes must be >= 1")
        if self.task == "motion-direction":
            if not 2 <= self.classes <= 4:
                raise ConfigError("motion-direction supports 2 to 4 classes")
            if self.width % 2 != 0 or self.width < 4:
                raise ConfigError(f"motion-direction needs an even width >= 4, got {self.width}")
            if self.classes > 2 and self.height < 2:
                raise ConfigError("vertical-roll classes need height >= 2")
        elif self.task == "apex-frame":
            if self.classes != 3:
                raise ConfigError("apex-frame is a 3-class task")
            if self.frames % 3 != 0:
                raise ConfigError(f"apex-frame needs frames divisible by 3, got {self.frames}")
            if self.height < 4 or self.width < 4:
                raise ConfigError("apex-frame needs at least a 4x4 frame")
        else:
            if not 2 <= self.classes <= 4:
                raise ConfigError("static-pattern supports 2 to 4 classes")
            if self.height < 4 or self.width < 4:
                raise ConfigError("static-pattern needs at least a 4x4 frame")


@dataclass(frozen=True)
class ClipSet:
    """One split: clips (N, F, H, W, C) float32 and labels (N,) int64."""

    clips: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.clips.shape[0]


@dataclass(frozen=True)
class SyntheticData:
    spec: SyntheticSpec
    train: ClipSet
    test: ClipSet


def _bar_profile(height: int, phase: int) -> np.ndarray:
    # Brightness ramp 0.75..1.25 down the bar, rolled by ``phase`` rows.
    ramp = 0.75 + 0.5 * np.arange(height) / max(height - 1, 1)
    return np.roll(ramp, phase)


def _motion_clip(spec: SyntheticSpec, label: int, rng) -> np.ndarray:
    clip = np.zeros((spec.frames, spec.height, spec.width), dtype=np.float64)
    start = int(rng.integers(spec.width))
    phase = int(rng.integers(spec.height))
    drift = _DRIFT if label in (0, 2) else -_DRIFT
    roll = 0 if label < 2 else (_DRIFT if label == 2 else -_DRIFT)
    for t in range(spec.frames):
        col = (start + drift * t) % spec.width
        profile = _bar_profile(spec.height, phase + roll * t)
        for k in range(_BAR_WIDTH):
            clip[t, :, (col + k) % spec.width] = profile
    return clip


def _apex_clip(spec: SyntheticSpec, label: int, rng) -> np.ndarray:
    clip = np.zeros((spec.frames, spec.height, spec.width), dtype=np.float64)
    yy, xx = np.ogrid[: spec.height, : spec.width]
    cy, cx = (spec.height - 1) / 2.0, (spec.width - 1) / 2.0
    radius = min(spec.height, spec.width) / 4.0
    disk = ((yy - cy) ** 2 + (xx - cx) ** 2) <= radius ** 2
    third = spec.frames // 3
    clip[label * third : (label + 1) * third, disk] = 1.0
    return clip


def _static_clip(spec: SyntheticSpec, label: int, rng) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(spec.height), np.arange(spec.width), indexing="ij")
    if label == 0:
        frame = ((xx // 2) % 2).astype(np.float64)
    elif label == 1:
        frame = ((yy // 2) % 2).astype(np.float64)
    elif label == 2:
        frame = (((xx // 2) + (yy // 2)) % 2).astype(np.float64)
    else:
        frame = np.full((spec.height, spec.width), 0.5)
    return np.broadcast_to(frame, (spec.frames, spec.height, spec.width)).copy()


_MAKERS = {"motion-direction": _motion_clip, "apex-frame": _apex_clip, "static-pattern": _static_clip}


def _make_split(spec: SyntheticSpec, count: int, rng) -> ClipSet:
    make = _MAKERS[spec.task]
    clips = np.empty((count, spec.frames, spec.height, spec.width, spec.channels), dtype=np.float32)
    labels = np.arange(count, dtype=np.int64) % spec.classes  # balanced round robin
    for i in range(count):
        content = make(spec, int(labels[i]), rng)
        if spec.sigma > 0.0:
            content = content[..., None] + spec.sigma * rng.standard_normal(
                (spec.frames, spec.height, spec.width, spec.channels))
        else:
            content = np.broadcast_to(content[..., None],
                                      content.shape + (spec.channels,))
        clips[i] = content.astype(np.float32)
    return ClipSet(clips=clips, labels=labels)


def gen_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Deterministic train/test splits from independent child seed streams."""
    train_seq, test_seq = np.random.SeedSequence(spec.seed).spawn(2)
    return SyntheticData(
        spec=spec,
        train=_make_split(spec, spec.train_size, np.random.default_rng(train_seq)),
        test=_make_split(spec, spec.test_size, np.random.default_rng(test_seq)),
    )
