"""Line-oriented run configuration: ``key = value`` under ``[section]`` headers.

Sections are model, sampling, loss, optimizer, data, output. Every key has a
desk-scale default, so an empty file is a valid run; unknown sections or keys
fail fast with their line number. ``#`` starts a comment.

Grid geometry is derived, never stated: linear-patch divides the input by
patch_size, the conv stem divides it by its fixed factor, precomputed keeps
it. The training-config digest hashes everything except the epoch budget and
the [output] section, so a resumed run can extend epochs or redirect files
but not silently change the experiment.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

from .embed import CONV_STEM_FACTOR, SamplingPlan, StemConfig
from .errors import ConfigError
from .losses import LossConfig
from .model import ModelGeometry
from .synthetic import SyntheticSpec

DIGEST_BYTES = 8

_DEFAULTS = {
    "model": {
        "stem": "linear-patch",
        "in_height": "16",
        "in_width": "16",
        "in_channels": "1",
        "patch_size": "4",
        "stem_channels": "",
        "frames": "8",
        "dim": "64",
        "heads": "4",
        "blocks": "2",
        "mlp_dim": "256",
        "classes": "2",
    },
    "sampling": {"segments": "4", "span": "2"},
    "loss": {"kind": "ce", "smoothing": "0.1", "beta": "0.2", "kl_variant": "standard"},
    "optimizer": {
        "lr": "0.05",
        "lr_decay_epochs": "40",
        "epochs": "60",
        "batch": "32",
        "momentum": "0.0",
        "weight_decay": "0.0",
        "seed": "0",
    },
    "data": {
        "task": "motion-direction",
        "sigma": "0.1",
        "train_size": "400",
        "test_size": "400",
        "seed": "0",
        "raw_frames": "8",
    },
    "output": {"checkpoint": "", "report": "", "confusion": "", "history": "", "data": ""},
}


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.05
    lr_decay_epochs: int = 40
    epochs: int = 60
    batch: int = 32
    momentum: float = 0.0
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.lr_decay_epochs < 1 or self.epochs < 1 or self.batch < 1:
            raise ConfigError("lr_decay_epochs, epochs and batch must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class DataConfig:
    """Raw [data] settings; the validated task spec is built on demand.

    Task-vs-class compatibility is a generation-time contract, not a parse
    error: presets whose data section is never sampled stay loadable.
    """

    task: str = "motion-direction"
    sigma: float = 0.1
    train_size: int = 400
    test_size: int = 400
    seed: int = 0
    raw_frames: int = 8


@dataclass(frozen=True)
class OutputConfig:
    checkpoint: str = ""
    report: str = ""
    confusion: str = ""
    history: str = ""
    data: str = ""


@dataclass(frozen=True)
class RunConfig:
    geometry: ModelGeometry
    segments: int
    span: int
    loss: LossConfig
    optimizer: OptimizerConfig
    data: DataConfig
    output: OutputConfig

    def __post_init__(self):
        if self.segments * self.span != self.geometry.frames:
            raise ConfigError(
                f"sampling yields {self.segments * self.span} frames, "
                f"model expects {self.geometry.frames}")

    def plan(self, mode: str) -> SamplingPlan:
        return SamplingPlan(segments=self.segments, span=self.span, mode=mode)

    def synthetic_spec(self) -> SyntheticSpec:
        """Task spec matching this model's input geometry and class count."""
        return SyntheticSpec(
            task=self.data.task,
            classes=self.geometry.classes,
            frames=self.data.raw_frames,
            height=self.geometry.stem.in_height,
            width=self.geometry.stem.in_width,
            channels=self.geometry.stem.in_channels,
            sigma=self.data.sigma,
            train_size=self.data.train_size,
            test_size=self.data.test_size,
            seed=self.data.seed,
        )


def _parse_lines(text: str) -> tuple[dict, set]:
    """Raw section/key/value strings plus the set of explicitly set keys.

    Unknown names and duplicates are errors.
    """
    sections = {name: dict(defaults) for name, defaults in _DEFAULTS.items()}
    seen = set()
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in sections:
                raise ConfigError(f"line {lineno}: unknown section [{current}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in sections[current]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{current}]")
        if (current, key) in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        seen.add((current, key))
        sections[current][key] = value
    return sections, seen


def _as_int(sections, section, key) -> int:
    value = sections[section][key]
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}") from None


def _as_float(sections, section, key) -> float:
    value = sections[section][key]
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a number, got {value!r}") from None


def _build_geometry(sections, explicit) -> ModelGeometry:
    kind = sections["model"]["stem"]
    in_h = _as_int(sections, "model", "in_height")
    in_w = _as_int(sections, "model", "in_width")
    in_c = _as_int(sections, "model", "in_channels")
    if kind != "linear-patch" and ("model", "patch_size") in explicit:
        raise ConfigError(f"[model] patch_size does not apply to the {kind} stem")
    if kind != "conv-stem" and ("model", "stem_channels") in explicit:
        raise ConfigError(f"[model] stem_channels does not apply to the {kind} stem")
    patch = _as_int(sections, "model", "patch_size") if kind == "linear-patch" else 0
    if kind == "linear-patch":
        if patch < 1 or in_h % patch or in_w % patch:
            raise ConfigError(
                f"[model] patch_size {patch} does not tile the {in_h}x{in_w} input")
        grid_h, grid_w = in_h // patch, in_w // patch
        channels = patch * patch * in_c
    elif kind == "conv-stem":
        if ("model", "stem_channels") not in explicit:
            raise ConfigError("[model] conv-stem requires stem_channels")
        channels = _as_int(sections, "model", "stem_channels")
        grid_h, grid_w = in_h // CONV_STEM_FACTOR, in_w // CONV_STEM_FACTOR
    elif kind == "precomputed":
        grid_h, grid_w, channels = in_h, in_w, in_c
    else:
        raise ConfigError(f"[model] unknown stem {kind!r}")
    stem = StemConfig(kind=kind, in_height=in_h, in_width=in_w, in_channels=in_c,
                      grid_h=grid_h, grid_w=grid_w, channels=channels, patch_size=patch)
    return ModelGeometry(
        stem=stem,
        frames=_as_int(sections, "model", "frames"),
        dim=_as_int(sections, "model", "dim"),
        heads=_as_int(sections, "model", "heads"),
        blocks=_as_int(sections, "model", "blocks"),
        mlp_dim=_as_int(sections, "model", "mlp_dim"),
        classes=_as_int(sections, "model", "classes"),
    )


def parse_config(text: str) -> RunConfig:
    sections, explicit = _parse_lines(text)
    geometry = _build_geometry(sections, explicit)
    loss = LossConfig(
        kind=sections["loss"]["kind"],
        smoothing=_as_float(sections, "loss", "smoothing"),
        beta=_as_float(sections, "loss", "beta"),
        kl_variant=sections["loss"]["kl_variant"],
    )
    optimizer = OptimizerConfig(
        lr=_as_float(sections, "optimizer", "lr"),
        lr_decay_epochs=_as_int(sections, "optimizer", "lr_decay_epochs"),
        epochs=_as_int(sections, "optimizer", "epochs"),
        batch=_as_int(sections, "optimizer", "batch"),
        momentum=_as_float(sections, "optimizer", "momentum"),
        weight_decay=_as_float(sections, "optimizer", "weight_decay"),
        seed=_as_int(sections, "optimizer", "seed"),
    )
    data = DataConfig(
        task=sections["data"]["task"],
        sigma=_as_float(sections, "data", "sigma"),
        train_size=_as_int(sections, "data", "train_size"),
        test_size=_as_int(sections, "data", "test_size"),
        seed=_as_int(sections, "data", "seed"),
        raw_frames=_as_int(sections, "data", "raw_frames"),
    )
    output = OutputConfig(**sections["output"])
    return RunConfig(
        geometry=geometry,
        segments=_as_int(sections, "sampling", "segments"),
        span=_as_int(sections, "sampling", "span"),
        loss=loss,
        optimizer=optimizer,
        data=data,
        output=output,
    )


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def desk_config() -> RunConfig:
    return parse_config("")


def full_scale_config() -> RunConfig:
    """The full-scale preset; shape and schedule checks only, never trained here."""
    return parse_config(
        "[model]\n"
        "in_height = 224\n"
        "in_width = 224\n"
        "in_channels = 3\n"
        "patch_size = 16\n"
        "frames = 16\n"
        "dim = 512\n"
        "heads = 8\n"
        "blocks = 4\n"
        "mlp_dim = 2048\n"
        "classes = 7\n"
        "[sampling]\n"
        "segments = 8\n"
        "span = 2\n"
        "[optimizer]\n"
        "lr = 0.01\n"
        "momentum = 0.0\n"
        "batch = 32\n"
        "[data]\n"
        "raw_frames = 64\n"
    )


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """CLI --seed override: reseeds both the optimizer and the data streams."""
    return replace(cfg, optimizer=replace(cfg.optimizer, seed=seed),
                   data=replace(cfg.data, seed=seed))


def canonical_text(cfg: RunConfig) -> str:
    """Stable rendering of everything that defines the experiment.

    Excludes the epoch budget and all output paths: extending training or
    redirecting files must not invalidate a resume.
    """
    g, s = cfg.geometry, cfg.geometry.stem
    pairs = [
        ("model.stem", s.kind), ("model.in_height", s.in_height),
        ("model.in_width", s.in_width), ("model.in_channels", s.in_channels),
        ("model.patch_size", s.patch_size), ("model.channels", s.channels),
        ("model.grid_h", s.grid_h), ("model.grid_w", s.grid_w),
        ("model.frames", g.frames), ("model.dim", g.dim), ("model.heads", g.heads),
        ("model.blocks", g.blocks), ("model.mlp_dim", g.mlp_dim), ("model.classes", g.classes),
        ("sampling.segments", cfg.segments), ("sampling.span", cfg.span),
        ("loss.kind", cfg.loss.kind), ("loss.smoothing", repr(cfg.loss.smoothing)),
        ("loss.beta", repr(cfg.loss.beta)), ("loss.kl_variant", cfg.loss.kl_variant),
        ("optimizer.lr", repr(cfg.optimizer.lr)),
        ("optimizer.lr_decay_epochs", cfg.optimizer.lr_decay_epochs),
        ("optimizer.batch", cfg.optimizer.batch),
        ("optimizer.momentum", repr(cfg.optimizer.momentum)),
        ("optimizer.weight_decay", repr(cfg.optimizer.weight_decay)),
        ("optimizer.seed", cfg.optimizer.seed),
        ("data.task", cfg.data.task), ("data.sigma", repr(cfg.data.sigma)),
        ("data.train_size", cfg.data.train_size), ("data.test_size", cfg.data.test_size),
        ("data.seed", cfg.data.seed), ("data.raw_frames", cfg.data.raw_frames),
    ]
    return "".join(f"{k}={v}\n" for k, v in pairs)


def config_digest(cfg: RunConfig) -> bytes:
    return hashlib.blake2b(canonical_text(cfg).encode(), digest_size=DIGEST_BYTES).digest()
