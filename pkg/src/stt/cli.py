"""Command-line entry point.

Subcommands: gen-data, train, eval, ablate, grad-check. Every subcommand
takes --config (a key = value file; omitted means the built-in desk preset)
and --seed (overrides both the optimizer and data seeds). Progress goes to
stderr, results go to stdout and to any paths named in the config's [output]
section.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_digest, desk_config, load_config, with_seed
from .embed import StemConfig
from .errors import ConfigError, SttError
from .gradcheck import grad_check
from .losses import compute_loss
from .model import ModelGeometry, Variant, forward_batch, init_params
from .synthetic import gen_synthetic
from .tensor import Tensor
from .train import (
    ablate,
    ablation_csv,
    ablation_lines,
    evaluate,
    history_lines,
    train_model,
)

GRAD_CHECK_TOLERANCE = 1e-4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stt",
        description="Train and probe a factorized space-time attention classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(name, text):
        cmd = sub.add_parser(name, help=text, description=text)
        cmd.add_argument("--config", default=None,
                         help="run configuration file (default: built-in desk preset)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the optimizer and data seeds")
        return cmd

    common("gen-data", "generate the synthetic dataset and write it to the configured .npz")
    train = common("train", "train a model, then evaluate it on the test split")
    train.add_argument("--resume", default=None, metavar="CKPT",
                       help="checkpoint file to continue from")
    ev = common("eval", "evaluate a saved checkpoint on the test split")
    ev.add_argument("--ckpt", default=None,
                    help="checkpoint to evaluate (default: the configured path)")
    common("ablate", "train all four attention variants and tabulate test accuracy")
    common("grad-check", "verify model and loss gradients against finite differences")
    return parser


def _load(args) -> RunConfig:
    cfg = desk_config() if args.config is None else load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    return cfg


def _say(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def _write_text(path: str, text: str) -> None:
    out = Path(path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")


def _epoch_progress(total_epochs):
    def report(record):
        _say(f"epoch {record['epoch'] + 1}/{total_epochs} "
             f"lr {record['lr']:.6g} loss {record['loss']:.6f}")
    return report


def _cmd_gen_data(cfg: RunConfig, args) -> int:
    if not cfg.output.data:
        raise ConfigError("gen-data needs a path under [output] data = ...")
    data = gen_synthetic(cfg.synthetic_spec())
    _say(f"generated {len(data.train)} train / {len(data.test)} test clips "
         f"({cfg.data.task}, sigma={cfg.data.sigma})")
    out = Path(cfg.output.data)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(out,
                        train_clips=data.train.clips, train_labels=data.train.labels,
                        test_clips=data.test.clips, test_labels=data.test.labels)
    print(f"wrote {cfg.output.data}")
    return 0


def _report_eval(cfg: RunConfig, report) -> None:
    print(report.lines(), end="")
    if cfg.output.report:
        _write_text(cfg.output.report, report.lines())
    if cfg.output.confusion:
        _write_text(cfg.output.confusion, report.confusion_csv())


def _cmd_train(cfg: RunConfig, args) -> int:
    data = gen_synthetic(cfg.synthetic_spec())
    start = None
    if args.resume is not None:
        start = load_checkpoint(args.resume,
                                expected_geometry=cfg.geometry,
                                expected_digest=config_digest(cfg))
        _say(f"resuming from {args.resume} at epoch {start.epoch}")
    ckpt, history = train_model(cfg, data.train, start=start,
                                progress=_epoch_progress(cfg.optimizer.epochs))
    if cfg.output.checkpoint:
        save_checkpoint(ckpt, cfg.output.checkpoint)
        _say(f"saved checkpoint to {cfg.output.checkpoint}")
    if cfg.output.history and history:
        _write_text(cfg.output.history, "\n".join(history_lines(history)) + "\n")
    report = evaluate(ckpt.params, data.test, cfg.plan("test"))
    _report_eval(cfg, report)
    return 0


def _cmd_eval(cfg: RunConfig, args) -> int:
    path = args.ckpt or cfg.output.checkpoint
    if not path:
        raise ConfigError("eval needs --ckpt or a path under [output] checkpoint = ...")
    # geometry must fit; the digest is not enforced so any compatible
    # checkpoint can be scored against freshly seeded data
    ckpt = load_checkpoint(path, expected_geometry=cfg.geometry)
    data = gen_synthetic(cfg.synthetic_spec())
    _say(f"evaluating {path} (trained {ckpt.epoch} epochs) on {len(data.test)} clips")
    report = evaluate(ckpt.params, data.test, cfg.plan("test"))
    _report_eval(cfg, report)
    return 0


def _cmd_ablate(cfg: RunConfig, args) -> int:
    data = gen_synthetic(cfg.synthetic_spec())
    epochs = cfg.optimizer.epochs

    def progress(label, record):
        _say(f"[{label}] epoch {record['epoch'] + 1}/{epochs} loss {record['loss']:.6f}")

    reports = ablate(cfg, data, progress=progress)
    print("\n".join(ablation_lines(reports)))
    if cfg.output.report:
        _write_text(cfg.output.report, ablation_csv(reports))
    return 0


def _verification_geometry(classes: int) -> ModelGeometry:
    """Smallest geometry that still exercises every parameter group."""
    stem = StemConfig(kind="linear-patch", in_height=8, in_width=8, in_channels=1,
                      grid_h=2, grid_w=2, channels=16, patch_size=4)
    return ModelGeometry(stem=stem, frames=4, dim=16, heads=2, blocks=2,
                         mlp_dim=32, classes=classes)


def _cmd_grad_check(cfg: RunConfig, args) -> int:
    geometry = _verification_geometry(max(cfg.geometry.classes, 3))
    rng = np.random.default_rng(cfg.optimizer.seed)
    params = init_params(geometry, rng, dtype=np.float64)
    frames = Tensor(rng.standard_normal((2, geometry.frames, 8, 8, 1)), dtype=np.float64)
    labels = rng.integers(geometry.classes, size=2)
    tensors = params.tensors()
    _say(f"checking {sum(t.size for _, t in tensors)} coordinates "
         f"across {len(tensors)} parameter tensors (loss kind {cfg.loss.kind})")

    def objective():
        return compute_loss(forward_batch(frames, params, Variant.BOTH), labels, cfg.loss)

    worst = grad_check(objective, [t for _, t in tensors])
    status = "PASS" if worst < GRAD_CHECK_TOLERANCE else "FAIL"
    print(f"max_rel_err={worst:.3e} threshold={GRAD_CHECK_TOLERANCE:g} status={status}")
    return 0 if status == "PASS" else 1


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "grad-check": _cmd_grad_check,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](_load(args), args)
    except SttError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
