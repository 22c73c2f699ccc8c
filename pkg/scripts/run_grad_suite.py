#!/usr/bin/env python3
"""Run the finite-difference gradient suite for every loss kind.

Equivalent to `stt grad-check` with the loss section swapped through all
supported kinds; exits nonzero if any check fails.
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from stt.cli import main
from stt.losses import LOSS_KINDS


def run() -> int:
    status = 0
    started = time.time()
    root = Path(__file__).resolve().parents[1]
    for kind in LOSS_KINDS:
        config = root / "configs" / f"gradcheck_{kind}.cfg"
        config.parent.mkdir(exist_ok=True)
        config.write_text(f"[loss]\nkind = {kind}\n", encoding="utf-8")
        try:
            print(f"== grad-check loss kind {kind} ==", flush=True)
            status |= main(["grad-check", "--config", str(config)])
        finally:
            config.unlink()
    print(f"total wall time: {time.time() - started:.0f}s")
    return status


if __name__ == "__main__":
    sys.exit(run())
