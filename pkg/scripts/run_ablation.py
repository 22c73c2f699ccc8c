#!/usr/bin/env python3
"""Run the desk-scale ablation table: motion-direction task plus static control.

Equivalent to calling the CLI twice:

    stt ablate --config configs/motion_desk.cfg
    stt ablate --config configs/static_desk.cfg

Prints both tables and the total wall time.
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from stt.cli import main


def run() -> int:
    root = Path(__file__).resolve().parents[1]
    status = 0
    started = time.time()
    for name in ("motion_desk.cfg", "static_desk.cfg"):
        config = root / "configs" / name
        print(f"== ablate {config.name} ==", flush=True)
        status |= main(["ablate", "--config", str(config)])
    print(f"total wall time: {time.time() - started:.0f}s")
    return status


if __name__ == "__main__":
    sys.exit(run())
