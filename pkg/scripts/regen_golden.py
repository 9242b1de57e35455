"""Regenerate the golden outputs under tests/golden from the bundled fixture.

Usage: python scripts/regen_golden.py

Run this only after an intentional change to the pipeline's outputs, and
review the diff before committing.
"""

import shutil
from pathlib import Path

from mavlab.cli import main

ROOT = Path(__file__).resolve().parents[1]
CONFIG = ROOT / "tests" / "data" / "fixture" / "config.json"
GOLDEN = ROOT / "tests" / "golden"


def regen():
    for command in ("ingest", "report"):
        out = GOLDEN / command
        if out.exists():
            shutil.rmtree(out)
        code = main([command, "--config", str(CONFIG), "--out", str(out)])
        if code:
            raise SystemExit(f"{command} exited with {code}")
    print(f"golden outputs written to {GOLDEN}")


if __name__ == "__main__":
    regen()
