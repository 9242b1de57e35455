"""Simulate a synthetic pool/CEX market and run the full report pipeline on it.

Usage: python scripts/run_experiment.py OUT_DIR [--seed N] [--days D] [--fee-bps F]

Writes the simulated inputs to OUT_DIR/data and the pipeline outputs to
OUT_DIR/report, then prints the report summary.
"""

import argparse
import json
import sys
from pathlib import Path

from mavlab.cli import main as cli_main
from mavlab.market_data import dump_bars_csv, dump_swaps_csv
from mavlab.synthetic import market_fixture


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--days", type=int, default=7)
    ap.add_argument("--fee-bps", type=float, default=8.0)
    args = ap.parse_args()

    out = Path(args.out)
    data = out / "data"
    data.mkdir(parents=True, exist_ok=True)
    swaps, bars = market_fixture(seed=args.seed, days=args.days)
    (data / "swaps.csv").write_text(dump_swaps_csv(swaps))
    (data / "bars.csv").write_text(dump_bars_csv(bars))
    config = {
        "swaps_path": "swaps.csv",
        "bars_path": "bars.csv",
        "out_dir": str((out / "report").resolve()),
        "fee_bps": args.fee_bps,
        "seed": args.seed,
    }
    (data / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    return cli_main(["report", "--config", str(data / "config.json")])


if __name__ == "__main__":
    sys.exit(main())
