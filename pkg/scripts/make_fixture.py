"""Write the bundled synthetic market fixture (swaps.csv, bars.csv, config.json).

Usage: python scripts/make_fixture.py [OUT_DIR] [--seed N] [--days D]
"""

import argparse
import json
from pathlib import Path

from mavlab.market_data import dump_bars_csv, dump_swaps_csv
from mavlab.synthetic import market_fixture


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="tests/data/fixture")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--days", type=int, default=2)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    swaps, bars = market_fixture(seed=args.seed, days=args.days)
    (out / "swaps.csv").write_text(dump_swaps_csv(swaps))
    (out / "bars.csv").write_text(dump_bars_csv(bars))
    config = {
        "swaps_path": "swaps.csv",
        "bars_path": "bars.csv",
        "out_dir": "out",
        "fee_bps": 8,
        "threshold": "iqr",
        "k_min": 2,
        "k_max": 10,
        "restarts": 16,
        "seed": 0,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {len(swaps)} swaps and {len(bars)} bars to {out}")


if __name__ == "__main__":
    main()
