"""Command-line pipeline: ingest -> detect -> analyze, plus one-off MAV queries.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import statistics
import sys
from collections import defaultdict
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .amm_core import PoolState
from .analysis import (
    FEATURES, build_features, cluster_table_text, elbow, feature_matrix, inertia_curve,
    kmeanspp, pca, regress_decay, standardize,
)
from .config import RunConfig
from .errors import ConfigError, DataError, DomainError, NumericError
from .market_data import align_minutes, dump_aligned_csv, load_cex_bars, load_swaps
from .mav_solver import mav_bruteforce, mav_cpmm
from .misalignment import (
    cumulative_mav, delta_series, dump_episodes_jsonl, format_ratio, load_episodes_jsonl,
    outlier_threshold, ratio_note, rolling_thresholds, segment_episodes,
)

log = logging.getLogger("mavlab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _clean_json(obj):
    if isinstance(obj, dict):
        return {str(k): _clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean_json(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _json(obj) -> str:
    return json.dumps(_clean_json(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Output directory bookkeeping shared by the subcommands."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: dict[str, str] = {}

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.written[name] = hashlib.sha256(text.encode()).hexdigest()

    def manifest(self) -> None:
        inputs = {}
        for key in ("swaps_path", "bars_path"):
            p = Path(getattr(self.cfg, key))
            if p.exists():
                inputs[p.name] = _sha256(p)
        doc = {
            "command": self.command,
            "config_sha256": self.cfg.digest(),
            "inputs": inputs,
            "outputs": dict(sorted(self.written.items())),
            "versions": {
                "mavlab": __version__,
                "numpy": np.__version__,
                "python": ".".join(platform.python_version_tuple()[:2]),
            },
        }
        (self.out / "manifest.json").write_text(_json(doc))


def _load_inputs(cfg: RunConfig):
    swaps = load_swaps(cfg.swaps_path, cfg.swaps_schema, cfg.quote_token)
    bars = load_cex_bars(cfg.bars_path)
    return swaps, bars


def _thresholds(cfg: RunConfig, aligned):
    if cfg.threshold != "iqr":
        return float(cfg.threshold), f"fixed {float(cfg.threshold):.6g}"
    deltas = delta_series(aligned)
    if cfg.rolling:
        return rolling_thresholds(deltas, cfg.rolling_window), f"rolling IQR over {cfg.rolling_window} minutes"
    thr = outlier_threshold(deltas)
    return thr, f"Q3 + 1.5 IQR of |delta| = {thr:.6g}"


def _day(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d")


def daily_summary(aligned, episodes) -> list[tuple]:
    """Per UTC day: max |delta|, MAV summed over episodes peaking that day, end-of-day TVL."""
    days: dict[str, dict] = {}
    for a in aligned:
        d = days.setdefault(_day(a.minute), {"max_abs_delta": 0.0, "mav": [], "episodes": 0,
                                             "volume": [], "tvl": 0.0})
        d["max_abs_delta"] = max(d["max_abs_delta"], abs(a.amm_spot - a.cex_close))
        d["volume"].append(a.amm_volume)
        d["tvl"] = a.reserve_x + a.reserve_y * a.amm_spot
    for e in episodes:
        d = days[_day(e.peak_minute)]
        d["mav"].append(e.peak_mav.mav)
        d["episodes"] += 1
    return [
        (day, d["max_abs_delta"], math.fsum(d["mav"]), d["episodes"], d["tvl"], math.fsum(d["volume"]))
        for day, d in sorted(days.items())
    ]


def run_detect(cfg: RunConfig, run: Run):
    swaps, bars = _load_inputs(cfg)
    aligned = align_minutes(swaps, bars)
    threshold, thr_text = _thresholds(cfg, aligned)
    episodes = segment_episodes(aligned, threshold)
    volume = math.fsum(a.amm_volume for a in aligned)
    total, ratio = cumulative_mav(episodes, volume)

    run.write("episodes.jsonl", dump_episodes_jsonl(episodes))
    run.write("daily_summary.csv", _csv(
        ["date", "max_abs_delta", "daily_mav", "episodes", "tvl", "amm_volume"],
        daily_summary(aligned, episodes),
    ))
    decays = [e.decay_seconds for e in episodes if e.resolved]
    lines = [
        f"aligned minutes: {len(aligned)} (traded {sum(a.traded for a in aligned)})",
        f"threshold: {thr_text}",
        f"episodes: {len(episodes)} (resolved {len(decays)}, unresolved {len(episodes) - len(decays)})",
        f"cumulative MAV: {total:,.2f}",
        f"AMM volume: {volume:,.2f}",
        f"MAV/volume: {format_ratio(ratio)}",
    ]
    if decays:
        lines.append(f"decay seconds: median {statistics.median(decays):g}, mean {statistics.fmean(decays):.1f}")
    if cfg.stated_ratio is not None and volume > 0:
        note = ratio_note(total, volume, cfg.stated_ratio)
        lines.append(f"note: {note}" if note else f"note: stated ratio {format_ratio(cfg.stated_ratio)} reproduced")
    summary = "\n".join(lines) + "\n"
    run.write("summary.txt", summary)
    return swaps, episodes, summary


def run_analyze(cfg: RunConfig, run: Run, swaps=None, episodes=None) -> str:
    if swaps is None:
        swaps = load_swaps(cfg.swaps_path, cfg.swaps_schema, cfg.quote_token)
    if episodes is None:
        path = run.out / "episodes.jsonl"
        if not path.exists():
            raise DataError(f"{path} not found; run 'detect' first")
        episodes = load_episodes_jsonl(path)

    rows, dropped = build_features(episodes, swaps, cfg.fee_bps)
    for start, reason in dropped:
        log.info("episode at %d dropped: %s", start, reason)
    raw = feature_matrix(rows)
    run.write("features.csv", _csv(["start_minute", *FEATURES], [(r.start_minute, *r.values()) for r in rows]))
    ks = list(range(cfg.k_min, min(cfg.k_max, len(rows)) + 1))
    if len(ks) < 3:
        raise DataError(f"only {len(rows)} usable episodes; clustering over k={cfg.k_min}..{cfg.k_max} "
                        "needs at least k_min + 2")
    z = standardize(raw, "zscore", FEATURES)

    pc = pca(z)
    inertias = inertia_curve(z, ks, cfg.restarts, cfg.seed)
    k_star = elbow(inertias)
    run.write("inertia.csv", _csv(["k", "inertia"], sorted(inertias.items())))
    clusters = kmeanspp(z, k_star, cfg.restarts, cfg.seed, summary=raw)
    proj = pc.project(z, 2)
    run.write("pca2d.csv", _csv(
        ["start_minute", "pc1", "pc2", "cluster"],
        [(r.start_minute, p[0], p[1], int(c)) for r, p, c in zip(rows, proj, clusters.labels)],
    ))
    doc = clusters.to_dict()
    doc["k_star"] = k_star
    doc["pca_variance_fractions"] = pc.fractions
    doc["pca_components"] = pc.components
    doc["start_minutes"] = [r.start_minute for r in rows]
    run.write("clusters.json", _json(doc))
    table = cluster_table_text(clusters)
    run.write("clusters.txt", table)

    group0 = [r for r, c in zip(rows, clusters.labels) if c == 0]
    if len(group0) < 10:
        raise DataError(f"largest cluster has {len(group0)} rows; the decay regression needs at least 10")
    reg = regress_decay(group0)
    run.write("regression.json", _json(reg.to_dict()))
    return (
        f"features: {len(rows)} rows ({len(dropped)} episodes dropped)\n"
        f"PCA variance fractions: {', '.join(f'{v:.2f}' for v in pc.fractions)}\n"
        f"elbow k: {k_star}\n" + table + reg.summary_text()
    )


def cmd_ingest(cfg: RunConfig) -> str:
    run = Run(cfg, "ingest")
    swaps, bars = _load_inputs(cfg)
    aligned = align_minutes(swaps, bars)
    run.write("aligned.csv", dump_aligned_csv(aligned))
    run.manifest()
    return (f"swaps: {len(swaps)}\nbars: {len(bars)}\naligned minutes: {len(aligned)} "
            f"(traded {sum(a.traded for a in aligned)})\n")


def cmd_detect(cfg: RunConfig) -> str:
    run = Run(cfg, "detect")
    _, _, summary = run_detect(cfg, run)
    run.manifest()
    return summary


def cmd_analyze(cfg: RunConfig) -> str:
    run = Run(cfg, "analyze")
    try:
        return run_analyze(cfg, run)
    finally:
        run.manifest()


def cmd_report(cfg: RunConfig) -> str:
    run = Run(cfg, "report")
    try:
        swaps, episodes, summary = run_detect(cfg, run)
        return summary + run_analyze(cfg, run, swaps, episodes)
    finally:
        run.manifest()


def cmd_mav(reserve_x: float, reserve_y: float, p_cex: float, verify: bool = False,
            grid_points: int = 1_000_000) -> str:
    try:
        pool = PoolState(reserve_x, reserve_y)
    except DomainError as exc:
        raise ConfigError(f"invalid pool: {exc}") from None
    try:
        res = mav_cpmm(pool, p_cex)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    lines = [
        f"p_amm: {res.p_amm:.10g}",
        f"p_cex: {res.p_cex:.10g}",
        f"direction: {res.direction.value}",
        f"v_max: {res.v_max:.10g}",
        f"mav: {res.mav:.10g}",
    ]
    if verify:
        bf = mav_bruteforce(pool, p_cex, grid_points)
        gap = abs(bf.mav - res.mav) / res.mav if res.mav else abs(bf.mav)
        lines.append(f"bruteforce mav: {bf.mav:.10g} (relative gap {gap:.3e})")
    return "\n".join(lines) + "\n"


def _build_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_json(args.config)
    elif args.swaps and args.bars:
        cfg = RunConfig(swaps_path=args.swaps, bars_path=args.bars)
    else:
        raise ConfigError("give --config or both --swaps and --bars")
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mavlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ingest", "validate inputs and write the per-minute aligned series"),
        ("detect", "find misalignment episodes and summarise MAV"),
        ("analyze", "features, PCA, KMeans++ and decay regression from episodes.jsonl"),
        ("report", "detect followed by analyze"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--swaps", help="swap log (when no config is given)")
        p.add_argument("--bars", help="CEX minute bars (when no config is given)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="seed override")
    p = sub.add_parser("mav", help="closed-form MAV for one CPMM pool and CEX price")
    p.add_argument("--reserve-x", type=float, required=True, help="quote-token reserve")
    p.add_argument("--reserve-y", type=float, required=True, help="base-token reserve")
    p.add_argument("--p-cex", type=float, required=True)
    p.add_argument("--verify", action="store_true", help="also run the grid-search oracle")
    p.add_argument("--grid-points", type=int, default=1_000_000)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mav":
            out = cmd_mav(args.reserve_x, args.reserve_y, args.p_cex, args.verify, args.grid_points)
        else:
            cfg = _build_config(args)
            out = {"ingest": cmd_ingest, "detect": cmd_detect,
                   "analyze": cmd_analyze, "report": cmd_report}[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, DomainError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
