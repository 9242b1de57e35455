"""Loading swap logs and CEX minute bars, and joining them per minute."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, fields
from itertools import groupby
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

log = logging.getLogger(__name__)

SWAP_COLUMNS = (
    "timestamp",
    "block_number",
    "tx_index",
    "log_index",
    "amount_x_in",
    "amount_x_out",
    "amount_y_in",
    "amount_y_out",
    "reserve_x_before",
    "reserve_y_before",
    "gas_fee",
)
OPTIONAL_SWAP_COLUMNS = ("l1_fee", "l2_fee")
BAR_COLUMNS = ("open_time", "open", "high", "low", "close", "volume")

_INT_FIELDS = {"timestamp", "block_number", "tx_index", "log_index", "open_time"}


@dataclass(frozen=True)
class SwapEvent:
    timestamp: int
    block_number: int
    tx_index: int
    log_index: int
    amount_x_in: float
    amount_x_out: float
    amount_y_in: float
    amount_y_out: float
    reserve_x_before: float
    reserve_y_before: float
    gas_fee: float
    l1_fee: float | None = None
    l2_fee: float | None = None

    def __post_init__(self):
        if (self.amount_x_in > 0) == (self.amount_y_in > 0):
            raise DataError("exactly one of amount_x_in, amount_y_in must be positive")
        if not (self.reserve_x_before > 0 and self.reserve_y_before > 0):
            raise DataError("reserves before the swap must be positive")
        amounts = (self.amount_x_in, self.amount_x_out, self.amount_y_in, self.amount_y_out, self.gas_fee)
        if any(not math.isfinite(a) or a < 0 for a in amounts):
            raise DataError("amounts and gas_fee must be finite and non-negative")

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.block_number, self.tx_index, self.log_index)

    @property
    def sells_y(self) -> bool:
        return self.amount_y_in > 0

    @property
    def reserve_x_after(self) -> float:
        return self.reserve_x_before + self.amount_x_in - self.amount_x_out

    @property
    def reserve_y_after(self) -> float:
        return self.reserve_y_before + self.amount_y_in - self.amount_y_out

    @property
    def quote_volume(self) -> float:
        """Traded notional in quote token (the X leg)."""
        return self.amount_x_in + self.amount_x_out


@dataclass(frozen=True)
class CexBar:
    open_time: int
    open: float
    high: float
    low: float
    close: float
    volume: float

    def __post_init__(self):
        if self.open_time % 60 != 0:
            raise DataError(f"open_time {self.open_time} is not aligned to a minute")
        if not (self.low <= self.open <= self.high and self.low <= self.close <= self.high):
            raise DataError(f"bar at {self.open_time} violates low <= open, close <= high")
        if not self.close > 0:
            raise DataError(f"bar at {self.open_time} has non-positive close")


@dataclass(frozen=True)
class AlignedMinute:
    minute: int
    cex_close: float
    amm_spot: float
    reserve_x: float
    reserve_y: float
    amm_volume: float
    avg_gas: float
    swap_count: int
    traded: bool
    has_bar: bool = True

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> AlignedMinute:
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})


def _convert(name: str, raw, where: str):
    try:
        if name in _INT_FIELDS:
            if isinstance(raw, str):
                return int(raw)
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        return float(raw)
    except (TypeError, ValueError):
        raise DataError(f"{where}: bad value {raw!r} for column {name}") from None


def _swap_from_record(rec: dict, where: str, quote: str) -> SwapEvent:
    missing = [c for c in SWAP_COLUMNS if c not in rec]
    if missing:
        raise DataError(f"{where}: missing columns {missing}")
    vals = {c: _convert(c, rec[c], where) for c in SWAP_COLUMNS}
    for c in OPTIONAL_SWAP_COLUMNS:
        if rec.get(c) not in (None, ""):
            vals[c] = _convert(c, rec[c], where)
    if quote == "y":
        # declared quote token is the pool's Y column: relabel so X is quote
        for a, b in (("amount_x_in", "amount_y_in"), ("amount_x_out", "amount_y_out"),
                     ("reserve_x_before", "reserve_y_before")):
            vals[a], vals[b] = vals[b], vals[a]
    try:
        return SwapEvent(**vals)
    except DataError as exc:
        raise DataError(f"{where}: {exc}") from None


def _read_records(path: Path, schema: str) -> Iterable[tuple[str, dict]]:
    if schema == "csv":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            extra = set(header) - set(SWAP_COLUMNS) - set(OPTIONAL_SWAP_COLUMNS)
            if tuple(h for h in header if h in SWAP_COLUMNS) != SWAP_COLUMNS or extra:
                raise DataError(f"{path}: header {header} does not match swap schema")
            for row_no, rec in enumerate(reader, start=1):
                yield f"{path}: row {row_no}", rec
    elif schema == "jsonl":
        with open(path) as fh:
            for row_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}: row {row_no}: invalid JSON ({exc.msg})") from None
                yield f"{path}: row {row_no}", rec
    else:
        raise DataError(f"unknown swap schema {schema!r}")


def load_swaps(path, schema: str | None = None, quote: str = "x") -> list[SwapEvent]:
    """Load swap events, returned in (block_number, tx_index, log_index) order.

    ``schema`` defaults from the file suffix. Out-of-order input is sorted
    and the number of displaced rows is logged as a warning; duplicate keys
    raise DataError.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if schema is None:
        schema = "jsonl" if path.suffix in (".jsonl", ".json") else "csv"
    if quote not in ("x", "y"):
        raise DataError(f"quote must be 'x' or 'y', got {quote!r}")
    events = [_swap_from_record(rec, where, quote) for where, rec in _read_records(path, schema)]
    out_of_order = sum(1 for a, b in zip(events, events[1:]) if b.key < a.key)
    if out_of_order:
        log.warning("%s: %d swap rows out of order; sorted", path, out_of_order)
        events.sort(key=lambda e: e.key)
    for a, b in zip(events, events[1:]):
        if a.key == b.key:
            raise DataError(f"{path}: duplicate event {a.key}")
    return events


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def dump_swaps_csv(events: Sequence[SwapEvent]) -> str:
    """Canonical CSV text; ``load_swaps`` of it reproduces ``events``."""
    split = any(e.l1_fee is not None or e.l2_fee is not None for e in events)
    cols = SWAP_COLUMNS + (OPTIONAL_SWAP_COLUMNS if split else ())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for e in events:
        w.writerow([_fmt(getattr(e, c)) for c in cols])
    return buf.getvalue()


def load_cex_bars(path) -> list[CexBar]:
    """Load CEX minute bars; gaps between minutes are kept as-is."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    bars = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != BAR_COLUMNS:
            raise DataError(f"{path}: header {reader.fieldnames} does not match {list(BAR_COLUMNS)}")
        for row_no, rec in enumerate(reader, start=1):
            where = f"{path}: row {row_no}"
            vals = {c: _convert(c, rec[c], where) for c in BAR_COLUMNS}
            try:
                bars.append(CexBar(**vals))
            except DataError as exc:
                raise DataError(f"{where}: {exc}") from None
    bars.sort(key=lambda b: b.open_time)
    for a, b in zip(bars, bars[1:]):
        if a.open_time == b.open_time:
            raise DataError(f"{path}: duplicate bar at {a.open_time}")
    return bars


def dump_bars_csv(bars: Sequence[CexBar]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BAR_COLUMNS)
    for b in bars:
        w.writerow([_fmt(getattr(b, c)) for c in BAR_COLUMNS])
    return buf.getvalue()


def minute_of(ts: int) -> int:
    return ts - ts % 60


def align_minutes(swaps: Sequence[SwapEvent], bars: Sequence[CexBar]) -> list[AlignedMinute]:
    """One record per minute where swap and bar time ranges overlap.

    The AMM price of a minute is the reserve ratio after its last swap;
    minutes without swaps carry the previous state forward with
    ``traded=False``. Missing CEX bars carry the previous close with
    ``has_bar=False``.
    """
    if not swaps or not bars:
        raise DataError("align_minutes needs non-empty swaps and bars")
    swaps = sorted(swaps, key=lambda e: (e.timestamp, e.key))
    start = max(minute_of(swaps[0].timestamp), bars[0].open_time)
    end = min(minute_of(swaps[-1].timestamp), bars[-1].open_time)
    if start > end:
        raise DataError("swap and bar time ranges do not overlap")

    by_minute = {m: list(g) for m, g in groupby(swaps, key=lambda e: minute_of(e.timestamp))}
    bar_close = {b.open_time: b.close for b in bars}

    state = None
    for e in swaps:
        if minute_of(e.timestamp) >= start:
            break
        state = (e.reserve_x_after, e.reserve_y_after)
    close = None
    for b in bars:
        if b.open_time > start:
            break
        close = b.close

    out = []
    for minute in range(start, end + 60, 60):
        group = by_minute.get(minute, [])
        if group:
            last = group[-1]
            state = (last.reserve_x_after, last.reserve_y_after)
        has_bar = minute in bar_close
        if has_bar:
            close = bar_close[minute]
        rx, ry = state
        n = len(group)
        out.append(AlignedMinute(
            minute=minute,
            cex_close=close,
            amm_spot=rx / ry,
            reserve_x=rx,
            reserve_y=ry,
            amm_volume=math.fsum(e.quote_volume for e in group),
            avg_gas=math.fsum(e.gas_fee for e in group) / n if n else 0.0,
            swap_count=n,
            traded=bool(n),
            has_bar=has_bar,
        ))
    return out


def block_groups(swaps: Sequence[SwapEvent]) -> list[list[SwapEvent]]:
    """Partition ordered swaps by block, keeping intra-block order."""
    return [list(g) for _, g in groupby(swaps, key=lambda e: e.block_number)]


def dump_aligned_csv(rows: Sequence[AlignedMinute]) -> str:
    cols = [f.name for f in fields(AlignedMinute)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in cols])
    return buf.getvalue()
