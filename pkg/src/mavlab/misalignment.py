"""Detection of CEX/AMM price misalignment episodes and their decay times."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .amm_core import PoolState
from .errors import DataError, DomainError
from .market_data import AlignedMinute
from .mav_solver import MavResult, mav_cpmm


@dataclass(frozen=True)
class DeltaSeries:
    minutes: np.ndarray
    delta: np.ndarray  # amm_spot - cex_close
    abs_delta: np.ndarray
    relative_delta: np.ndarray

    def __len__(self):
        return len(self.minutes)


@dataclass(frozen=True)
class MisalignmentEpisode:
    start_minute: int
    end_minute: int | None  # first minute back at or below threshold; None if unresolved
    peak_minute: int
    peak_abs_delta: float
    peak_mav: MavResult
    decay_seconds: int | None
    minutes: tuple[AlignedMinute, ...]

    @property
    def resolved(self) -> bool:
        return self.end_minute is not None

    @property
    def peak_state(self) -> AlignedMinute:
        return next(m for m in self.minutes if m.minute == self.peak_minute)

    def to_dict(self) -> dict:
        return {
            "start_minute": self.start_minute,
            "end_minute": self.end_minute,
            "peak_minute": self.peak_minute,
            "peak_abs_delta": self.peak_abs_delta,
            "peak_mav": self.peak_mav.to_dict(),
            "decay_seconds": self.decay_seconds,
            "resolved": self.resolved,
            "minutes": [m.to_dict() for m in self.minutes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> MisalignmentEpisode:
        return cls(
            start_minute=d["start_minute"],
            end_minute=d["end_minute"],
            peak_minute=d["peak_minute"],
            peak_abs_delta=d["peak_abs_delta"],
            peak_mav=MavResult.from_dict(d["peak_mav"]),
            decay_seconds=d["decay_seconds"],
            minutes=tuple(AlignedMinute.from_dict(m) for m in d["minutes"]),
        )


def delta_series(aligned: Sequence[AlignedMinute]) -> DeltaSeries:
    minutes = np.array([a.minute for a in aligned], dtype=np.int64)
    spot = np.array([a.amm_spot for a in aligned], dtype=float)
    cex = np.array([a.cex_close for a in aligned], dtype=float)
    delta = spot - cex
    return DeltaSeries(minutes, delta, np.abs(delta), delta / cex)


def outlier_threshold(deltas: DeltaSeries | Sequence[float]) -> float:
    """Q3 + 1.5 * IQR of the absolute deltas (linear-interpolated quartiles)."""
    values = deltas.abs_delta if isinstance(deltas, DeltaSeries) else np.abs(np.asarray(deltas, dtype=float))
    if values.size < 4:
        raise DataError(f"need at least 4 deltas for a quartile threshold, got {values.size}")
    q1, q3 = np.quantile(values, [0.25, 0.75], method="linear")
    return float(q3 + 1.5 * (q3 - q1))


def rolling_thresholds(deltas: DeltaSeries, window: int) -> np.ndarray:
    """Per-minute threshold computed on the trailing ``window`` minutes.

    The first minutes, before the window holds four values, use the
    threshold of the first four.
    """
    if window < 4:
        raise DataError("rolling window must cover at least 4 minutes")
    a = deltas.abs_delta
    out = np.empty(a.size)
    for i in range(a.size):
        lo = max(0, i + 1 - window)
        chunk = a[lo:i + 1] if i + 1 - lo >= 4 else a[:4]
        out[i] = outlier_threshold(chunk)
    return out


def minute_mav(m: AlignedMinute) -> MavResult:
    return mav_cpmm(PoolState(m.reserve_x, m.reserve_y), m.cex_close)


def segment_episodes(aligned: Sequence[AlignedMinute], threshold) -> list[MisalignmentEpisode]:
    """Split the series into maximal runs with ``abs_delta > threshold``.

    Each run keeps only its largest per-minute MAV (earliest minute on ties),
    so a single drawn-out misalignment is counted once. A run still open at
    the end of the series is returned with ``end_minute=None``.
    ``threshold`` is a scalar or one value per minute.
    """
    deltas = delta_series(aligned)
    thr = np.broadcast_to(np.asarray(threshold, dtype=float), deltas.abs_delta.shape)
    if np.any(thr < 0):
        raise DomainError("threshold must be non-negative")
    above = deltas.abs_delta > thr

    episodes = []
    n = len(aligned)
    i = 0
    while i < n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j < n and above[j]:
            j += 1
        run = aligned[i:j]
        best_k, best = 0, minute_mav(run[0])
        for k in range(1, len(run)):
            r = minute_mav(run[k])
            if r.mav > best.mav:
                best_k, best = k, r
        peak = run[best_k].minute
        end = aligned[j].minute if j < n else None
        episodes.append(MisalignmentEpisode(
            start_minute=run[0].minute,
            end_minute=end,
            peak_minute=peak,
            peak_abs_delta=float(deltas.abs_delta[i:j].max()),
            peak_mav=best,
            decay_seconds=(end - peak) if end is not None else None,
            minutes=tuple(run),
        ))
        i = j
    return episodes


def decay_time(episode: MisalignmentEpisode) -> int:
    """Seconds from the peak-MAV minute to re-alignment."""
    if not episode.resolved:
        raise DataError(f"episode starting at {episode.start_minute} never re-aligned")
    return episode.end_minute - episode.peak_minute


def cumulative_mav(episodes: Sequence[MisalignmentEpisode], total_volume: float) -> tuple[float, float]:
    """Total of one peak MAV per episode, and its share of traded volume."""
    if not episodes:
        return 0.0, 0.0
    if not total_volume > 0:
        raise DataError("total traded volume must be positive")
    total = math.fsum(e.peak_mav.mav for e in episodes)
    return total, total / total_volume


def format_ratio(ratio: float) -> str:
    return f"{ratio * 100:.4f}%"


def ratio_note(total_mav: float, total_volume: float, stated_ratio: float) -> str | None:
    """Flag a quoted MAV/volume ratio that the totals do not reproduce.

    Returns None when the stated ratio matches the recomputed one at the
    4-decimal percent precision used in reports.
    """
    ours = total_mav / total_volume
    if format_ratio(ours) == format_ratio(stated_ratio):
        return None
    return (
        f"recomputed MAV/volume {format_ratio(ours)} "
        f"({total_mav:,.2f} / {total_volume:,.2f}) differs from the stated {format_ratio(stated_ratio)} "
        f"by {abs(ours / stated_ratio - 1) * 100:.2f}% relative; the recomputed value is reported"
    )


def dump_episodes_jsonl(episodes: Sequence[MisalignmentEpisode]) -> str:
    return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in episodes)


def load_episodes_jsonl(path) -> list[MisalignmentEpisode]:
    out = []
    with open(path) as fh:
        for row_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(MisalignmentEpisode.from_dict(json.loads(line)))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}: row {row_no}: bad episode record ({exc})") from None
    return out
