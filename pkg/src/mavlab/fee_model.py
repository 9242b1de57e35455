"""Execution costs of an arbitrage trade: LP fee, gas, block slippage."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .amm_core import PoolState, Side, apply_swap
from .errors import DataError, DomainError
from .market_data import SwapEvent
from .mav_solver import MavResult

DEFAULT_FEE_BPS = 8


@dataclass(frozen=True)
class FeeBreakdown:
    l1_fee: float
    l2_fee: float
    lp_fee: float
    block_slippage: float
    total: float

    @classmethod
    def of(cls, l1_fee: float, l2_fee: float, lp_fee: float, block_slippage: float) -> FeeBreakdown:
        return cls(l1_fee, l2_fee, lp_fee, block_slippage, l1_fee + l2_fee + lp_fee + block_slippage)

    @property
    def gas_fee(self) -> float:
        return self.l1_fee + self.l2_fee


def lp_fee(volume: float, fee_bps: float = DEFAULT_FEE_BPS) -> float:
    if volume < 0:
        raise DomainError(f"volume must be non-negative, got {volume}")
    return volume * fee_bps / 10_000


def clean_mav(result: MavResult, fee_bps: float = DEFAULT_FEE_BPS) -> float:
    """MAV net of the LP fee on the AMM leg (``v_max * p_amm``). May be negative."""
    return result.mav - lp_fee(result.v_max * result.p_amm, fee_bps)


def _resimulate(state: PoolState, e: SwapEvent) -> float:
    if e.sells_y:
        return apply_swap(state, Side.SELL_Y, e.amount_y_in, apply_fee=True).amount_out
    return apply_swap(state, Side.SELL_X, e.amount_x_in, apply_fee=True).amount_out


def block_slippage(block: Sequence[SwapEvent], fee_bps: float = DEFAULT_FEE_BPS) -> list[float]:
    """Per-event proceeds gained (+) or lost (-) versus trading at the block's opening reserves.

    Both legs are re-simulated from the logged inputs on the constant-product
    curve, so only the ordering effect remains. Y proceeds are valued at the
    opening spot price.
    """
    if not block:
        return []
    first = block[0]
    opening = PoolState(first.reserve_x_before, first.reserve_y_before, fee_bps)
    open_spot = opening.reserve_x / opening.reserve_y
    out = [0.0]
    for e in block[1:]:
        actual = PoolState(e.reserve_x_before, e.reserve_y_before, fee_bps)
        diff = _resimulate(actual, e) - _resimulate(opening, e)
        out.append(diff if e.sells_y else diff * open_spot)
    return out


def fee_breakdown(event: SwapEvent, slippage: float, fee_bps: float = DEFAULT_FEE_BPS) -> FeeBreakdown:
    """Costs of one swap; without an L1/L2 split the whole gas fee counts as L2."""
    if event.l1_fee is not None or event.l2_fee is not None:
        l1, l2 = event.l1_fee or 0.0, event.l2_fee or 0.0
    else:
        l1, l2 = 0.0, event.gas_fee
    # slippage is a gain to the trader when positive, so it enters costs negated
    return FeeBreakdown.of(l1, l2, lp_fee(event.quote_volume, fee_bps), -slippage)


class WindowStat(NamedTuple):
    value: float
    stale: bool


class SwapWindows:
    """Fast per-minute-window statistics over time-ordered swaps."""

    def __init__(self, swaps: Sequence[SwapEvent]):
        self.swaps = sorted(swaps, key=lambda e: (e.timestamp, e.key))
        self.times = [e.timestamp for e in self.swaps]

    def _window(self, end: int) -> Sequence[SwapEvent]:
        lo = bisect.bisect_left(self.times, end - 60)
        hi = bisect.bisect_left(self.times, end)
        return self.swaps[lo:hi]

    def _carry(self, end: int, stat) -> WindowStat:
        window = self._window(end)
        if window:
            return WindowStat(stat(window), False)
        # step back one minute at a time to the last non-empty window
        k = bisect.bisect_left(self.times, end - 60)
        if k == 0:
            raise DataError(f"no swaps before {end}")
        last = self.times[k - 1]
        back = end - 60 * math.ceil((end - 60 - last) / 60)
        return WindowStat(stat(self._window(back)), True)

    def avg_gas(self, end: int) -> WindowStat:
        return self._carry(end, lambda w: math.fsum(e.gas_fee for e in w) / len(w))

    def volume(self, end: int) -> WindowStat:
        return self._carry(end, lambda w: math.fsum(e.quote_volume for e in w))


def avg_gas_window(swaps: Sequence[SwapEvent], end_minute: int) -> WindowStat:
    """Mean gas fee of swaps in ``[end_minute - 60, end_minute)``.

    An empty window falls back to the latest earlier non-empty 60 s window
    (aligned to ``end_minute``) and is marked stale.
    """
    return SwapWindows(swaps).avg_gas(end_minute)
