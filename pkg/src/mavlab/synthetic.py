"""Synthetic market data with known misalignment structure.

``square_wave_series`` builds aligned minute series with injected
divergences and returns the expected episodes alongside. ``market_fixture``
simulates a CPMM pool trading against a random-walk CEX price and emits the
swap log and CEX bars in the on-disk formats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .market_data import AlignedMinute, CexBar, SwapEvent

FIXTURE_START = 1688169600  # 2023-07-01T00:00:00Z


@dataclass(frozen=True)
class InjectedEpisode:
    start_minute: int
    end_minute: int
    peak_minute: int
    sign: int
    peak_amplitude: float

    @property
    def decay_seconds(self) -> int:
        return self.end_minute - self.peak_minute


def square_wave_series(
    rng: np.random.Generator,
    n_episodes: int = 3,
    constant_amplitude: bool = False,
    reserve_x: float = 2_000_000.0,
    reserve_y: float = 1_000.0,
    start: int = FIXTURE_START,
) -> tuple[list[AlignedMinute], list[InjectedEpisode]]:
    """Aligned minutes with baseline |delta| < 1 and injected runs of |delta| in [5, 20].

    Runs have width 1..6 minutes and are separated by at least one aligned
    minute. With ``constant_amplitude`` every minute of a run has the same
    divergence, so the peak is the run's first minute.
    """
    spot = reserve_x / reserve_y
    deltas: list[float] = list(rng.uniform(0, 1, 40) * rng.choice([-1, 1], 40))
    truth = []
    for _ in range(n_episodes):
        width = int(rng.integers(1, 7))
        sign = int(rng.choice([-1, 1]))
        if constant_amplitude:
            amps = np.full(width, rng.uniform(5, 20))
        else:
            amps = rng.uniform(5, 20, width)
        k0 = len(deltas)
        peak = int(np.argmax(amps))
        deltas.extend(sign * amps)
        gap = int(rng.integers(max(1, 4 * width), 40))
        deltas.extend(rng.uniform(0, 1, gap) * rng.choice([-1, 1], gap))
        truth.append(InjectedEpisode(
            start + 60 * k0, start + 60 * (k0 + width), start + 60 * (k0 + peak), sign, float(amps[peak]),
        ))
    series = [
        AlignedMinute(
            minute=start + 60 * i,
            cex_close=spot - d,
            amm_spot=spot,
            reserve_x=reserve_x,
            reserve_y=reserve_y,
            amm_volume=1_000.0,
            avg_gas=0.2,
            swap_count=1,
            traded=True,
        )
        for i, d in enumerate(deltas)
    ]
    return series, truth


def _target_reserves(x: float, y: float, price: float) -> tuple[float, float]:
    big_l = x * y
    return math.sqrt(big_l * price), math.sqrt(big_l / price)


def market_fixture(seed: int = 7, days: int = 2, start: int = FIXTURE_START,
                   start_price: float = 1900.0, reserve_y: float = 2_000.0) -> tuple[list[SwapEvent], list[CexBar]]:
    """Simulate a pool that tracks the CEX except during injected lags.

    Normally the last swap of each traded minute moves the pool to the CEX
    close plus small noise. An injected lag opens with an offset of 0.4-2%
    that decays to zero over a few minutes; its length grows with the gas
    level drawn for it. About 10% of minutes see no AMM trade.
    """
    rng = np.random.default_rng(seed)
    n = days * 1440
    log_ret = rng.normal(0, 5e-4, n)
    close = start_price * np.exp(np.cumsum(log_ret))
    bars = []
    prev = start_price
    for i in range(n):
        c = float(round(close[i], 2))
        o = float(round(prev, 2))
        hi = round(max(o, c) * (1 + abs(rng.normal(0, 2e-4))), 2)
        lo = round(min(o, c) * (1 - abs(rng.normal(0, 2e-4))), 2)
        vol = round(float(rng.gamma(2.0, 40.0)), 4)
        bars.append(CexBar(start + 60 * i, o, hi, lo, c, vol))
        prev = c

    # injected lags: offset (relative) per minute, gas level per lag
    offset = np.zeros(n)
    gas_level = np.full(n, 1.0)
    i = 30
    while i < n - 30:
        i += int(rng.integers(10, 40))
        if i >= n - 30:
            break
        level = float(rng.lognormal(0.0, 0.5))
        width = 1 + int(rng.poisson(1.5 * level))
        amp = rng.uniform(0.004, 0.02) * rng.choice([-1, 1])
        for k in range(width):
            offset[i + k] = amp * (1 - k / width) * rng.uniform(0.7, 1.0)
            gas_level[i + k] = level
        i += width

    x, ry = start_price * reserve_y, reserve_y
    swaps = []
    for m in range(n):
        x *= 1 - 1e-5  # slow liquidity withdrawal
        ry *= 1 - 1e-5
        if offset[m] == 0 and rng.uniform() < 0.1:
            continue
        if offset[m] != 0 and rng.uniform() < 0.25:
            continue
        target = bars[m].close * (1 + offset[m] + rng.normal(0, 1.5e-4))
        count = 1 + int(rng.poisson(0.5))
        seconds = np.sort(rng.choice(np.arange(1, 59), size=count, replace=False))
        for s_idx, sec in enumerate(seconds):
            ts = start + 60 * m + int(sec)
            if s_idx < count - 1:
                size = float(rng.lognormal(-1.0, 1.0))
                if rng.uniform() < 0.5:
                    y_in = round(size, 6)
                    x_out = round(x * y_in / (ry + y_in), 6)
                    amounts = (0.0, x_out, y_in, 0.0)
                else:
                    x_in = round(size * x / ry, 6)
                    y_out = round(ry * x_in / (x + x_in), 6)
                    amounts = (x_in, 0.0, 0.0, y_out)
            else:
                tx, ty = _target_reserves(x, ry, target)
                if tx > x:
                    amounts = (round(tx - x, 6), 0.0, 0.0, round(ry - ty, 6))
                else:
                    amounts = (0.0, round(x - tx, 6), round(ty - ry, 6), 0.0)
                if amounts[0] <= 0 and amounts[2] <= 0:
                    continue
            gas = round(float(rng.lognormal(math.log(0.25 * gas_level[m]), 0.3)), 6)
            block = ts // 2
            tx_index = len([e for e in swaps[-4:] if e.block_number == block])
            e = SwapEvent(
                timestamp=ts, block_number=block, tx_index=tx_index, log_index=3 * tx_index + 2,
                amount_x_in=amounts[0], amount_x_out=amounts[1],
                amount_y_in=amounts[2], amount_y_out=amounts[3],
                reserve_x_before=x, reserve_y_before=ry, gas_fee=gas,
            )
            swaps.append(e)
            x, ry = e.reserve_x_after, e.reserve_y_after
    return swaps, bars
