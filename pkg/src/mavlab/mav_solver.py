"""Optimal arbitrage volume and Maximal Arbitrage Value (MAV).

The CEX side is assumed to have no price impact. On the AMM side the profit
of trading ``V`` units of the sold token is modelled as

    profit(V) = V * (P - P_c) - V**2 * P / R

where ``P`` is the AMM price of the sold token, ``P_c`` its CEX price and
``R`` the AMM reserve of the sold token (first-order CPMM price impact
``rho(V) = V / R``). Its maximiser is ``V* = R (P - P_c) / (2 P)`` and the
maximum is ``R (P - P_c)**2 / (4 P)``.

When the AMM is cheap (``P_a < P_c``) the same formula is applied in
inverse-price space, where X is the sold token, and the profit (then in Y)
is converted to X at the CEX price. MAV is always reported in quote (X)
units and ``v_max`` in base (Y) units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .amm_core import PoolState, Side, TickedPool, TickRange, spot_price
from .errors import DomainError


class Direction(str, Enum):
    SELL_ON_AMM = "sell_on_amm"  # buy Y on the CEX, sell it on the AMM
    BUY_ON_AMM = "buy_on_amm"  # buy Y on the AMM, sell it on the CEX
    NONE = "none"


@dataclass(frozen=True)
class MavResult:
    v_max: float
    mav: float
    direction: Direction
    p_amm: float
    p_cex: float

    def to_dict(self) -> dict:
        return {
            "v_max": self.v_max,
            "mav": self.mav,
            "direction": self.direction.value,
            "p_amm": self.p_amm,
            "p_cex": self.p_cex,
        }

    @classmethod
    def from_dict(cls, d: dict) -> MavResult:
        return cls(d["v_max"], d["mav"], Direction(d["direction"]), d["p_amm"], d["p_cex"])


@dataclass(frozen=True)
class TickStep:
    tick_index: int
    volume: float  # Y units
    mav: float  # X units
    clipped: bool


@dataclass(frozen=True)
class TickWalkTrace:
    steps: tuple[TickStep, ...]
    exhausted: bool = False

    @property
    def total_volume(self) -> float:
        return math.fsum(s.volume for s in self.steps)

    @property
    def total_mav(self) -> float:
        return math.fsum(s.mav for s in self.steps)


def _check_price(p_cex: float) -> None:
    if not (p_cex > 0 and math.isfinite(p_cex)):
        raise DomainError(f"p_cex must be positive and finite, got {p_cex}")


def optimal_volume(reserve: float, price: float, p_cex: float) -> float:
    """Volume of the sold token maximising ``profit`` when ``price >= p_cex``."""
    return reserve * (price - p_cex) / (2.0 * price)


def linear_impact_profit(volume, reserve: float, price: float, p_cex: float):
    """Arbitrage profit of selling ``volume`` into the AMM, in the bought token.

    Works elementwise on numpy arrays.
    """
    return volume * (price - p_cex) - volume * volume * price / reserve


def v_max_cpmm(pool: PoolState, p_cex: float) -> float:
    """Optimal Y volume to sell on the AMM when the AMM is rich (``P_a >= P_c``)."""
    _check_price(p_cex)
    p_a = spot_price(pool)
    if p_a < p_cex:
        raise DomainError("v_max_cpmm expects spot_price >= p_cex; use mav_cpmm for either direction")
    return optimal_volume(pool.reserve_y, p_a, p_cex)


def mav_cpmm(pool: PoolState, p_cex: float) -> MavResult:
    _check_price(p_cex)
    p_a = spot_price(pool)
    if p_a == p_cex:
        return MavResult(0.0, 0.0, Direction.NONE, p_a, p_cex)
    if p_a > p_cex:
        v = optimal_volume(pool.reserve_y, p_a, p_cex)
        mav = pool.reserve_y * (p_a - p_cex) ** 2 / (4.0 * p_a)
        return MavResult(v, mav, Direction.SELL_ON_AMM, p_a, p_cex)
    # AMM cheap: sell X for Y. Prices of X in Y units.
    inv_a, inv_c = 1.0 / p_a, 1.0 / p_cex
    v_x = optimal_volume(pool.reserve_x, inv_a, inv_c)
    mav_y = pool.reserve_x * (inv_a - inv_c) ** 2 / (4.0 * inv_a)
    # v_max expressed in Y at the AMM spot, so v_max * p_amm is the X notional sold
    return MavResult(v_x * inv_a, mav_y * p_cex, Direction.BUY_ON_AMM, p_a, p_cex)


def _grid_argmax(reserve: float, price: float, p_cex: float, grid_points: int) -> tuple[float, float]:
    """Maximise the profit over a geometric grid on (0, 2 reserve], then refine linearly."""
    n_geo = grid_points // 2
    n_lin = grid_points - n_geo
    upper = 2.0 * reserve
    grid = np.geomspace(upper * 1e-15, upper, n_geo)
    profit = linear_impact_profit(grid, reserve, price, p_cex)
    k = int(np.argmax(profit))
    lo = grid[max(k - 1, 0)] if k > 0 else 0.0
    hi = grid[min(k + 1, n_geo - 1)]
    fine = np.linspace(lo, hi, n_lin)
    fine_profit = linear_impact_profit(fine, reserve, price, p_cex)
    j = int(np.argmax(fine_profit))
    if fine_profit[j] >= profit[k]:
        return float(fine[j]), float(fine_profit[j])
    return float(grid[k]), float(profit[k])


def mav_bruteforce(pool: PoolState, p_cex: float, grid_points: int = 1_000_000) -> MavResult:
    """Grid-search counterpart of ``mav_cpmm``; an oracle for tests and ``--verify``."""
    _check_price(p_cex)
    if grid_points < 1000:
        raise DomainError("grid_points must be >= 1000")
    p_a = spot_price(pool)
    if p_a == p_cex:
        return MavResult(0.0, 0.0, Direction.NONE, p_a, p_cex)
    if p_a > p_cex:
        v, best = _grid_argmax(pool.reserve_y, p_a, p_cex, grid_points)
        return MavResult(v, max(best, 0.0), Direction.SELL_ON_AMM, p_a, p_cex)
    inv_a, inv_c = 1.0 / p_a, 1.0 / p_cex
    v_x, best_y = _grid_argmax(pool.reserve_x, inv_a, inv_c, grid_points)
    return MavResult(v_x * inv_a, max(best_y, 0.0) * p_cex, Direction.BUY_ON_AMM, p_a, p_cex)


def _virtual_at(rng: TickRange, price: float) -> tuple[float, float]:
    big_l = rng.liquidity
    return big_l * math.sqrt(price), big_l / math.sqrt(price)


def mav_clmm(pool: TickedPool, p_cex: float) -> tuple[MavResult, TickWalkTrace]:
    """Walk ranges from the AMM price towards the CEX price, summing per-range MAV.

    In each range the optimum of the virtual constant-product pool is clipped
    at the range capacity; a clipped range is traded to its boundary and the
    walk continues in the next range. The walk stops once an optimum fits in
    a range, or flags ``exhausted`` when it runs out of ranges.
    """
    _check_price(p_cex)
    p_a = pool.spot_price
    if p_a == p_cex:
        return MavResult(0.0, 0.0, Direction.NONE, p_a, p_cex), TickWalkTrace(())

    sell_y = p_a > p_cex
    side = Side.SELL_Y if sell_y else Side.SELL_X
    step = -1 if sell_y else 1
    pos = pool.position(pool.current_tick)
    price = p_a
    steps: list[TickStep] = []
    exhausted = False
    first = True
    while True:
        if not 0 <= pos < len(pool.ranges):
            exhausted = True
            break
        rng = pool.ranges[pos]
        if rng.liquidity <= 0:
            # nothing to trade against; cross to the far boundary
            price = rng.lower_price if sell_y else rng.upper_price
            pos += step
            first = False
            continue
        if first:
            vx, vy = rng.virtual_x, rng.virtual_y
            cap = rng.capacity(side)
        else:
            vx, vy = _virtual_at(rng, price)
            big_l = rng.liquidity
            if sell_y:
                cap = max(big_l / math.sqrt(rng.lower_price) - vy, 0.0)
            else:
                cap = max(big_l * math.sqrt(rng.upper_price) - vx, 0.0)
        first = False

        if sell_y:
            reserve, p_sold, p_ref = vy, price, p_cex
        else:
            reserve, p_sold, p_ref = vx, 1.0 / price, 1.0 / p_cex
        v_opt = optimal_volume(reserve, p_sold, p_ref)
        clipped = v_opt > cap
        v = cap if clipped else v_opt
        gain = linear_impact_profit(v, reserve, p_sold, p_ref)
        if sell_y:
            steps.append(TickStep(rng.tick_index, v, gain, clipped))
        else:
            steps.append(TickStep(rng.tick_index, v * p_sold, gain * p_cex, clipped))
        if not clipped:
            break
        price = rng.lower_price if sell_y else rng.upper_price
        if (sell_y and price <= p_cex) or (not sell_y and price >= p_cex):
            break
        pos += step

    trace = TickWalkTrace(tuple(steps), exhausted)
    direction = Direction.SELL_ON_AMM if sell_y else Direction.BUY_ON_AMM
    return MavResult(trace.total_volume, trace.total_mav, direction, p_a, p_cex), trace
