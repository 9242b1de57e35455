"""Swap math for constant-product and concentrated-liquidity pools.

Prices are always quoted as token X per token Y, where X is the quote token
(e.g. USDC) and Y the base token (e.g. ETH). All values are float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .errors import DomainError, TickExhaustedError

TICK_BASE = 1.0001
MAX_TICK = 887272

_REL_TOL = 1e-9


class Side(str, Enum):
    SELL_Y = "sell_y"  # Y in, X out: pushes the AMM price down
    SELL_X = "sell_x"  # X in, Y out: pushes the AMM price up


@dataclass(frozen=True)
class PoolState:
    """Reserves of a two-token constant-product pool."""

    reserve_x: float
    reserve_y: float
    fee_bps: float = 0.0

    def __post_init__(self):
        if not (self.reserve_x > 0 and self.reserve_y > 0):
            raise DomainError(f"reserves must be positive, got ({self.reserve_x}, {self.reserve_y})")
        if not math.isfinite(self.reserve_x) or not math.isfinite(self.reserve_y):
            raise DomainError("reserves must be finite")
        if not self.fee_bps >= 0:
            raise DomainError(f"fee_bps must be >= 0, got {self.fee_bps}")

    @property
    def invariant(self) -> float:
        return self.reserve_x * self.reserve_y

    def mirrored(self) -> PoolState:
        """The same pool with the roles of X and Y exchanged."""
        return PoolState(self.reserve_y, self.reserve_x, self.fee_bps)


@dataclass(frozen=True)
class SwapResult:
    side: Side
    amount_in: float
    amount_out: float
    execution_rate: float  # X per Y actually obtained
    price_impact: float
    new_state: PoolState


def _amount_out(reserve_in: float, reserve_out: float, amount_in: float) -> float:
    # reserve_out - L / (reserve_in + amount_in), rearranged to avoid cancellation
    return reserve_out * amount_in / (reserve_in + amount_in)


def _require_positive(name: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be positive and finite, got {value}")


def spot_price(pool: PoolState) -> float:
    return pool.reserve_x / pool.reserve_y


def execution_rate(pool: PoolState, dy: float) -> float:
    """Average X received per unit of Y when selling ``dy`` fee-free."""
    _require_positive("dy", dy)
    # -(L/(y+dy) - L/y)/dy == x/(y+dy)
    return pool.reserve_x / (pool.reserve_y + dy)


def price_impact_cpmm(pool: PoolState, dy: float) -> float:
    """Percentage price impact of selling ``dy``, i.e. the output as a share of reserve_x."""
    _require_positive("dy", dy)
    return _amount_out(pool.reserve_y, pool.reserve_x, dy) / pool.reserve_x


def apply_swap(pool: PoolState, side: Side | str, amount_in: float, apply_fee: bool = False) -> SwapResult:
    """Execute a swap and return the resulting state.

    With ``apply_fee`` the fee share of ``amount_in`` is withheld before the
    invariant trade but the full input still lands in the reserves, so the
    invariant grows.
    """
    side = Side(side)
    _require_positive("amount_in", amount_in)
    effective_in = amount_in * (1.0 - pool.fee_bps / 10_000.0) if apply_fee else amount_in
    x, y = pool.reserve_x, pool.reserve_y
    if side is Side.SELL_Y:
        out = _amount_out(y, x, effective_in)
        new_state = PoolState(x - out, y + amount_in, pool.fee_bps)
        rate = out / amount_in
        impact = 1.0 - rate / (x / y)
    else:
        out = _amount_out(x, y, effective_in)
        new_state = PoolState(x + amount_in, y - out, pool.fee_bps)
        rate = amount_in / out
        # cost relative to spot, measured in the received token
        impact = 1.0 - (out / amount_in) / (y / x)
    return SwapResult(side, amount_in, out, rate, impact, new_state)


def tick_price(i: int) -> float:
    if not isinstance(i, (int,)) or isinstance(i, bool):
        raise DomainError(f"tick index must be an integer, got {i!r}")
    if abs(i) > MAX_TICK:
        raise DomainError(f"tick index {i} outside [-{MAX_TICK}, {MAX_TICK}]")
    return TICK_BASE ** i


def _require_alpha(alpha: float) -> None:
    if not alpha > 1:
        raise DomainError(f"alpha must be > 1, got {alpha}")


@dataclass(frozen=True)
class TickRange:
    """Liquidity posted on a single price range.

    The range spans ``[tick_price(tick_index), tick_price(tick_index) * alpha**2]``
    and is centred (geometrically) on ``lower * alpha``. ``x_posted`` and
    ``y_posted`` are the reserves posted at that centre; ``x_in_range`` and
    ``y_in_range`` are the reserves currently held.
    """

    tick_index: int
    alpha: float
    x_in_range: float
    y_in_range: float
    x_posted: float
    y_posted: float

    def __post_init__(self):
        _require_alpha(self.alpha)
        if min(self.x_in_range, self.y_in_range, self.x_posted, self.y_posted) < 0:
            raise DomainError("range reserves must be non-negative")
        s = math.sqrt(self.alpha)
        slack = 1.0 + _REL_TOL
        if self.x_in_range > self.x_posted * (s + 1.0) * slack:
            raise DomainError("x_in_range exceeds x_posted * (sqrt(alpha) + 1)")
        if self.y_in_range > self.y_posted * (s + 1.0) ** 2 * slack:
            raise DomainError("y_in_range exceeds y_posted * (sqrt(alpha) + 1)^2")
        if not self.lower_price < self.upper_price:
            raise DomainError("range has empty price interval")

    @classmethod
    def from_liquidity(cls, tick_lower: int, tick_upper: int, liquidity: float, price: float) -> TickRange:
        """Build a range between two ticks holding ``liquidity`` at the given pool price.

        Prices outside the range clamp to the nearest bound, which leaves the
        range holding only one token.
        """
        if tick_upper <= tick_lower:
            raise DomainError("tick_upper must exceed tick_lower")
        if liquidity < 0:
            raise DomainError("liquidity must be non-negative")
        lo, hi = tick_price(tick_lower), tick_price(tick_upper)
        alpha = TICK_BASE ** ((tick_upper - tick_lower) / 2.0)
        centre = math.sqrt(lo * hi)
        shrink = 1.0 - 1.0 / math.sqrt(alpha)
        p = min(max(price, lo), hi)
        return cls(
            tick_index=tick_lower,
            alpha=alpha,
            x_in_range=liquidity * (math.sqrt(p) - math.sqrt(lo)),
            y_in_range=liquidity * (1.0 / math.sqrt(p) - 1.0 / math.sqrt(hi)),
            x_posted=liquidity * math.sqrt(centre) * shrink,
            y_posted=liquidity / math.sqrt(centre) * shrink,
        )

    @property
    def lower_price(self) -> float:
        return tick_price(self.tick_index)

    @property
    def upper_price(self) -> float:
        return self.lower_price * self.alpha ** 2

    @property
    def liquidity(self) -> float:
        x_eq, y_eq = equivalent_reserves(self)
        return math.sqrt(x_eq * y_eq)

    @property
    def virtual_x(self) -> float:
        return self.x_in_range + self.x_posted / (math.sqrt(self.alpha) - 1.0)

    @property
    def virtual_y(self) -> float:
        return self.y_in_range + self.y_posted / (math.sqrt(self.alpha) - 1.0)

    @property
    def price(self) -> float:
        return self.virtual_x / self.virtual_y

    def capacity(self, side: Side | str) -> float:
        """Largest input that keeps the trade inside this range.

        For ``SELL_Y`` this is the Y that drives the price to the lower bound,
        for ``SELL_X`` the X that drives it to the upper bound.
        """
        side = Side(side)
        big_l = self.liquidity
        if side is Side.SELL_Y:
            return max(big_l / math.sqrt(self.lower_price) - self.virtual_y, 0.0)
        return max(big_l * math.sqrt(self.upper_price) - self.virtual_x, 0.0)


def equivalent_reserves(rng: TickRange) -> tuple[float, float]:
    """Constant-product reserves whose curve matches the range around its centre."""
    _require_alpha(rng.alpha)
    shrink = 1.0 - 1.0 / math.sqrt(rng.alpha)
    return rng.x_posted / shrink, rng.y_posted / shrink


def price_impact_clmm(rng: TickRange, dy: float) -> float:
    """Price impact of selling ``dy`` inside a single range.

    The output is computed on the virtual constant-product pool and divided by
    the virtual X reserve ``x_in_range + x_posted / (sqrt(alpha) - 1)``.
    Raises TickExhaustedError when ``dy`` would push the price below the range.
    """
    _require_positive("dy", dy)
    cap = rng.capacity(Side.SELL_Y)
    if dy > cap * (1.0 + 1e-12):
        raise TickExhaustedError(
            f"dy={dy} exceeds the in-range capacity {cap} of tick {rng.tick_index}", max_dy=cap
        )
    vx, vy = rng.virtual_x, rng.virtual_y
    return _amount_out(vy, vx, dy) / vx


@dataclass(frozen=True)
class TickedPool:
    """Contiguous concentrated-liquidity ranges plus the current price."""

    ranges: tuple[TickRange, ...]
    current_tick: int
    spot_price: float
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ranges = tuple(self.ranges)
        object.__setattr__(self, "ranges", ranges)
        if not ranges:
            raise DomainError("a ticked pool needs at least one range")
        for a, b in zip(ranges, ranges[1:]):
            if not a.tick_index < b.tick_index:
                raise DomainError("ranges must be sorted strictly by tick_index")
            if not math.isclose(a.upper_price, b.lower_price, rel_tol=1e-9):
                raise DomainError(f"ranges {a.tick_index} and {b.tick_index} are not contiguous")
        index = {r.tick_index: k for k, r in enumerate(ranges)}
        if self.current_tick not in index:
            raise DomainError(f"current_tick {self.current_tick} has no range")
        object.__setattr__(self, "_index", index)
        cur = ranges[index[self.current_tick]]
        lo, hi = cur.lower_price, cur.upper_price
        if not (lo * (1 - _REL_TOL) <= self.spot_price <= hi * (1 + _REL_TOL)):
            raise DomainError(f"spot {self.spot_price} outside current range [{lo}, {hi}]")

    @classmethod
    def from_ticks(cls, ticks: Sequence[int], liquidities: Sequence[float], price: float) -> TickedPool:
        """Ranges between consecutive entries of ``ticks`` with the given liquidity each."""
        if len(ticks) != len(liquidities) + 1:
            raise DomainError("need one more tick than liquidity values")
        ranges = [
            TickRange.from_liquidity(t0, t1, liq, price)
            for t0, t1, liq in zip(ticks, ticks[1:], liquidities)
        ]
        current = None
        for r in ranges:
            if r.lower_price <= price < r.upper_price:
                current = r.tick_index
        if current is None:
            if math.isclose(price, ranges[-1].upper_price, rel_tol=1e-12):
                current = ranges[-1].tick_index
            else:
                raise DomainError(f"price {price} outside the provided ranges")
        return cls(tuple(ranges), current, price)

    def position(self, tick_index: int) -> int:
        return self._index[tick_index]

    @property
    def current_range(self) -> TickRange:
        return self.ranges[self._index[self.current_tick]]
