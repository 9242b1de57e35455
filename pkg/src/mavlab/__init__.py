"""Maximal Arbitrage Value between AMM pools and a centralized exchange."""

__version__ = "0.1.0"

from .amm_core import (  # noqa: E402
    PoolState, Side, SwapResult, TickRange, TickedPool, apply_swap, equivalent_reserves,
    execution_rate, price_impact_clmm, price_impact_cpmm, spot_price, tick_price,
)
from .mav_solver import Direction, MavResult, TickWalkTrace, mav_bruteforce, mav_clmm, mav_cpmm, v_max_cpmm  # noqa: E402

__all__ = [
    "Direction", "MavResult", "PoolState", "Side", "SwapResult", "TickRange", "TickWalkTrace",
    "TickedPool", "apply_swap", "equivalent_reserves", "execution_rate", "mav_bruteforce",
    "mav_clmm", "mav_cpmm", "price_impact_clmm", "price_impact_cpmm", "spot_price",
    "tick_price", "v_max_cpmm",
]
