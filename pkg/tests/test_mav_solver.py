import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mavlab.amm_core import PoolState, TickedPool, equivalent_reserves, tick_price
from mavlab.errors import DomainError
from mavlab.mav_solver import (
    Direction, linear_impact_profit, mav_bruteforce, mav_clmm, mav_cpmm, v_max_cpmm,
)


def test_v_max_examples():
    assert v_max_cpmm(PoolState(200_000, 100), 1900) == 2.5
    assert v_max_cpmm(PoolState(3_000, 2), 1500) == 0
    assert v_max_cpmm(PoolState(100, 100), 0.5) == 25


@pytest.mark.parametrize("p", [0.0, -3.0, math.inf])
def test_bad_cex_price(p):
    with pytest.raises(DomainError):
        mav_cpmm(PoolState(1, 1), p)
    with pytest.raises(DomainError):
        v_max_cpmm(PoolState(1, 1), p)


def test_mav_hand_example():
    r = mav_cpmm(PoolState(200_000, 100), 1900)
    assert r.mav == 125.0
    assert r.v_max == 2.5
    assert r.direction is Direction.SELL_ON_AMM
    assert (r.p_amm, r.p_cex) == (2000, 1900)


def test_mav_aligned_is_zero():
    r = mav_cpmm(PoolState(200_000, 100), 2000)
    assert (r.mav, r.v_max) == (0, 0)
    assert mav_bruteforce(PoolState(200_000, 100), 2000).mav == 0


def test_buy_on_amm_matches_grid():
    r = mav_cpmm(PoolState(100, 100), 2.0)
    assert r.direction is Direction.BUY_ON_AMM
    bf = mav_bruteforce(PoolState(100, 100), 2.0, 1_000_000)
    assert r.mav == pytest.approx(bf.mav, rel=1e-6)
    assert r.mav == pytest.approx(12.5, rel=1e-15)


def test_bruteforce_hand_example():
    bf = mav_bruteforce(PoolState(200_000, 100), 1900, 1_000_000)
    assert bf.mav == pytest.approx(125.0, rel=1e-6)
    assert bf.v_max == pytest.approx(2.5, rel=1e-5)


def test_bruteforce_needs_grid():
    with pytest.raises(DomainError):
        mav_bruteforce(PoolState(1, 1), 2.0, 10)


def test_bruteforce_agrees_on_random_pools():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        x, y = rng.lognormal(12, 2), rng.lognormal(4, 2)
        pool = PoolState(x, y)
        p_cex = (x / y) * math.exp(rng.uniform(-0.7, 0.7))
        cf = mav_cpmm(pool, p_cex)
        bf = mav_bruteforce(pool, p_cex, 10_000)
        assert bf.mav == pytest.approx(cf.mav, rel=1e-5)


def profit_in_quote(pool, p_cex, v):
    """Profit of trading v (in Y at AMM spot) in the pool's favourable direction, in X."""
    p_a = pool.reserve_x / pool.reserve_y
    if p_a >= p_cex:
        return linear_impact_profit(v, pool.reserve_y, p_a, p_cex)
    v_x = v * p_a
    return linear_impact_profit(v_x, pool.reserve_x, 1 / p_a, 1 / p_cex) * p_cex


@given(st.floats(1e2, 1e9), st.floats(1e-2, 1e6), st.floats(-0.5, 0.5).filter(lambda s: abs(s) > 1e-4))
def test_first_order_condition_and_concavity(x, y, log_gap):
    pool = PoolState(x, y)
    p_cex = x / y * math.exp(log_gap)
    r = mav_cpmm(pool, p_cex)
    h = 1e-4 * r.v_max
    slope = (profit_in_quote(pool, p_cex, r.v_max + h) - profit_in_quote(pool, p_cex, r.v_max - h)) / (2 * h)
    scale = abs(r.p_amm - r.p_cex)
    assert abs(slope) / scale < 1e-6
    assert profit_in_quote(pool, p_cex, 1.1 * r.v_max) < r.mav
    assert profit_in_quote(pool, p_cex, 0.9 * r.v_max) < r.mav
    assert profit_in_quote(pool, p_cex, r.v_max) == pytest.approx(r.mav, rel=1e-9)


@given(st.floats(1e2, 1e9), st.floats(1e-2, 1e6), st.floats(-0.5, 0.5))
def test_mirror_invariance(x, y, log_gap):
    pool = PoolState(x, y)
    p_cex = x / y * math.exp(log_gap)
    r = mav_cpmm(pool, p_cex)
    mirrored = mav_cpmm(pool.mirrored(), 1 / p_cex)
    assert mirrored.mav * p_cex == pytest.approx(r.mav, rel=1e-9, abs=1e-12 * x)
    assert r.mav >= 0
    assert (r.v_max == 0) == (r.p_amm == r.p_cex)


@given(st.floats(1e2, 1e9), st.floats(1e-2, 1e6), st.floats(-0.5, 0.5))
def test_mav_linear_in_depth(x, y, log_gap):
    p_cex = x / y * math.exp(log_gap)
    assert mav_cpmm(PoolState(2 * x, 2 * y), p_cex).mav == pytest.approx(2 * mav_cpmm(PoolState(x, y), p_cex).mav, rel=1e-12)


def test_mav_linear_in_depth_exact():
    assert mav_cpmm(PoolState(400_000, 200), 1900).mav == 2 * mav_cpmm(PoolState(200_000, 100), 1900).mav


def forward_simulation(pool: TickedPool, p_cex: float, step_frac: float = 1e-6) -> float:
    """Exact profit of arbitraging the ticked pool in small steps, in quote units.

    Works in sqrt-price form per range: selling Y lowers sqrt(P) via
    1/sqrt(P') = 1/sqrt(P) + dy/L, selling X raises it via sqrt(P') = sqrt(P) + dx/L.
    Each step is 1e-6 of the range's virtual reserve of the sold token.
    """
    sell_y = pool.spot_price > p_cex
    pos = pool.position(pool.current_tick)
    sp = math.sqrt(pool.spot_price)
    target = math.sqrt(p_cex)
    profit = 0.0
    while 0 <= pos < len(pool.ranges):
        rng = pool.ranges[pos]
        big_l = rng.liquidity
        bound = math.sqrt(rng.lower_price if sell_y else rng.upper_price)
        if sell_y:
            dy = step_frac * big_l / sp
            while sp > max(target, bound):
                new = max(1 / (1 / sp + dy / big_l), target, bound)
                sold = big_l * (1 / new - 1 / sp)
                profit += big_l * (sp - new) - sold * p_cex
                sp = new
        else:
            dx = step_frac * big_l * sp
            while sp < min(target, bound):
                new = min(sp + dx / big_l, target, bound)
                got = big_l * (1 / sp - 1 / new)
                profit += got * p_cex - big_l * (new - sp)
                sp = new
        if (sell_y and sp <= target) or (not sell_y and sp >= target):
            break
        pos += -1 if sell_y else 1
    return profit


@pytest.fixture
def three_ticks():
    return TickedPool.from_ticks([-3, -2, -1, 0, 1, 2, 3], [3e6, 5e6, 4e6, 6e6, 2e6, 4e6], tick_price(0) * 1.0001 ** 0.4)


def test_clmm_single_wide_tick_equals_cpmm():
    pool = TickedPool.from_ticks([-400_000, 400_000], [1e4], 1.0)
    xe, ye = equivalent_reserves(pool.current_range)
    for p_cex in (0.95, 1.07):
        res, trace = mav_clmm(pool, p_cex)
        assert len(trace.steps) == 1
        assert res.mav == pytest.approx(mav_cpmm(PoolState(xe, ye), p_cex).mav, rel=1e-6)


def test_clmm_cex_inside_current_tick(three_ticks):
    inside = three_ticks.current_range.lower_price * 1.00001
    res, trace = mav_clmm(three_ticks, inside)
    assert len(trace.steps) == 1
    assert not trace.steps[0].clipped


@pytest.mark.parametrize("p_cex", [tick_price(-2) * 1.00003, tick_price(2) * 1.00004])
def test_clmm_walk_matches_forward_simulation(three_ticks, p_cex):
    res, trace = mav_clmm(three_ticks, p_cex)
    assert len(trace.steps) == 3
    assert not trace.exhausted
    assert res.mav == pytest.approx(forward_simulation(three_ticks, p_cex), rel=1e-3)
    assert res.mav == pytest.approx(math.fsum(s.mav for s in trace.steps), rel=1e-9)
    idx = [s.tick_index for s in trace.steps]
    assert idx == sorted(idx, reverse=res.direction is Direction.SELL_ON_AMM)
    assert len(set(idx)) == len(idx)


def test_clmm_final_price_within_one_tick(three_ticks):
    p_cex = tick_price(-2) * 1.00005
    res, trace = mav_clmm(three_ticks, p_cex)
    last = three_ticks.ranges[three_ticks.position(trace.steps[-1].tick_index)]
    # replay the volumes on each range's virtual pool
    vy_last = last.liquidity / math.sqrt(last.upper_price)
    final_price = (last.liquidity ** 2) / (vy_last + trace.steps[-1].volume) ** 2
    assert abs(final_price - p_cex) <= tick_price(1) - tick_price(0)


def test_clmm_monotone_in_divergence(three_ticks):
    spot = three_ticks.spot_price
    gaps = np.linspace(0, 5.9e-4, 200)
    down = [mav_clmm(three_ticks, spot * (1 - g))[0].mav for g in gaps]
    up = [mav_clmm(three_ticks, spot * (1 + g))[0].mav for g in gaps]
    assert all(b >= a for a, b in zip(down, down[1:]))
    assert all(b >= a for a, b in zip(up, up[1:]))


def test_clmm_liquidity_exhausted(three_ticks):
    res, trace = mav_clmm(three_ticks, tick_price(-50))
    assert trace.exhausted
    assert all(s.clipped for s in trace.steps)
    assert res.mav > 0


def test_clmm_aligned():
    pool = TickedPool.from_ticks([-10, 10], [1e5], 1.0)
    res, trace = mav_clmm(pool, 1.0)
    assert res.mav == 0 and trace.steps == ()
