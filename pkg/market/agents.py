"""
Trading Agents Module.

This module provides the seven trading strategies of the market: noise and value agents (the
background archetype), market makers, TWAP and VWAP market takers, and momentum and
mean-reversion directional traders. Each strategy is split into a pure step function, which
maps observations and a random generator to exchange actions and the next wakeup, and an agent
class that wires the step function to kernel messages.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from config import AGENT_DEFAULTS, EXCHANGE_ID
from market.exchange import BUY, SELL, L2Snapshot, round_half_away
from market.fundamental import FundamentalSeries, ObservationModel, VolumeProfile, observe
from market.kernel import (Agent, CancelOrderMsg, L2Request, L2Response, LimitOrderMsg, MarketOrderMsg, Message,
                           OrderCancelled, OrderExecuted, OrderRejected)

logger = logging.getLogger(__name__)


class ArchetypeLabel(str, Enum):
    MARKET_MAKER = "MARKET_MAKER"
    MARKET_TAKER = "MARKET_TAKER"
    DIRECTIONAL_TRADER = "DIRECTIONAL_TRADER"
    BACKGROUND = "BACKGROUND"


# Class index order used by every classifier and report.
ARCHETYPES = [ArchetypeLabel.MARKET_MAKER, ArchetypeLabel.MARKET_TAKER, ArchetypeLabel.DIRECTIONAL_TRADER,
              ArchetypeLabel.BACKGROUND]


class Strategy(str, Enum):
    NOISE = "noise"
    VALUE = "value"
    MARKET_MAKER = "market_maker"
    TWAP = "twap"
    VWAP = "vwap"
    MOMENTUM = "momentum"
    MEAN_REVERSION = "mean_reversion"


STRATEGY_ARCHETYPE = {
    Strategy.NOISE: ArchetypeLabel.BACKGROUND,
    Strategy.VALUE: ArchetypeLabel.BACKGROUND,
    Strategy.MARKET_MAKER: ArchetypeLabel.MARKET_MAKER,
    Strategy.TWAP: ArchetypeLabel.MARKET_TAKER,
    Strategy.VWAP: ArchetypeLabel.MARKET_TAKER,
    Strategy.MOMENTUM: ArchetypeLabel.DIRECTIONAL_TRADER,
    Strategy.MEAN_REVERSION: ArchetypeLabel.DIRECTIONAL_TRADER,
}


class NoiseAgentConfig(BaseModel):
    q: Optional[int] = Field(default=None, gt=0)
    q_min: int = Field(default=AGENT_DEFAULTS["noise"]["q_min"], gt=0)
    q_max: int = Field(default=AGENT_DEFAULTS["noise"]["q_max"], gt=0)

    @model_validator(mode="after")
    def check_range(self):
        if self.q_min > self.q_max:
            raise ValueError("q_min must not exceed q_max")
        return self


class ValueAgentConfig(BaseModel):
    lambda_a_ns: int = Field(default=AGENT_DEFAULTS["value"]["lambda_a_ns"], gt=0)
    delta_s: int = Field(default=AGENT_DEFAULTS["value"]["delta_s"], ge=1)
    q: int = Field(default=AGENT_DEFAULTS["value"]["q"], gt=0)
    xi: float = Field(default=AGENT_DEFAULTS["value"]["xi"], ge=0.0, le=1.0)
    sigma_n: float = Field(default=AGENT_DEFAULTS["value"]["sigma_n"], ge=0.0)


class MarketMakerConfig(BaseModel):
    lambda_a_ns: int = Field(default=AGENT_DEFAULTS["market_maker"]["lambda_a_ns"], gt=0)
    q_max: int = Field(default=AGENT_DEFAULTS["market_maker"]["q_max"], ge=2)
    delta_s: int = Field(default=AGENT_DEFAULTS["market_maker"]["delta_s"], ge=1)

    @model_validator(mode="after")
    def check_even(self):
        if self.q_max % 2:
            raise ValueError("q_max must be even")
        return self


class ExecutionOrderConfig(BaseModel):
    parent_qty: int = Field(default=AGENT_DEFAULTS["market_taker"]["parent_qty"], gt=0)
    side: Literal[1, -1] = BUY
    t_start: int
    t_end: int
    n_slots: int = Field(default=AGENT_DEFAULTS["market_taker"]["n_slots"], ge=1)

    @model_validator(mode="after")
    def check_window(self):
        if self.t_start >= self.t_end:
            raise ValueError("execution window start must precede its end")
        return self


class DirectionalMode(str, Enum):
    MOMENTUM = "MOMENTUM"
    MEAN_REVERSION = "MEAN_REVERSION"


class DirectionalConfig(BaseModel):
    short_window: int = Field(default=AGENT_DEFAULTS["directional"]["short_window"], ge=1)
    long_window: int = Field(default=AGENT_DEFAULTS["directional"]["long_window"], ge=2)
    mode: DirectionalMode = DirectionalMode.MOMENTUM
    q_max: int = Field(default=AGENT_DEFAULTS["directional"]["q_max"], ge=1)
    cadence_ns: int = Field(default=AGENT_DEFAULTS["directional"]["cadence_ns"], gt=0)

    @model_validator(mode="after")
    def check_windows(self):
        if self.short_window >= self.long_window:
            raise ValueError("short_window must be shorter than long_window")
        return self


@dataclass(frozen=True)
class PlaceLimit:
    side: int
    price: int
    qty: int


@dataclass(frozen=True)
class PlaceMarket:
    side: int
    qty: int


@dataclass(frozen=True)
class CancelAll:
    pass


@dataclass
class StepResult:
    actions: list = field(default_factory=list)
    next_wakeup: Optional[int] = None


def sample_u_quadratic(a: float, b: float, u: float) -> float:
    """
    Inverse-CDF draw from the U-quadratic distribution on [a, b].

    Args:
        a (float): Lower end of the support.
        b (float): Upper end of the support.
        u (float): A uniform(0, 1) draw.

    Returns:
        float: The sampled point; u=0 gives a, u=1 gives b, u=0.5 gives the midpoint.
    """
    if a >= b:
        raise ValueError(f"U-quadratic support needs a < b, got [{a}, {b}]")
    beta = (a + b) / 2
    half = (b - a) / 2
    # u = F(x) inverted on the unit half width, then rescaled.
    return beta + half * float(np.cbrt(2.0 * u - 1.0))


def u_quadratic_cdf(x: float, a: float, b: float) -> float:
    """Analytic CDF F(x) = (alpha/3)((x - beta)^3 + (beta - a)^3) clipped to [0, 1]."""
    beta = (a + b) / 2
    alpha = 12.0 / (b - a) ** 3
    return float(min(max(alpha / 3.0 * ((x - beta) ** 3 + (beta - a) ** 3), 0.0), 1.0))


def next_arrival(t: int, lambda_a_ns: float, rng: np.random.Generator) -> int:
    """Returns t plus an exponential inter-arrival time with mean lambda_a_ns."""
    return t + max(int(round(rng.exponential(lambda_a_ns))), 1)


def noise_agent_step(cfg: NoiseAgentConfig, rng: np.random.Generator) -> StepResult:
    """
    Places one market order of size q in a uniformly random direction; the agent never wakes again.
    """
    q = cfg.q if cfg.q is not None else int(rng.integers(cfg.q_min, cfg.q_max + 1))
    epsilon = BUY if rng.integers(0, 2) == 1 else SELL
    return StepResult([PlaceMarket(epsilon, q)], None)


def value_agent_price(best_bid: int, best_ask: int, r_hat: int, delta: int) -> tuple:
    """
    Price rule of a value agent.

    Returns:
        tuple: (side, price). Buys sit at b_t + delta and sells at a_t - delta, capped one tick
        short of the opposite touch.
    """
    spread = best_ask - best_bid
    mid = round_half_away((best_ask + best_bid) / 2)
    if mid < r_hat:
        if best_bid + delta >= best_ask:
            delta = spread - 1
        return BUY, best_bid + delta
    if best_ask - delta <= best_bid:
        delta = spread - 1
    return SELL, best_ask - delta


def value_agent_step(cfg: ValueAgentConfig, lob_view: L2Snapshot, r_hat: int, t: int,
                     rng: np.random.Generator) -> StepResult:
    """
    One value-agent decision given the book, the fundamental estimate r_hat and the wake time t.

    A one-sided or empty book produces no order, only the next wakeup.
    """
    if not lob_view.two_sided:
        return StepResult([], next_arrival(t, cfg.lambda_a_ns, rng))
    inside = rng.random() < cfg.xi
    delta = 0
    if inside:
        delta_max = lob_view.spread * cfg.delta_s
        delta = int(rng.integers(0, delta_max + 1))
    side, price = value_agent_price(lob_view.best_bid, lob_view.best_ask, r_hat, delta)
    return StepResult([PlaceLimit(side, price, cfg.q)], next_arrival(t, cfg.lambda_a_ns, rng))


def market_maker_quotes(mid: int, r_hat: int, q_t: int, s_t: int) -> list:
    """
    Two-sided quote around p_t = (m_t + r_hat) / 2; odd sizes put the extra share on the bid.

    Returns:
        list: PlaceLimit actions with positive size and price.
    """
    p_t = round_half_away((mid + r_hat) / 2)
    buy_qty = math.ceil(q_t / 2)
    sell_qty = q_t // 2
    quotes = []
    if buy_qty > 0 and p_t - s_t > 0:
        quotes.append(PlaceLimit(BUY, p_t - s_t, buy_qty))
    if sell_qty > 0:
        quotes.append(PlaceLimit(SELL, p_t + s_t, sell_qty))
    return quotes


def market_maker_step(cfg: MarketMakerConfig, lob_view: L2Snapshot, r_hat: int, t: int,
                      rng: np.random.Generator) -> StepResult:
    """
    Cancels every own order, then quotes both sides unless the book is one-sided.
    """
    actions = [CancelAll()]
    if lob_view.two_sided:
        q_t = int(rng.integers(1, cfg.q_max + 1))
        s_t = int(rng.integers(1, cfg.delta_s + 1))
        actions += market_maker_quotes(lob_view.mid, r_hat, q_t, s_t)
    return StepResult(actions, next_arrival(t, cfg.lambda_a_ns, rng))


def largest_remainder(total: int, weights) -> list:
    """
    Apportions an integer total by weights; leftover units go to the largest fractional parts,
    earlier positions first on ties.
    """
    weights = np.asarray(weights, dtype=float)
    quotas = total * weights / weights.sum()
    floors = np.floor(quotas + 1e-9).astype(int)
    fractions = np.clip(quotas - floors, 0.0, None)
    leftover = total - int(floors.sum())
    order = sorted(range(len(weights)), key=lambda i: (-round(fractions[i], 9), i))
    for i in order[:leftover]:
        floors[i] += 1
    return floors.tolist()


def slot_times(cfg: ExecutionOrderConfig) -> list:
    span = cfg.t_end - cfg.t_start
    return [cfg.t_start + k * span // cfg.n_slots for k in range(cfg.n_slots)]


def twap_schedule(cfg: ExecutionOrderConfig) -> list:
    """
    Splits the parent order into equal children at evenly spaced slot starts.

    Returns:
        list: (time, child_qty) pairs whose sizes differ by at most one share and sum to the parent.
    """
    return list(zip(slot_times(cfg), largest_remainder(cfg.parent_qty, np.ones(cfg.n_slots))))


def vwap_schedule(cfg: ExecutionOrderConfig, profile: VolumeProfile) -> list:
    """
    Splits the parent order in proportion to the profile mass covered by each slot.

    Only the part of the profile inside [t_start, t_end) counts: slot masses are renormalized to
    sum to one over the window. Falls back to the TWAP split when the window holds no mass.
    """
    times = slot_times(cfg)
    ends = times[1:] + [cfg.t_end]
    weights = np.array([profile.weight_between(t0, t1) for t0, t1 in zip(times, ends)])
    if weights.sum() <= 0:
        logger.warning(f"Volume profile has no weight in [{cfg.t_start}, {cfg.t_end}], using TWAP split")
        return twap_schedule(cfg)
    return list(zip(times, largest_remainder(cfg.parent_qty, weights)))


def directional_step(cfg: DirectionalConfig, mid_price_history: list, t: int, rng: np.random.Generator) -> StepResult:
    """
    Compares the short and long simple moving averages of the mid-price history.

    Momentum buys when the short average is strictly above the long one and sells otherwise;
    mean reversion does the opposite. With less than a long window of history there is no order.
    """
    next_wakeup = t + cfg.cadence_ns
    if len(mid_price_history) < cfg.long_window:
        return StepResult([], next_wakeup)
    history = np.asarray(mid_price_history[-cfg.long_window:], dtype=float)
    short_sma = history[-cfg.short_window:].mean()
    long_sma = history.mean()
    rising = short_sma > long_sma
    if cfg.mode == DirectionalMode.MOMENTUM:
        side = BUY if rising else SELL
    else:
        side = SELL if rising else BUY
    qty = int(rng.integers(1, cfg.q_max + 1))
    return StepResult([PlaceMarket(side, qty)], next_wakeup)


class TradingAgent(Agent):
    """
    Base class for strategies: tracks open orders and turns actions into exchange messages.
    """

    strategy: Strategy = None

    def __init__(self, exchange_id: int = EXCHANGE_ID):
        super().__init__()
        self.exchange_id = exchange_id
        self.open_orders: dict[int, int] = {}
        self.wake_time: Optional[int] = None

    @property
    def archetype(self) -> ArchetypeLabel:
        return STRATEGY_ARCHETYPE[self.strategy]

    def execute(self, result: StepResult):
        for action in result.actions:
            if isinstance(action, CancelAll):
                for order_id in sorted(self.open_orders):
                    self.send(self.exchange_id, CancelOrderMsg(order_id))
            elif isinstance(action, PlaceLimit):
                order_id = self.kernel.next_order_id()
                self.open_orders[order_id] = action.qty
                self.send(self.exchange_id, LimitOrderMsg(order_id, action.side, action.price, action.qty))
            elif isinstance(action, PlaceMarket):
                self.send(self.exchange_id, MarketOrderMsg(self.kernel.next_order_id(), action.side, action.qty))
        if result.next_wakeup is not None:
            self.set_wakeup(max(result.next_wakeup, self.now))

    def request_l2(self):
        self.send(self.exchange_id, L2Request())

    def receive_message(self, t: int, sender: int, message: Message):
        if isinstance(message, L2Response):
            self.on_l2(t, message.snapshot)
        elif isinstance(message, OrderExecuted):
            if message.remaining == 0:
                self.open_orders.pop(message.order_id, None)
            elif message.order_id in self.open_orders:
                self.open_orders[message.order_id] = message.remaining
        elif isinstance(message, (OrderCancelled, OrderRejected)):
            self.open_orders.pop(message.order_id, None)

    def on_l2(self, t: int, snapshot: L2Snapshot):
        pass


class NoiseAgent(TradingAgent):
    """Trades once per day at a U-quadratic time between the open and the close."""

    strategy = Strategy.NOISE

    def __init__(self, cfg: NoiseAgentConfig, open_ns: int, close_ns: int, exchange_id: int = EXCHANGE_ID):
        super().__init__(exchange_id)
        self.cfg = cfg
        self.open_ns = open_ns
        self.close_ns = close_ns

    def kernel_starting(self, t: int):
        wake = int(round(sample_u_quadratic(self.open_ns, self.close_ns, self.rng.random())))
        self.set_wakeup(wake)

    def wakeup(self, t: int):
        self.execute(noise_agent_step(self.cfg, self.rng))


class ValueAgent(TradingAgent):
    """Trades toward a noisy estimate of the fundamental at exponential inter-arrival times."""

    strategy = Strategy.VALUE

    def __init__(self, cfg: ValueAgentConfig, fundamental: FundamentalSeries, exchange_id: int = EXCHANGE_ID):
        super().__init__(exchange_id)
        self.cfg = cfg
        self.fundamental = fundamental
        self.observation = ObservationModel(cfg.sigma_n)

    def kernel_starting(self, t: int):
        self.set_wakeup(next_arrival(t, self.cfg.lambda_a_ns, self.rng))

    def wakeup(self, t: int):
        self.wake_time = t
        self.request_l2()

    def on_l2(self, t: int, snapshot: L2Snapshot):
        r_hat = observe(self.fundamental, t, self.observation, self.rng)
        self.execute(value_agent_step(self.cfg, snapshot, r_hat, self.wake_time, self.rng))


class MarketMakerAgent(TradingAgent):
    """Requotes both sides around the average of mid and fundamental; observes the fundamental exactly."""

    strategy = Strategy.MARKET_MAKER

    def __init__(self, cfg: MarketMakerConfig, fundamental: FundamentalSeries, exchange_id: int = EXCHANGE_ID):
        super().__init__(exchange_id)
        self.cfg = cfg
        self.fundamental = fundamental
        self.observation = ObservationModel(0.0)

    def kernel_starting(self, t: int):
        self.set_wakeup(next_arrival(t, self.cfg.lambda_a_ns, self.rng))

    def wakeup(self, t: int):
        self.wake_time = t
        self.request_l2()

    def on_l2(self, t: int, snapshot: L2Snapshot):
        r_hat = observe(self.fundamental, t, self.observation, self.rng)
        self.execute(market_maker_step(self.cfg, snapshot, r_hat, self.wake_time, self.rng))


class ExecutionAgent(TradingAgent, ABC):
    """Works a parent order through market-order children at precomputed slot times."""

    def __init__(self, cfg: ExecutionOrderConfig, exchange_id: int = EXCHANGE_ID):
        super().__init__(exchange_id)
        self.cfg = cfg
        self.children: dict[int, int] = {}

    @abstractmethod
    def schedule(self) -> list:
        """(slot time, child quantity) pairs of the parent order."""

    def kernel_starting(self, t: int):
        for slot_time, qty in self.schedule():
            if qty > 0:
                self.children[slot_time] = qty
                self.set_wakeup(slot_time)

    def wakeup(self, t: int):
        qty = self.children.pop(t, 0)
        if qty > 0:
            self.execute(StepResult([PlaceMarket(self.cfg.side, qty)], None))


class TwapAgent(ExecutionAgent):
    strategy = Strategy.TWAP

    def schedule(self) -> list:
        return twap_schedule(self.cfg)


class VwapAgent(ExecutionAgent):
    strategy = Strategy.VWAP

    def __init__(self, cfg: ExecutionOrderConfig, profile: VolumeProfile, exchange_id: int = EXCHANGE_ID):
        super().__init__(cfg, exchange_id)
        self.profile = profile

    def schedule(self) -> list:
        return vwap_schedule(self.cfg, self.profile)


class DirectionalAgent(TradingAgent):
    """Samples the mid price on a fixed cadence and trades on a moving-average crossover."""

    def __init__(self, cfg: DirectionalConfig, exchange_id: int = EXCHANGE_ID):
        super().__init__(exchange_id)
        self.cfg = cfg
        self.mid_history: list[int] = []

    def kernel_starting(self, t: int):
        self.set_wakeup(t + self.cfg.cadence_ns)

    def wakeup(self, t: int):
        self.wake_time = t
        self.request_l2()

    def on_l2(self, t: int, snapshot: L2Snapshot):
        if snapshot.mid is not None:
            self.mid_history.append(snapshot.mid)
        self.execute(directional_step(self.cfg, self.mid_history, self.wake_time, self.rng))


class MomentumAgent(DirectionalAgent):
    strategy = Strategy.MOMENTUM

    def __init__(self, cfg: DirectionalConfig, exchange_id: int = EXCHANGE_ID):
        super().__init__(cfg.model_copy(update={"mode": DirectionalMode.MOMENTUM}), exchange_id)


class MeanReversionAgent(DirectionalAgent):
    strategy = Strategy.MEAN_REVERSION

    def __init__(self, cfg: DirectionalConfig, exchange_id: int = EXCHANGE_ID):
        super().__init__(cfg.model_copy(update={"mode": DirectionalMode.MEAN_REVERSION}), exchange_id)
