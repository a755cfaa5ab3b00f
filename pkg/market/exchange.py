"""
Exchange Module.

This module provides the limit order book and the exchange agent that owns it. The book matches
price-then-FIFO: better prices first, then earlier entry time, then the larger order when entry
times tie, then arrival sequence. Prices are integer ticks throughout. The exchange agent turns
kernel messages into book operations, reports fills to both parties, answers L2 requests, and
keeps the order-event log, the trade tape and the L2 log of the day.
"""

import logging
from dataclasses import dataclass
from typing import Optional

from sortedcontainers import SortedDict

from config import L2_DEPTH
from market.kernel import (Agent, CancelOrderMsg, L2Request, L2Response, LimitOrderMsg, MarketOrderMsg, Message,
                           OrderAccepted, OrderCancelled, OrderExecuted, OrderRejected)

logger = logging.getLogger(__name__)

BUY = 1
SELL = -1
SIDE_NAMES = {BUY: "BUY", SELL: "SELL"}

ORDER_LOG_HEADER = ["time_ns", "agent_id", "archetype", "action", "side", "price_ticks", "qty"]
TRADE_HEADER = ["time_ns", "price_ticks", "qty", "buy_agent", "sell_agent", "aggressor"]


def l2_header(depth: int = L2_DEPTH) -> list:
    header = ["time_ns"]
    for prefix in ("bid_price", "bid_volume", "ask_price", "ask_volume"):
        header += [f"{prefix}_{level}" for level in range(1, depth + 1)]
    return header + ["last_trade_ticks"]


def round_half_away(value: float) -> int:
    """
    Rounds to the nearest integer tick, halves away from zero.

    Args:
        value (float): A price in ticks, possibly fractional.

    Returns:
        int: The rounded tick.
    """
    magnitude = int(abs(value) + 0.5)
    return magnitude if value >= 0 else -magnitude


@dataclass
class Order:
    order_id: int
    agent_id: int
    side: int
    qty: int
    price: Optional[int] = None
    entry_time: int = 0
    entry_seq: int = 0
    entry_qty: int = 0

    def __post_init__(self):
        if self.entry_qty == 0:
            self.entry_qty = self.qty

    @property
    def priority_key(self) -> tuple:
        return self.entry_time, -self.entry_qty, self.entry_seq


@dataclass(frozen=True)
class Trade:
    time: int
    price: int
    qty: int
    buy_agent: int
    sell_agent: int
    aggressor: int
    buy_order_id: int = 0
    sell_order_id: int = 0

    def as_row(self) -> list:
        return [self.time, self.price, self.qty, self.buy_agent, self.sell_agent, SIDE_NAMES[self.aggressor]]


@dataclass(frozen=True)
class L2Snapshot:
    """
    Aggregated depth of the top price levels. Missing levels carry price 0 and volume 0.
    """

    time: int
    bid_prices: tuple
    bid_volumes: tuple
    ask_prices: tuple
    ask_volumes: tuple
    last_trade: int = 0

    @property
    def best_bid(self) -> Optional[int]:
        return self.bid_prices[0] if self.bid_volumes[0] > 0 else None

    @property
    def best_ask(self) -> Optional[int]:
        return self.ask_prices[0] if self.ask_volumes[0] > 0 else None

    @property
    def two_sided(self) -> bool:
        return self.best_bid is not None and self.best_ask is not None

    @property
    def mid(self) -> Optional[int]:
        """m_t = (a_t + b_t) / 2 rounded to ticks, or None for a one-sided book."""
        if not self.two_sided:
            return None
        return round_half_away((self.best_ask + self.best_bid) / 2)

    @property
    def spread(self) -> Optional[int]:
        if not self.two_sided:
            return None
        return self.best_ask - self.best_bid

    def as_row(self) -> list:
        return ([self.time] + list(self.bid_prices) + list(self.bid_volumes) + list(self.ask_prices)
                + list(self.ask_volumes) + [self.last_trade])

    @classmethod
    def from_row(cls, row: list, depth: int = L2_DEPTH) -> "L2Snapshot":
        values = [int(v) for v in row]
        blocks = [tuple(values[1 + i * depth:1 + (i + 1) * depth]) for i in range(4)]
        return cls(values[0], blocks[0], blocks[1], blocks[2], blocks[3], values[1 + 4 * depth])


class PriceLevel:
    """Resting orders at one price, kept in priority order."""

    def __init__(self, price: int):
        self.price = price
        self.queue = SortedDict()
        self.volume = 0

    def add(self, order: Order):
        self.queue[order.priority_key] = order
        self.volume += order.qty

    def head(self) -> Order:
        return self.queue.peekitem(0)[1]

    def remove(self, order: Order):
        del self.queue[order.priority_key]
        self.volume -= order.qty

    def __len__(self) -> int:
        return len(self.queue)


class LimitOrderBook:
    """
    Two price-ordered sides of priority queues.

    Bids iterate from the highest price down, asks from the lowest price up, so index 0 of
    each side is the touch.
    """

    def __init__(self):
        self.bids = SortedDict(lambda price: -price)
        self.asks = SortedDict()
        self.orders: dict[int, Order] = {}
        self._entry_seq = 0

    def _side(self, side: int) -> SortedDict:
        return self.bids if side == BUY else self.asks

    def best_bid(self) -> Optional[int]:
        return self.bids.peekitem(0)[0] if self.bids else None

    def best_ask(self) -> Optional[int]:
        return self.asks.peekitem(0)[0] if self.asks else None

    def submit_limit_order(self, order: Order) -> list:
        """
        Matches an incoming limit order and rests whatever is left.

        Args:
            order (Order): The incoming order with a positive price and quantity.

        Returns:
            list: The trades generated, each at the resting order's price.
        """
        if order.qty <= 0:
            raise ValueError(f"order {order.order_id} has non-positive quantity {order.qty}")
        if order.price is None or order.price <= 0:
            raise ValueError(f"order {order.order_id} has non-positive price {order.price}")

        self._entry_seq += 1
        order.entry_seq = self._entry_seq
        trades = self._match(order, order.price)
        if order.qty > 0:
            levels = self._side(order.side)
            level = levels.get(order.price)
            if level is None:
                level = levels[order.price] = PriceLevel(order.price)
            level.add(order)
            self.orders[order.order_id] = order
        return trades

    def submit_market_order(self, agent: int, side: int, qty: int, time: int = 0, order_id: int = 0) -> list:
        """
        Walks the opposite side until the quantity is filled or the side is exhausted.

        The unfilled remainder, if any, is cancelled.

        Returns:
            list: The trades generated.
        """
        if qty <= 0:
            raise ValueError(f"market order {order_id} has non-positive quantity {qty}")
        self._entry_seq += 1
        order = Order(order_id, agent, side, qty, None, time, self._entry_seq)
        return self._match(order, None)

    def cancel_order(self, agent: int, order_id: int) -> bool:
        """
        Removes a resting order owned by the agent.

        Returns:
            bool: True iff an open order was removed; unknown, filled or foreign ids give False.
        """
        order = self.orders.get(order_id)
        if order is None or order.agent_id != agent:
            return False
        self._remove(order)
        return True

    def snapshot_l2(self, depth: int = L2_DEPTH, time: int = 0, last_trade: int = 0) -> L2Snapshot:
        """
        Aggregates resting volume per price for the top ``depth`` levels of each side.
        """
        bid_prices, bid_volumes = self._levels(self.bids, depth)
        ask_prices, ask_volumes = self._levels(self.asks, depth)
        return L2Snapshot(time, bid_prices, bid_volumes, ask_prices, ask_volumes, last_trade)

    @staticmethod
    def _levels(levels: SortedDict, depth: int) -> tuple:
        prices, volumes = [], []
        for price in levels.islice(0, depth):
            prices.append(price)
            volumes.append(levels[price].volume)
        padding = depth - len(prices)
        return tuple(prices + [0] * padding), tuple(volumes + [0] * padding)

    def _match(self, incoming: Order, limit: Optional[int]) -> list:
        trades = []
        opposite = self.asks if incoming.side == BUY else self.bids
        while incoming.qty > 0 and opposite:
            price, level = opposite.peekitem(0)
            if limit is not None and (price > limit if incoming.side == BUY else price < limit):
                break
            resting = level.head()
            fill = min(incoming.qty, resting.qty)
            if incoming.side == BUY:
                trade = Trade(incoming.entry_time, price, fill, incoming.agent_id, resting.agent_id, BUY,
                              incoming.order_id, resting.order_id)
            else:
                trade = Trade(incoming.entry_time, price, fill, resting.agent_id, incoming.agent_id, SELL,
                              resting.order_id, incoming.order_id)
            trades.append(trade)
            incoming.qty -= fill
            if fill == resting.qty:
                self._remove(resting)
            else:
                resting.qty -= fill
                level.volume -= fill
        return trades

    def _remove(self, order: Order):
        levels = self._side(order.side)
        level = levels[order.price]
        level.remove(order)
        if not level:
            del levels[order.price]
        del self.orders[order.order_id]


class ExchangeAgent(Agent):
    """
    NASDAQ-like exchange agent holding the book of a single instrument.

    Args:
        opening_price (int | None): Centre of the opening ladder; None disables seeding.
        opening_levels (int): Number of seeded price levels per side.
        opening_qty (int): Quantity of each seeded order.
        depth (int): Number of levels reported in L2 data.
    """

    strategy = "exchange"

    def __init__(self, opening_price: Optional[int] = None, opening_levels: int = 0, opening_qty: int = 0,
                 depth: int = L2_DEPTH):
        super().__init__()
        self.book = LimitOrderBook()
        self.opening_price = opening_price
        self.opening_levels = opening_levels
        self.opening_qty = opening_qty
        self.depth = depth
        self.last_trade = 0
        self.order_log: list[list] = []
        self.trades: list[Trade] = []
        self.l2_log: list[L2Snapshot] = []

    def kernel_starting(self, t: int):
        if self.opening_price is None or self.opening_levels <= 0:
            return
        for level in range(1, self.opening_levels + 1):
            for side in (BUY, SELL):
                price = self.opening_price - side * level
                if price <= 0:
                    continue
                order = Order(self.kernel.next_order_id(), self.id, side, self.opening_qty, price, t)
                self.book.submit_limit_order(order)
        self._log_l2(t)

    def receive_message(self, t: int, sender: int, message: Message):
        if isinstance(message, LimitOrderMsg):
            self._on_limit(t, sender, message)
        elif isinstance(message, MarketOrderMsg):
            self._on_market(t, sender, message)
        elif isinstance(message, CancelOrderMsg):
            self._on_cancel(t, sender, message)
        elif isinstance(message, L2Request):
            self.send(sender, L2Response(self.snapshot(t, message.depth)))
        else:
            logger.debug(f"Exchange ignored {message.kind} from agent {sender}")

    def snapshot(self, t: int, depth: Optional[int] = None) -> L2Snapshot:
        return self.book.snapshot_l2(depth or self.depth, t, self.last_trade)

    def _on_limit(self, t: int, sender: int, message: LimitOrderMsg):
        if message.qty <= 0 or message.price <= 0:
            self._reject(sender, message.order_id, "non-positive quantity or price")
            return
        order = Order(message.order_id, sender, message.side, message.qty, message.price, t)
        self._log_order(t, sender, "LIMIT", message.side, message.price, message.qty)
        self.send(sender, OrderAccepted(message.order_id))
        trades = self.book.submit_limit_order(order)
        self._report(trades, order)
        self._log_l2(t)

    def _on_market(self, t: int, sender: int, message: MarketOrderMsg):
        if message.qty <= 0:
            self._reject(sender, message.order_id, "non-positive quantity")
            return
        opposite_best = self.book.best_ask() if message.side == BUY else self.book.best_bid()
        if opposite_best is None:
            self._reject(sender, message.order_id, "opposite side empty")
            return
        self._log_order(t, sender, "MARKET", message.side, opposite_best, message.qty)
        order = Order(message.order_id, sender, message.side, message.qty, None, t)
        trades = self.book.submit_market_order(sender, message.side, message.qty, t, message.order_id)
        filled = self._report(trades, order)
        if filled < message.qty:
            self.send(sender, OrderCancelled(message.order_id, message.qty - filled))
        self._log_l2(t)

    def _on_cancel(self, t: int, sender: int, message: CancelOrderMsg):
        order = self.book.orders.get(message.order_id)
        if order is None or not self.book.cancel_order(sender, message.order_id):
            self._reject(sender, message.order_id, "no open order")
            return
        self._log_order(t, sender, "CANCEL", order.side, order.price, order.qty)
        self.send(sender, OrderCancelled(message.order_id, order.qty))
        self._log_l2(t)

    def _report(self, trades: list, incoming: Order) -> int:
        filled = 0
        for trade in trades:
            filled += trade.qty
            self.trades.append(trade)
            self.last_trade = trade.price
            remaining = incoming.entry_qty - filled
            resting_id, resting_agent = ((trade.sell_order_id, trade.sell_agent) if incoming.side == BUY
                                         else (trade.buy_order_id, trade.buy_agent))
            resting = self.book.orders.get(resting_id)
            self.send(incoming.agent_id, OrderExecuted(incoming.order_id, incoming.side, trade.price, trade.qty,
                                                       remaining))
            # The opening ladder belongs to the exchange itself.
            if resting_agent != self.id:
                self.send(resting_agent, OrderExecuted(resting_id, -incoming.side, trade.price, trade.qty,
                                                       resting.qty if resting is not None else 0))
        return filled

    def _reject(self, sender: int, order_id: int, reason: str):
        logger.debug(f"Rejected order {order_id} from agent {sender}: {reason}")
        self.send(sender, OrderRejected(order_id, reason))

    def _log_order(self, t: int, sender: int, action: str, side: int, price: int, qty: int):
        archetype = self.kernel.agents[sender].archetype
        label = archetype.value if archetype is not None else ""
        self.order_log.append([t, sender, label, action, SIDE_NAMES[side], price, qty])

    def _log_l2(self, t: int):
        self.l2_log.append(self.snapshot(t))
