import numpy as np
import pytest

from market.exchange import (BUY, SELL, ExchangeAgent, L2Snapshot, LimitOrderBook, Order, l2_header,
                             round_half_away)
from market.kernel import (CancelOrderMsg, Kernel, L2Request, L2Response, LatencyModel, LimitOrderMsg,
                           MarketOrderMsg, OrderCancelled, OrderExecuted, OrderRejected)


def limit(book, order_id, side, qty, price, agent=1, time=0):
    return book.submit_limit_order(Order(order_id, agent, side, qty, price, time))


def fills(trades):
    return [(t.qty, t.price) for t in trades]


class TestLimitOrderBook:
    def test_crossing_limit_fills_then_rests_residual(self):
        book = LimitOrderBook()
        limit(book, 1, SELL, 5, 1010)
        trades = limit(book, 2, BUY, 7, 1012, agent=2)
        assert fills(trades) == [(5, 1010)]
        assert book.best_bid() == 1012
        assert book.bids[1012].volume == 2
        assert book.best_ask() is None

    def test_larger_order_first_when_entry_times_tie(self):
        book = LimitOrderBook()
        limit(book, 1, SELL, 3, 1010, agent=1)
        limit(book, 2, SELL, 10, 1010, agent=2)
        trades = limit(book, 3, BUY, 10, 1010, agent=3)
        assert [(t.sell_agent, t.qty) for t in trades] == [(2, 10)]
        assert book.asks[1010].volume == 3

    def test_earlier_entry_beats_larger_size(self):
        book = LimitOrderBook()
        limit(book, 1, SELL, 3, 1010, agent=1, time=1)
        limit(book, 2, SELL, 10, 1010, agent=2, time=2)
        trades = limit(book, 3, BUY, 3, 1010, agent=3, time=3)
        assert [t.sell_agent for t in trades] == [1]

    def test_non_crossing_limit_rests(self):
        book = LimitOrderBook()
        limit(book, 1, SELL, 5, 1010)
        assert limit(book, 2, BUY, 5, 999) == []
        assert book.best_bid() == 999
        assert book.best_ask() == 1010

    def test_market_order_walks_the_book(self):
        book = LimitOrderBook()
        limit(book, 1, SELL, 3, 1010)
        limit(book, 2, SELL, 4, 1011)
        trades = book.submit_market_order(9, BUY, 5)
        assert fills(trades) == [(3, 1010), (2, 1011)]
        assert book.asks[1011].volume == 2

    def test_market_order_into_empty_side(self):
        book = LimitOrderBook()
        assert book.submit_market_order(9, SELL, 5) == []

    def test_market_order_equal_to_level_removes_it(self):
        book = LimitOrderBook()
        limit(book, 1, SELL, 4, 1010)
        book.submit_market_order(9, BUY, 4)
        assert 1010 not in book.asks
        assert book.orders == {}

    def test_cancel_semantics(self):
        book = LimitOrderBook()
        limit(book, 1, BUY, 7, 1000, agent=1)
        limit(book, 2, BUY, 3, 1000, agent=1)
        assert book.cancel_order(2, 1) is False
        assert book.cancel_order(1, 1) is True
        assert book.bids[1000].volume == 3
        assert book.cancel_order(1, 1) is False

    @pytest.mark.parametrize("qty, price", [(0, 1000), (-1, 1000), (5, 0)])
    def test_non_positive_orders_raise(self, qty, price):
        with pytest.raises(ValueError):
            limit(LimitOrderBook(), 1, BUY, qty, price)

    def test_l2_snapshot_aggregates_and_pads(self):
        book = LimitOrderBook()
        limit(book, 1, BUY, 4, 1000)
        limit(book, 2, BUY, 3, 1000)
        limit(book, 3, BUY, 3, 999)
        snapshot = book.snapshot_l2(5)
        assert snapshot.bid_prices == (1000, 999, 0, 0, 0)
        assert snapshot.bid_volumes == (7, 3, 0, 0, 0)
        assert snapshot.ask_volumes == (0, 0, 0, 0, 0)
        assert not snapshot.two_sided

    def test_mid_and_spread(self):
        snapshot = L2Snapshot(0, (1000,), (1,), (1010,), (1,))
        assert snapshot.mid == 1005
        assert snapshot.spread == 10

    def test_snapshot_row_round_trip_keeps_last_trade(self):
        snapshot = L2Snapshot(5, (1000, 999), (1, 2), (1010, 0), (3, 0), 1004)
        row = snapshot.as_row()
        assert len(row) == len(l2_header(2))
        assert L2Snapshot.from_row(row, 2) == snapshot


@pytest.mark.parametrize("value, expected", [(1005.5, 1006), (1004.5, 1005), (-2.5, -3), (3.4, 3)])
def test_round_half_away(value, expected):
    assert round_half_away(value) == expected


class ReferenceMatcher:
    """Brute-force re-matcher: scans every resting order for the best (price, time, -size, seq) key."""

    def __init__(self):
        self.resting = []
        self.seq = 0

    def _best(self, side, limit_price):
        candidates = [o for o in self.resting if o["side"] == -side and (
            limit_price is None or (o["price"] <= limit_price if side == BUY else o["price"] >= limit_price))]
        if not candidates:
            return None
        return min(candidates, key=lambda o: (o["price"] * side, o["time"], -o["entry_qty"], o["seq"]))

    def submit(self, order_id, agent, side, qty, price, time):
        self.seq += 1
        trades = []
        while qty > 0:
            resting = self._best(side, price)
            if resting is None:
                break
            fill = min(qty, resting["qty"])
            buyer, seller = (agent, resting["agent"]) if side == BUY else (resting["agent"], agent)
            trades.append((resting["price"], fill, buyer, seller))
            qty -= fill
            resting["qty"] -= fill
            if resting["qty"] == 0:
                self.resting.remove(resting)
        if qty > 0 and price is not None:
            self.resting.append({"id": order_id, "agent": agent, "side": side, "qty": qty, "price": price,
                                 "time": time, "entry_qty": qty + sum(t[1] for t in trades), "seq": self.seq})
        return trades

    def cancel(self, agent, order_id):
        for order in self.resting:
            if order["id"] == order_id and order["agent"] == agent:
                self.resting.remove(order)
                return True
        return False


def replay(seed, n_ops=50):
    rng = np.random.default_rng(seed)
    book, oracle = LimitOrderBook(), ReferenceMatcher()
    time, issued = 0, []
    for order_id in range(1, n_ops + 1):
        time += int(rng.integers(0, 2))
        agent = int(rng.integers(1, 4))
        kind = rng.choice(["limit", "limit", "market", "cancel"])
        if kind == "cancel" and issued:
            target, owner = issued[int(rng.integers(0, len(issued)))]
            assert book.cancel_order(owner, target) == oracle.cancel(owner, target)
            continue
        side = BUY if rng.random() < 0.5 else SELL
        qty = int(rng.integers(1, 10))
        if kind == "market":
            got = book.submit_market_order(agent, side, qty, time, order_id)
            expected = oracle.submit(order_id, agent, side, qty, None, time)
        else:
            price = int(rng.integers(100, 105))
            got = limit(book, order_id, side, qty, price, agent=agent, time=time)
            expected = oracle.submit(order_id, agent, side, qty, price, time)
            issued.append((order_id, agent))
        assert [(t.price, t.qty, t.buy_agent, t.sell_agent) for t in got] == expected


def test_matching_agrees_with_reference_matcher():
    for seed in range(300):
        replay(seed)


@pytest.mark.slow
def test_matching_agrees_with_reference_matcher_exhaustively():
    for seed in range(10_000):
        replay(seed)


class TestExchangeAgent:
    def setup_method(self):
        self.kernel = Kernel(LatencyModel(default_latency_ns=0, computation_delay_ns=0), 0, 1_000,
                             np.random.SeedSequence(5, spawn_key=(0,)))

    def start(self, exchange, *agents):
        self.kernel.register(exchange)
        for agent in agents:
            self.kernel.register(agent)
        self.kernel.run(0)

    def test_opening_ladder(self):
        exchange = ExchangeAgent(1000, 2, 100)
        self.start(exchange)
        snapshot = exchange.snapshot(0)
        assert snapshot.bid_prices[:2] == (999, 998)
        assert snapshot.ask_prices[:2] == (1001, 1002)
        assert len(exchange.l2_log) == 1

    def test_limit_order_fills_both_parties(self, recording_agent_cls):
        exchange = ExchangeAgent()
        maker, taker = recording_agent_cls(), recording_agent_cls()
        self.start(exchange, maker, taker)
        maker.send(exchange.id, LimitOrderMsg(1, SELL, 1010, 5))
        taker.send(exchange.id, LimitOrderMsg(2, BUY, 1012, 7))
        self.kernel.run(0)
        maker_fill = [m for _, _, m in maker.messages if isinstance(m, OrderExecuted)]
        taker_fill = [m for _, _, m in taker.messages if isinstance(m, OrderExecuted)]
        assert maker_fill == [OrderExecuted(1, SELL, 1010, 5, 0)]
        assert taker_fill == [OrderExecuted(2, BUY, 1010, 5, 2)]
        assert exchange.last_trade == 1010
        assert [row[3] for row in exchange.order_log] == ["LIMIT", "LIMIT"]
        assert exchange.trades[0].as_row()[-1] == "BUY"

    def test_market_order_into_empty_book_is_rejected(self, recording_agent_cls):
        exchange = ExchangeAgent()
        agent = recording_agent_cls()
        self.start(exchange, agent)
        agent.send(exchange.id, MarketOrderMsg(1, SELL, 5))
        self.kernel.run(0)
        assert isinstance(agent.messages[-1][2], OrderRejected)
        assert exchange.order_log == []

    def test_market_order_remainder_is_cancelled(self, recording_agent_cls):
        exchange = ExchangeAgent()
        maker, taker = recording_agent_cls(), recording_agent_cls()
        self.start(exchange, maker, taker)
        maker.send(exchange.id, LimitOrderMsg(1, SELL, 1010, 3))
        taker.send(exchange.id, MarketOrderMsg(2, BUY, 5))
        self.kernel.run(0)
        assert taker.messages[-1][2] == OrderCancelled(2, 2)
        assert exchange.order_log[-1][3:] == ["MARKET", "BUY", 1010, 5]

    def test_cancel_and_invalid_orders(self, recording_agent_cls):
        exchange = ExchangeAgent()
        agent = recording_agent_cls()
        self.start(exchange, agent)
        agent.send(exchange.id, LimitOrderMsg(1, BUY, 1000, 5))
        agent.send(exchange.id, CancelOrderMsg(1))
        agent.send(exchange.id, CancelOrderMsg(1))
        agent.send(exchange.id, LimitOrderMsg(2, BUY, 0, 5))
        self.kernel.run(0)
        replies = [m for _, _, m in agent.messages]
        assert OrderCancelled(1, 5) in replies
        assert sum(isinstance(m, OrderRejected) for m in replies) == 2
        assert [row[3] for row in exchange.order_log] == ["LIMIT", "CANCEL"]

    def test_l2_request_is_answered(self, recording_agent_cls):
        exchange = ExchangeAgent(1000, 1, 10)
        agent = recording_agent_cls()
        self.start(exchange, agent)
        agent.send(exchange.id, L2Request(depth=1))
        self.kernel.run(0)
        response = agent.messages[-1][2]
        assert isinstance(response, L2Response)
        assert response.snapshot.best_bid == 999
        assert response.snapshot.best_ask == 1001
