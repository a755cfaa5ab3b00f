"""
Discrete-Event Kernel Module.

This module owns simulated time. Agents never call each other directly: every interaction is a
message that the kernel delivers after the sender's computation delay and the pairwise network
latency, and every agent activity starts from a wakeup the kernel services. Events are processed
in (delivery time, insertion sequence) order, which makes a run a pure function of its
configuration and seed.
"""

import hashlib
import heapq
import json
import logging
from dataclasses import dataclass, field
from typing import IO, Optional

import numpy as np

from config import DEFAULT_COMPUTATION_DELAY_NS, NY_SEATTLE_KM, SIGNAL_SPEED_KM_S
from errors import SchedulingError, UnknownAgentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Message:
    """Base class of every payload the kernel delivers."""

    @property
    def kind(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class LimitOrderMsg(Message):
    order_id: int
    side: int
    price: int
    qty: int


@dataclass(frozen=True)
class MarketOrderMsg(Message):
    order_id: int
    side: int
    qty: int


@dataclass(frozen=True)
class CancelOrderMsg(Message):
    order_id: int


@dataclass(frozen=True)
class L2Request(Message):
    depth: int = 5


@dataclass(frozen=True)
class L2Response(Message):
    snapshot: object


@dataclass(frozen=True)
class OrderAccepted(Message):
    order_id: int


@dataclass(frozen=True)
class OrderExecuted(Message):
    order_id: int
    side: int
    price: int
    qty: int
    remaining: int


@dataclass(frozen=True)
class OrderCancelled(Message):
    order_id: int
    remaining: int


@dataclass(frozen=True)
class OrderRejected(Message):
    order_id: int
    reason: str


@dataclass(frozen=True)
class Wakeup(Message):
    pass


@dataclass(order=True)
class Event:
    deliver_at: int
    seq: int
    recipient: int = field(compare=False)
    sender: int = field(compare=False)
    payload: Message = field(compare=False)


@dataclass
class LatencyModel:
    """
    Network latency and computation delay configuration.

    Attributes:
        default_latency_ns (int): One-way latency applied to every pair without an override.
        pairwise_latency_ns (dict): Overrides keyed by (sender, recipient); symmetric lookups are used.
        computation_delay_ns (int): Delay every agent pays before its messages leave.
        agent_computation_delay_ns (dict): Per-agent computation delay overrides.
        jitter_ns (int): Upper bound of uniform extra latency; 0 disables jitter.
    """

    default_latency_ns: int = 0
    pairwise_latency_ns: dict = field(default_factory=dict)
    computation_delay_ns: int = DEFAULT_COMPUTATION_DELAY_NS
    agent_computation_delay_ns: dict = field(default_factory=dict)
    jitter_ns: int = 0

    def __post_init__(self):
        values = [self.default_latency_ns, self.computation_delay_ns, self.jitter_ns]
        values += list(self.pairwise_latency_ns.values()) + list(self.agent_computation_delay_ns.values())
        if any(v < 0 for v in values):
            raise ValueError("latencies and computation delays must be non-negative")

    @classmethod
    def from_distance(cls, distance_km: float = NY_SEATTLE_KM, signal_speed_km_s: float = SIGNAL_SPEED_KM_S,
                      computation_delay_ns: int = DEFAULT_COMPUTATION_DELAY_NS) -> "LatencyModel":
        """
        Builds a model whose one-way latency is the propagation time over a distance.

        Args:
            distance_km (float): Great-circle distance between the agents and the exchange.
            signal_speed_km_s (float): Propagation speed of the signal.
            computation_delay_ns (int): Default computation delay per agent.

        Returns:
            LatencyModel: The derived model, e.g. 19,330,000 ns for New York to Seattle.
        """
        latency_ns = int(round(distance_km / signal_speed_km_s * 1e9))
        return cls(default_latency_ns=latency_ns, computation_delay_ns=computation_delay_ns)

    def latency(self, sender: int, recipient: int) -> int:
        if (sender, recipient) in self.pairwise_latency_ns:
            return self.pairwise_latency_ns[(sender, recipient)]
        if (recipient, sender) in self.pairwise_latency_ns:
            return self.pairwise_latency_ns[(recipient, sender)]
        return self.default_latency_ns

    def computation_delay(self, agent_id: int) -> int:
        return self.agent_computation_delay_ns.get(agent_id, self.computation_delay_ns)


class Agent:
    """
    Base class of every simulation participant, the exchange included.

    Subclasses override ``kernel_starting``, ``wakeup`` and ``receive_message``. The kernel assigns
    ``id`` and a private random generator when the agent is registered.
    """

    strategy = "agent"
    archetype = None

    def __init__(self):
        self.id: Optional[int] = None
        self.kernel: Optional["Kernel"] = None
        self.rng: Optional[np.random.Generator] = None

    def attach(self, kernel: "Kernel", agent_id: int, rng: np.random.Generator):
        self.kernel = kernel
        self.id = agent_id
        self.rng = rng

    @property
    def now(self) -> int:
        return self.kernel.now

    def kernel_starting(self, t: int):
        pass

    def wakeup(self, t: int):
        pass

    def receive_message(self, t: int, sender: int, message: Message):
        pass

    def send(self, recipient: int, message: Message) -> int:
        return self.kernel.deliver(self.id, recipient, message)

    def set_wakeup(self, t: int):
        self.kernel.wakeup_at(self.id, t)


class Kernel:
    """
    Single-threaded event loop for one simulated trading day.

    Args:
        latency (LatencyModel): Latency and computation delay configuration.
        start_ns (int): First instant at which wakeups are honoured.
        end_ns (int): Last instant at which wakeups are honoured.
        seed_sequence (np.random.SeedSequence): Root of every random stream in the run.
        trace_file (IO | None): Optional text stream receiving one JSON record per processed event.
    """

    def __init__(self, latency: LatencyModel, start_ns: int, end_ns: int,
                 seed_sequence: np.random.SeedSequence, trace_file: Optional[IO] = None):
        if start_ns > end_ns:
            raise ValueError("simulation start must not be after its end")
        self.latency = latency
        self.start_ns = start_ns
        self.end_ns = end_ns
        self.seed_sequence = seed_sequence
        self.trace_file = trace_file
        self.now = 0
        self.agents: list[Agent] = []
        self._queue: list[Event] = []
        self._seq = 0
        self._order_seq = 0
        self._started = False
        self._trace = hashlib.sha256()
        self._jitter_rng = np.random.default_rng(
            np.random.SeedSequence(seed_sequence.entropy, spawn_key=seed_sequence.spawn_key + (2**32 - 1,)))

    def register(self, agent: Agent) -> int:
        """
        Registers an agent and hands it an independent random stream keyed by its id.

        Args:
            agent (Agent): The agent to register.

        Returns:
            int: The assigned agent id (registration order, starting at 0).
        """
        agent_id = len(self.agents)
        stream = np.random.SeedSequence(self.seed_sequence.entropy,
                                        spawn_key=self.seed_sequence.spawn_key + (agent_id,))
        agent.attach(self, agent_id, np.random.default_rng(stream))
        self.agents.append(agent)
        return agent_id

    def next_order_id(self) -> int:
        self._order_seq += 1
        return self._order_seq

    def schedule(self, event: Event):
        """
        Enqueues an event; the seq field is overwritten with the insertion counter.

        Args:
            event (Event): The event to enqueue.

        Raises:
            SchedulingError: If the event would be delivered before the current kernel time.
        """
        if event.deliver_at < self.now:
            raise SchedulingError(
                f"event for agent {event.recipient} at {event.deliver_at} is before current time {self.now}")
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, event)

    def wakeup_at(self, agent_id: int, t: int):
        """
        Requests that an agent's wakeup callback runs at time t.

        Requests outside the simulation window are dropped, as the agent would not act then.
        """
        self._check_agent(agent_id)
        if not self.start_ns <= t <= self.end_ns:
            logger.debug(f"Dropped wakeup of agent {agent_id} at {t}, outside [{self.start_ns}, {self.end_ns}]")
            return
        self.schedule(Event(t, 0, agent_id, agent_id, Wakeup()))

    def deliver(self, sender: int, recipient: int, payload: Message) -> int:
        """
        Sends a message, delayed by the sender's computation delay and the pairwise latency.

        Args:
            sender (int): The id of the sending agent.
            recipient (int): The id of the receiving agent.
            payload (Message): The message to deliver.

        Returns:
            int: The simulated time at which the message is delivered.
        """
        self._check_agent(sender)
        self._check_agent(recipient)
        deliver_at = self.now + self.latency.computation_delay(sender) + self.latency.latency(sender, recipient)
        if self.latency.jitter_ns > 0:
            deliver_at += int(self._jitter_rng.integers(0, self.latency.jitter_ns + 1))
        self.schedule(Event(deliver_at, 0, recipient, sender, payload))
        return deliver_at

    def run(self, until: int) -> int:
        """
        Processes every queued event delivered at or before ``until``.

        Args:
            until (int): Inclusive time bound.

        Returns:
            int: The number of events processed by this call.
        """
        if not self._started:
            self._started = True
            self.now = self.start_ns
            for agent in self.agents:
                agent.kernel_starting(self.start_ns)

        processed = 0
        while self._queue and self._queue[0].deliver_at <= until:
            event = heapq.heappop(self._queue)
            self.now = event.deliver_at
            self._record(event)
            agent = self.agents[event.recipient]
            if isinstance(event.payload, Wakeup):
                agent.wakeup(self.now)
            else:
                agent.receive_message(self.now, event.sender, event.payload)
            processed += 1
        return processed

    @property
    def trace_hash(self) -> str:
        return self._trace.hexdigest()

    @property
    def pending(self) -> int:
        return len(self._queue)

    def _record(self, event: Event):
        kind = event.payload.kind
        self._trace.update(f"{event.deliver_at},{event.seq},{event.sender},{event.recipient},{kind}\n".encode())
        if self.trace_file is not None:
            self.trace_file.write(json.dumps({
                "time_ns": event.deliver_at,
                "sender": event.sender,
                "recipient": event.recipient,
                "kind": kind,
            }) + "\n")

    def _check_agent(self, agent_id: int):
        if not 0 <= agent_id < len(self.agents):
            raise UnknownAgentError(f"unknown agent id {agent_id}", field="recipient")
