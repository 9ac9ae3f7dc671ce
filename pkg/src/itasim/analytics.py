"""Forward/reject decision logic for the edge node and cloud-side accounting.

Raw sensor readings go through threshold rules. Image messages go through a
bounded priority buffer served one item at a time, with a periodic deadline
that pushes whatever is still waiting to the cloud unprocessed.
"""

from __future__ import annotations

import enum
import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

from .engine import Engine, SimTime
from .netmodel import DataClass, Message, NodeId, NodeKind

RULE_MODES = ("rule1", "rule2", "either")
UNRANKED = 1 << 30


class Verdict(enum.Enum):
    FORWARD = "forward"
    DROP = "drop"


@dataclass(frozen=True)
class RuleSet:
    temp_threshold: float = 50.0
    humidity_threshold: float = 30.0
    light_threshold: float = 35.0
    # Intel Lab voltages sit around 2-3 V, so this branch never fires on that data.
    voltage_threshold: float = 500.0

    def __post_init__(self):
        for name in ("temp_threshold", "humidity_threshold", "light_threshold", "voltage_threshold"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def rule1(temperature: float, rules: RuleSet = RuleSet()) -> Verdict:
    return Verdict.FORWARD if temperature > rules.temp_threshold else Verdict.DROP


def rule2(humidity: float, light: float, voltage: float, rules: RuleSet = RuleSet()) -> Verdict:
    if (humidity < rules.humidity_threshold or light > rules.light_threshold
            or voltage > rules.voltage_threshold):
        return Verdict.FORWARD
    return Verdict.DROP


def evaluate(reading, rules: RuleSet = RuleSet(), mode: str = "either") -> Verdict:
    """Apply the rule(s) selected by ``mode`` to one SensorReading."""
    if mode == "rule1":
        return rule1(reading.temperature, rules)
    if mode == "rule2":
        return rule2(reading.humidity, reading.light, reading.voltage, rules)
    if mode == "either":
        if (rule1(reading.temperature, rules) is Verdict.FORWARD
                or rule2(reading.humidity, reading.light, reading.voltage, rules) is Verdict.FORWARD):
            return Verdict.FORWARD
        return Verdict.DROP
    raise ValueError(f"unknown rules mode {mode!r}")


class PriorityKey(NamedTuple):
    """Smaller keys are served first."""

    class_rank: int
    source_rank: int
    arrival_seq: int


@dataclass(frozen=True)
class PriorityMaps:
    class_rank: dict = field(default_factory=lambda: {DataClass.RAW_SENSOR: 0, DataClass.IMAGE_FRAME: 1})
    source_rank: dict = field(default_factory=dict)  # source name -> rank


def classify(msg: Message, maps: PriorityMaps, arrival_seq: int) -> PriorityKey:
    return PriorityKey(
        maps.class_rank.get(msg.data_class, UNRANKED),
        maps.source_rank.get(str(msg.source), UNRANKED),
        arrival_seq,
    )


@dataclass(frozen=True)
class EdgeParams:
    analytics_deadline: SimTime = 1_000_000
    buffer_storage: int = 20
    algorithm_time: SimTime = 10_000
    overflow: str = "forward"  # or "drop"

    def __post_init__(self):
        if self.buffer_storage < 1:
            raise ValueError("buffer_storage must be at least 1")
        if self.analytics_deadline <= 0 or self.algorithm_time <= 0:
            raise ValueError("analytics_deadline and algorithm_time must be positive")
        if self.overflow not in ("forward", "drop"):
            raise ValueError(f"overflow policy must be 'forward' or 'drop', got {self.overflow!r}")


class EdgeNode:
    """Edge analytics node.

    Raw sensor messages are judged on arrival and never enter the buffer.
    Image messages queue by PriorityKey (at most ``buffer_storage`` waiting,
    the one in service not counted). A deadline timer is armed whenever a busy
    period starts and re-armed every ``analytics_deadline`` while busy; on
    expiry every waiting item goes to the cloud as-is. The item in service
    always completes, and completed items are consumed at the edge.
    """

    def __init__(self, engine: Engine, node: NodeId, forward: Callable[[Message], None],
                 params: EdgeParams = EdgeParams(), rules: RuleSet = RuleSet(),
                 rules_mode: str = "either", priority: PriorityMaps = PriorityMaps(),
                 modes_by_source: dict | None = None):
        if node.kind is not NodeKind.EDGE:
            raise ValueError(f"{node} is not an edge node")
        if rules_mode not in RULE_MODES:
            raise ValueError(f"unknown rules mode {rules_mode!r}")
        self.engine = engine
        self.node = node
        self.forward = forward
        self.params = params
        self.rules = rules
        self.rules_mode = rules_mode
        self.priority = priority
        self.modes_by_source = modes_by_source or {}
        self.buffer: list = []
        self.busy = False
        self.in_service: Message | None = None
        self.deadline_epoch = 0
        self.arrivals = 0
        self.compute_us = 0
        self.counts: Counter = Counter()  # (DataClass, outcome) -> n
        self.service_log: list[Message] = []
        self.max_buffer = 0
        engine.register(node, self.handle)

    def handle(self, event) -> None:
        if event.kind == "deliver":
            self.on_receive(event.message)
        elif event.kind == "complete":
            self._on_complete()
        elif event.kind == "deadline":
            self.deadline_fire(event.data)
        else:
            raise ValueError(f"{self.node}: unexpected event {event.kind!r}")

    def on_receive(self, msg: Message) -> str:
        """Returns the action taken: forward, drop, enqueue or overflow."""
        msg.priority = classify(msg, self.priority, self.arrivals)
        self.arrivals += 1
        cls = msg.data_class
        self.counts[cls, "received"] += 1
        if cls is DataClass.RAW_SENSOR:
            self.compute_us += self.params.algorithm_time
            mode = self.modes_by_source.get(str(msg.source), self.rules_mode)
            if evaluate(msg.body, self.rules, mode) is Verdict.FORWARD:
                self.counts[cls, "forwarded"] += 1
                self.forward(msg)
                return "forward"
            self.counts[cls, "dropped"] += 1
            return "drop"
        if len(self.buffer) >= self.params.buffer_storage:
            if self.params.overflow == "forward":
                self.counts[cls, "overflowed"] += 1
                self.forward(msg)
            else:
                self.counts[cls, "dropped"] += 1
            return "overflow"
        heapq.heappush(self.buffer, (msg.priority, msg))
        self.max_buffer = max(self.max_buffer, len(self.buffer))
        if not self.busy:
            self._begin_busy()
        return "enqueue"

    def _arm_deadline(self) -> None:
        self.deadline_epoch += 1
        self.engine.schedule(self.engine.now + self.params.analytics_deadline, self.node,
                             "deadline", data=self.deadline_epoch)

    def _begin_busy(self) -> None:
        self.busy = True
        # armed before the first completion is scheduled so that, at equal
        # times, the deadline check runs before the completion
        self._arm_deadline()
        self.process_step()

    def process_step(self) -> SimTime:
        """Take the best waiting item into service; returns its completion time."""
        _, msg = heapq.heappop(self.buffer)
        self.in_service = msg
        self.service_log.append(msg)
        done = self.engine.now + self.params.algorithm_time
        self.engine.schedule(done, self.node, "complete", msg)
        return done

    def _on_complete(self) -> None:
        msg = self.in_service
        msg.mark_processed(self.node)
        self.in_service = None
        self.compute_us += self.params.algorithm_time
        self.counts[msg.data_class, "processed"] += 1
        if self.buffer:
            self.process_step()
        else:
            self.busy = False
            self.deadline_epoch += 1  # orphan the pending timer

    def deadline_fire(self, epoch: int) -> int:
        """Flush waiting items if this timer is current. Returns the number flushed."""
        if epoch != self.deadline_epoch or not self.busy:
            return 0
        flushed = 0
        while self.buffer:
            _, msg = heapq.heappop(self.buffer)
            self.counts[msg.data_class, "flushed"] += 1
            self.forward(msg)
            flushed += 1
        self._arm_deadline()
        return flushed

    def outcome(self, cls: DataClass, what: str) -> int:
        return self.counts[cls, what]


PATHS = ("edge", "inn")


@dataclass
class CloudState:
    algorithm_time: SimTime = 10_000
    stored_bytes: Counter = field(default_factory=Counter)  # (path, DataClass) -> bytes
    processed_msgs: Counter = field(default_factory=Counter)
    compute_us: Counter = field(default_factory=Counter)

    def total(self, counter: str, path: str, classes=None) -> int:
        c = getattr(self, counter)
        return sum(v for (p, cls), v in c.items() if p == path and (classes is None or cls in classes))


def path_of(sender: NodeId) -> str:
    if sender.kind is NodeKind.EDGE:
        return "edge"
    if sender.kind is NodeKind.INN:
        return "inn"
    raise ValueError(f"cloud received a message directly from {sender}")


def cloud_on_receive(state: CloudState, msg: Message, via: str) -> None:
    if via not in PATHS:
        raise ValueError(f"unknown path {via!r}")
    if msg.processed_at_edge:
        raise ValueError(f"message {msg.msg_id} was already processed at the edge")
    key = (via, msg.data_class)
    state.stored_bytes[key] += msg.size
    state.processed_msgs[key] += 1
    state.compute_us[key] += state.algorithm_time


class CloudNode:
    def __init__(self, engine: Engine, node: NodeId, state: CloudState):
        self.node = node
        self.state = state
        self.engine = engine
        self.listeners: list[Callable[[Message, str, SimTime], None]] = []
        engine.register(node, self.handle)

    def handle(self, event) -> None:
        if event.kind != "deliver":
            raise ValueError(f"{self.node}: unexpected event {event.kind!r}")
        via = path_of(event.sender)
        cloud_on_receive(self.state, event.message, via)
        for listener in self.listeners:
            listener(event.message, via, self.engine.now)
