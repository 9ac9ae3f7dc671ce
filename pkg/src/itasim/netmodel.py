"""Nodes, links and store-and-forward transmission timing."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .engine import US_PER_SECOND, Engine, SimTime


class UnknownNode(KeyError):
    pass


class UnknownLink(KeyError):
    pass


class DuplicateLink(ValueError):
    pass


class ConfigInvalid(ValueError):
    pass


class NodeKind(enum.Enum):
    SENSOR = "sensor"
    CAMERA = "camera"
    INN = "inn"
    EDGE = "edge"
    CLOUD = "cloud"
    MONITOR = "monitor"


class DataClass(enum.Enum):
    RAW_SENSOR = "raw_sensor"
    IMAGE_FRAME = "image_frame"


@dataclass(frozen=True)
class NodeId:
    id: int
    kind: NodeKind
    name: str = field(default="", compare=False)

    def __str__(self):
        return self.name or f"{self.kind.value}{self.id}"


@dataclass
class Message:
    msg_id: int
    source: NodeId
    data_class: DataClass
    size: int
    created_at: SimTime
    processed_at_edge: bool = False
    priority: Any = None
    body: Any = None

    def __post_init__(self):
        if self.size <= 0:
            raise ValueError(f"message size must be positive, got {self.size}")

    def copy(self) -> "Message":
        return replace(self)

    def mark_processed(self, at: NodeId) -> None:
        if at.kind is not NodeKind.EDGE:
            raise ValueError(f"only an edge node may process messages, not {at}")
        self.processed_at_edge = True


@dataclass
class Link:
    id: int
    src: NodeId
    dst: NodeId
    rate: int  # bits per second
    prop_delay: SimTime = 0
    busy_until: SimTime = 0
    bytes_sent: int = 0
    messages_sent: int = 0

    def serialization_us(self, size: int) -> SimTime:
        # ceil so that a message never crosses a link in zero time
        return -(-size * 8 * US_PER_SECOND // self.rate)


TransmitHook = Callable[[Link, Message, SimTime], None]


class Network:
    """Node registry and links bound to one engine."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self.nodes: dict[int, NodeId] = {}
        self.links: list[Link] = []
        self._by_pair: dict[tuple[int, int], int] = {}
        self.hooks: list[TransmitHook] = []

    def add_node(self, kind: NodeKind, name: str = "") -> NodeId:
        node = NodeId(len(self.nodes), kind, name)
        self.nodes[node.id] = node
        return node

    def connect(self, src: NodeId, dst: NodeId, rate: int, prop_delay: SimTime = 0) -> int:
        for node in (src, dst):
            if self.nodes.get(node.id) != node:
                raise UnknownNode(node)
        if rate <= 0:
            raise ValueError(f"link rate must be positive, got {rate}")
        if prop_delay < 0:
            raise ValueError("propagation delay must be non-negative")
        if (src.id, dst.id) in self._by_pair:
            raise DuplicateLink(f"{src} -> {dst}")
        link = Link(len(self.links), src, dst, int(rate), prop_delay)
        self.links.append(link)
        self._by_pair[src.id, dst.id] = link.id
        return link.id

    def link(self, link_id: int) -> Link:
        if not 0 <= link_id < len(self.links):
            raise UnknownLink(link_id)
        return self.links[link_id]

    def find(self, src: NodeId, dst: NodeId) -> int:
        try:
            return self._by_pair[src.id, dst.id]
        except KeyError:
            raise UnknownLink(f"{src} -> {dst}") from None

    def transmit(self, link_id: int, msg: Message, depart: SimTime | None = None) -> SimTime:
        """Serialize ``msg`` onto the link and schedule its delivery.

        The link sends one message at a time; a message departing while the
        link is busy starts when the previous one has been serialized.
        """
        link = self.link(link_id)
        if depart is None:
            depart = self.engine.now
        start = max(depart, link.busy_until)
        link.busy_until = start + link.serialization_us(msg.size)
        arrival = link.busy_until + link.prop_delay
        link.bytes_sent += msg.size
        link.messages_sent += 1
        for hook in self.hooks:
            hook(link, msg, depart)
        self.engine.schedule(arrival, link.dst, "deliver", msg, sender=link.src)
        return arrival


class InnNode:
    """Pass-through node: forwards every delivery to the cloud untouched."""

    def __init__(self, network: Network, node: NodeId, uplink: int):
        self.network = network
        self.node = node
        self.uplink = uplink
        self.forwarded = 0
        network.engine.register(node, self.handle)

    def handle(self, event) -> None:
        if event.kind != "deliver":
            raise ValueError(f"{self.node}: unexpected event {event.kind!r}")
        self.forwarded += 1
        self.network.transmit(self.uplink, event.message)


@dataclass
class SourcePorts:
    node: NodeId
    spec: Any
    inn_link: int
    edge_link: int


@dataclass
class Topology:
    """Sources feeding both an INN and an Edge node, each with one uplink to the cloud.

    ``pending`` lists (time, specs) of sources to attach while running.
    """

    network: Network
    inn: NodeId
    edge: NodeId
    cloud: NodeId
    monitor: NodeId
    inn_cloud: int
    edge_cloud: int
    link_specs: dict
    sources: list = field(default_factory=list)
    pending: list = field(default_factory=list)

    def add_source(self, spec) -> SourcePorts:
        kind = NodeKind(spec.kind)
        node = self.network.add_node(kind, spec.name)
        to_inn = self.link_specs["source_to_inn"]
        to_edge = self.link_specs["source_to_edge"]
        ports = SourcePorts(
            node, spec,
            self.network.connect(node, self.inn, to_inn.rate, to_inn.prop_delay),
            self.network.connect(node, self.edge, to_edge.rate, to_edge.prop_delay),
        )
        self.sources.append(ports)
        return ports


def clone_sensors(sources, count: int, first_index: int) -> list:
    """Copies of the first sensor spec, named ``<base>_<n>``, starting one
    interval after they are attached."""
    base = next((s for s in sources if s.kind is NodeKind.SENSOR), None)
    if base is None:
        raise ConfigInvalid("scaling needs a sensor source to clone")
    return [replace(base, name=f"{base.name}_{first_index + i}", start_at=None) for i in range(count)]


def build_topology(cfg, engine: Engine, scaling: bool = True) -> Topology:
    """Create nodes and links for ``cfg``; sources in ``cfg.scaling`` are
    queued in ``pending`` (when ``scaling`` is true) rather than created."""
    if not cfg.sources:
        raise ConfigInvalid("at least one source is required")
    net = Network(engine)
    inn = net.add_node(NodeKind.INN, "inn")
    edge = net.add_node(NodeKind.EDGE, "edge")
    cloud = net.add_node(NodeKind.CLOUD, "cloud")
    monitor = net.add_node(NodeKind.MONITOR, "monitor")
    links = cfg.links
    topo = Topology(
        network=net, inn=inn, edge=edge, cloud=cloud, monitor=monitor,
        inn_cloud=net.connect(inn, cloud, links["inn_to_cloud"].rate, links["inn_to_cloud"].prop_delay),
        edge_cloud=net.connect(edge, cloud, links["edge_to_cloud"].rate, links["edge_to_cloud"].prop_delay),
        link_specs=links,
    )
    for spec in cfg.sources:
        topo.add_source(spec)
    if scaling:
        added = 1
        for at, count in sorted(cfg.scaling):
            topo.pending.append((at, clone_sensors(cfg.sources, count, added)))
            added += count
    return topo
