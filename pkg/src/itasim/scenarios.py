"""The three canonical experiments and the glue that wires a run together."""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analytics import CloudNode, CloudState, EdgeNode
from .config import Config, dumps
from .engine import Engine, fmt_seconds
from .metrics import Recorder, RunSummary, summarize, write_csv
from .netmodel import DataClass, InnNode, NodeKind, Topology, build_topology
from .sources import (
    DatasetReplay,
    ReadingFeed,
    SourceNode,
    SourceSpec,
    Synthetic,
    emission_count,
    load_dataset,
)

log = logging.getLogger(__name__)

# scenario -> (data classes counted at the cloud, whether mid-run sources are attached)
SCENARIOS = {
    "case1": (frozenset({DataClass.RAW_SENSOR}), False),
    "case2": (frozenset({DataClass.IMAGE_FRAME}), False),
    "scaling": (frozenset(DataClass), True),
}

SERIES_UNITS = {
    "cloud_bytes": ("bytes", 1),
    "compute_seconds": ("s", 1_000_000),
    "bw_consumed": ("bits", 1),
    "msgs_processed": ("messages", 1),
}


@dataclass
class Run:
    cfg: Config
    scenario: str
    engine: Engine
    topology: Topology
    edge: EdgeNode
    cloud: CloudNode
    inn: InnNode
    metrics: Recorder
    sources: list = field(default_factory=list)
    dataset_info: dict = field(default_factory=dict)

    @property
    def summary(self) -> RunSummary:
        return summarize(self.metrics)

    def emitted(self) -> Counter:
        c: Counter = Counter()
        for s in self.sources:
            c[s.spec.data_class] += s.emitted
        return c

    def conservation(self) -> dict:
        """Per data class: what was emitted and where every copy ended up."""
        emitted = self.emitted()
        state = self.cloud.state
        out = {}
        for cls in DataClass:
            out[cls] = {
                "emitted": emitted[cls],
                "edge_dropped": self.edge.outcome(cls, "dropped"),
                "edge_processed": self.edge.outcome(cls, "processed"),
                "cloud_via_edge": state.processed_msgs["edge", cls],
                "cloud_via_inn": state.processed_msgs["inn", cls],
            }
        return out


class _Feeds:
    """Resolves the reading source of each sensor; datasets are loaded once."""

    def __init__(self, cfg: Config, engine: Engine):
        self.cfg = cfg
        self.engine = engine
        self._loaded: dict = {}
        self.info: dict = {}

    def _default_binding(self):
        ds = self.cfg.dataset
        if ds.mode == "synthetic":
            return Synthetic(self.cfg.synthetic)
        path = Path(ds.path) if ds.path else ds.cached_file()
        if ds.mode == "replay" or path.exists():
            return DatasetReplay(str(path), ds.motes, ds.strict)
        return Synthetic(self.cfg.synthetic)

    def feed_for(self, spec: SourceSpec) -> ReadingFeed:
        binding = spec.data if spec.data is not None else self._default_binding()
        if isinstance(binding, Synthetic):
            self.info.setdefault("mode", "synthetic")
            return ReadingFeed(rng=self.engine.stream(spec.name), params=binding.params)
        motes = spec.motes or binding.motes
        limit = self.cfg.dataset.max_records
        if limit is None:
            # the slice a full-length source can consume; clones start later and need no more
            limit = max(emission_count(s.start_at if s.start_at is not None else s.emit_interval,
                                       s.emit_interval, self.cfg.duration)
                        for s in self.cfg.sources if s.kind is NodeKind.SENSOR)
        key = (binding.path, motes, limit)
        if key not in self._loaded:
            data = load_dataset(binding.path, max_records=limit, motes=motes)
            log.info("loaded %d records (%d rejected) from %s", len(data.readings), data.rejects, binding.path)
            self._loaded[key] = data
            self.info.update(mode="replay", path=binding.path, records=len(data.readings),
                             rejects=data.rejects, motes=motes)
        return ReadingFeed(readings=self._loaded[key].readings, strict=binding.strict)


def simulate(cfg: Config, scenario: str = "case1", trace: bool = False) -> Run:
    """Run one scenario to completion, including delivery of traffic still in
    flight when the emission window closes."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; expected one of {', '.join(SCENARIOS)}")
    focus, attach = SCENARIOS[scenario]
    engine = Engine(seed=cfg.seed, trace=trace)
    topo = build_topology(cfg, engine, scaling=attach)
    net = topo.network

    metrics = Recorder(cfg.sample_interval)
    for prefix, (unit, scale) in SERIES_UNITS.items():
        for path in ("edge", "inn"):
            metrics.declare(f"{prefix}_{path}", unit, scale)
    metrics.declare_capacity("bw_available_ec", net.link(topo.edge_cloud).rate)
    metrics.declare_capacity("bw_available_ic", net.link(topo.inn_cloud).rate)

    uplink_path = {topo.edge_cloud: "edge", topo.inn_cloud: "inn"}

    def on_transmit(link, msg, depart):
        path = uplink_path.get(link.id)
        if path is not None:
            metrics.record(f"bw_consumed_{path}", depart, msg.size * 8)

    net.hooks.append(on_transmit)

    inn = InnNode(net, topo.inn, topo.inn_cloud)
    state = CloudState(algorithm_time=cfg.cloud_algorithm_time)
    cloud = CloudNode(engine, topo.cloud, state)

    def on_cloud(msg, via, now):
        if msg.data_class in focus:
            metrics.record(f"cloud_bytes_{via}", now, msg.size)
            metrics.record(f"compute_seconds_{via}", now, state.algorithm_time)
            metrics.record(f"msgs_processed_{via}", now, 1)

    cloud.listeners.append(on_cloud)

    modes = {s.name: s.rules_mode for s in cfg.sources if s.rules_mode}
    for _, specs in topo.pending:
        modes.update({s.name: s.rules_mode for s in specs if s.rules_mode})
    edge = EdgeNode(
        engine, topo.edge,
        forward=lambda m: net.transmit(topo.edge_cloud, m),
        params=cfg.edge, rules=cfg.rules, rules_mode=cfg.rules_mode,
        priority=cfg.priority, modes_by_source=modes,
    )

    run = Run(cfg, scenario, engine, topo, edge, cloud, inn, metrics)
    feeds = _Feeds(cfg, engine)
    next_id = itertools.count().__next__

    def start_source(ports, attached_at=0):
        spec = ports.spec
        feed = feeds.feed_for(spec) if spec.kind is NodeKind.SENSOR else None
        node = SourceNode(engine, net, ports.node, spec, ports.inn_link, ports.edge_link,
                          run_end=cfg.duration, next_id=next_id, feed=feed, attached_at=attached_at)
        run.sources.append(node)
        node.start()

    for ports in list(topo.sources):
        start_source(ports)

    def monitor(event):
        if event.kind != "attach":
            raise ValueError(f"monitor: unexpected event {event.kind!r}")
        for spec in event.data:
            start_source(topo.add_source(spec), attached_at=engine.now)
        log.info("t=%s s: attached %d sources", fmt_seconds(engine.now), len(event.data))

    engine.register(topo.monitor, monitor)
    for at, specs in topo.pending:
        engine.schedule(at, topo.monitor, "attach", data=specs)

    engine.run(cfg.duration)
    engine.run()  # drain in-flight messages
    metrics.end = max(cfg.duration, metrics.last)
    run.dataset_info = dict(feeds.info)
    return run


def resolved_config_text(run: Run) -> str:
    """The effective config, with the dataset slice actually used pinned down."""
    cfg = run.cfg
    info = run.dataset_info
    header = [f"# scenario: {run.scenario}"]
    if info.get("mode") == "replay":
        cfg = cfg.with_overrides(dataset=_pinned_dataset(cfg, info))
        header.append(f"# dataset: {info['records']} records, {info['rejects']} rejected lines")
    elif info.get("mode") == "synthetic":
        header.append("# dataset: synthetic readings")
    return "\n".join(header) + "\n" + dumps(cfg)


def _pinned_dataset(cfg: Config, info: dict):
    return replace(cfg.dataset, mode="replay", path=info["path"], max_records=info["records"])


def write_outputs(run: Run, out_dir, diagnostics: bool = False) -> list[Path]:
    out = Path(out_dir)
    files = write_csv(run.metrics, out, diagnostics=diagnostics)
    resolved = out / "config.resolved"
    resolved.write_text(resolved_config_text(run), encoding="utf-8")
    return files + [resolved]


def _run(cfg: Config, scenario: str, out_dir) -> RunSummary:
    run = simulate(cfg, scenario)
    if out_dir is not None:
        write_outputs(run, out_dir)
    return run.summary


def run_case_one(cfg: Config, out_dir=None) -> RunSummary:
    return _run(cfg, "case1", out_dir)


def run_case_two(cfg: Config, out_dir=None) -> RunSummary:
    return _run(cfg, "case2", out_dir)


def run_scaling(cfg: Config, out_dir=None) -> RunSummary:
    return _run(cfg, "scaling", out_dir)
