"""Run configuration: TOML schema, defaults, validation and round-trip dump.

Every section is optional; an empty file yields the default experiment (one
sensor and one camera, each duplicated onto the INN and Edge paths). See
docs/config.md for the full grammar.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .analytics import RULE_MODES, EdgeParams, PriorityMaps, RuleSet
from .engine import US_PER_SECOND, SimTime, to_us
from .netmodel import ConfigInvalid, DataClass, NodeKind
from .sources import SourceSpec, Synthetic, SyntheticParams

DEFAULT_DATASET_URL = "http://db.csail.mit.edu/labdata/data.txt.gz"
DATASET_FILENAME = "data.txt.gz"
LINK_NAMES = ("source_to_inn", "source_to_edge", "inn_to_cloud", "edge_to_cloud")
DATASET_MODES = ("auto", "replay", "synthetic")

_RATE_RE = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*([kKmMgG]?)(?:bps|bit/s|b/s)?\s*$")
_RATE_UNITS = {"": 1, "k": 10**3, "m": 10**6, "g": 10**9}


class ConfigError(ConfigInvalid):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")


def parse_rate(value: Any) -> int:
    """'100Mbps' -> 100_000_000. Bare numbers are bits per second."""
    from decimal import Decimal

    if isinstance(value, bool):
        raise ValueError(f"not a rate: {value!r}")
    if isinstance(value, (int, float)):
        d = Decimal(str(value))
    else:
        m = _RATE_RE.match(str(value))
        if not m:
            raise ValueError(f"not a rate: {value!r}")
        d = Decimal(m.group(1)) * _RATE_UNITS[m.group(2).lower()]
    if d <= 0:
        raise ValueError("rate must be positive")
    if d != d.to_integral_value():
        raise ValueError("rate must be a whole number of bits per second")
    return int(d)


@dataclass(frozen=True)
class LinkSpec:
    rate: int
    prop_delay: SimTime = 0


def _default_links() -> dict:
    gbps, mbps100 = 10**9, 10**8
    return {"source_to_inn": LinkSpec(gbps), "source_to_edge": LinkSpec(gbps),
            "inn_to_cloud": LinkSpec(mbps100), "edge_to_cloud": LinkSpec(mbps100)}


def _default_sources() -> list:
    return [
        SourceSpec(NodeKind.SENSOR, emit_interval=500_000, payload_bytes=49_000, name="sensor0"),
        SourceSpec(NodeKind.CAMERA, emit_interval=500_000, payload_bytes=495_000, name="camera0",
                   frames_per_message=10),
    ]


@dataclass
class DatasetConfig:
    url: str = DEFAULT_DATASET_URL
    cache_dir: str | None = None
    mode: str = "auto"
    path: str | None = None
    max_records: int | None = None
    motes: tuple | None = None
    strict: bool = False

    def resolved_url(self) -> str:
        return os.environ.get("ITA_DATASET_URL") or self.url

    def resolved_cache_dir(self) -> Path:
        env = os.environ.get("ITA_CACHE_DIR")
        if env:
            return Path(env)
        if self.cache_dir:
            return Path(self.cache_dir)
        return Path.home() / ".cache" / "itasim"

    def cached_file(self) -> Path:
        return self.resolved_cache_dir() / DATASET_FILENAME


@dataclass
class Config:
    duration: SimTime = 1000 * US_PER_SECOND
    seed: int = 0
    sample_interval: SimTime = US_PER_SECOND
    links: dict = field(default_factory=_default_links)
    sources: list = field(default_factory=_default_sources)
    rules: RuleSet = RuleSet()
    rules_mode: str = "either"
    edge: EdgeParams = EdgeParams()
    cloud_algorithm_time: SimTime = 10_000
    priority: PriorityMaps = PriorityMaps()
    scaling: list = field(default_factory=lambda: [(500 * US_PER_SECOND, 3), (800 * US_PER_SECOND, 4)])
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    synthetic: SyntheticParams = SyntheticParams()

    def with_overrides(self, **kw) -> "Config":
        return replace(self, **kw)


class _Section:
    """Pops keys from a TOML table, tracking the dotted path for errors."""

    def __init__(self, table: Any, path: str):
        if not isinstance(table, dict):
            raise ConfigError(path, "expected a table")
        self.table = dict(table)
        self.path = path

    def key(self, name: str) -> str:
        return f"{self.path}.{name}" if self.path else name

    def take(self, name: str, conv, default=None):
        if name not in self.table:
            return default
        raw = self.table.pop(name)
        try:
            return conv(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(self.key(name), str(exc)) from None

    def sub(self, name: str) -> "_Section":
        return _Section(self.table.pop(name, {}), self.key(name))

    def done(self) -> None:
        if self.table:
            raise ConfigError(self.key(sorted(self.table)[0]), "unknown key")


def _int(v, lo=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ValueError(f"must be >= {lo}")
    return v


def _float(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _pos_time(v) -> SimTime:
    t = to_us(v)
    if t <= 0:
        raise ValueError("must be positive")
    return t


def _str_choice(choices):
    def conv(v):
        if v not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}, got {v!r}")
        return v
    return conv


def _range(v) -> tuple:
    if not isinstance(v, list) or len(v) != 2:
        raise ValueError("expected [low, high]")
    lo, hi = _float(v[0]), _float(v[1])
    if lo > hi:
        raise ValueError(f"empty range [{lo}, {hi}]")
    return (lo, hi)


def _link(v, path: str) -> LinkSpec:
    if isinstance(v, dict):
        s = _Section(v, path)
        rate = s.take("rate", parse_rate)
        if rate is None:
            raise ConfigError(s.key("rate"), "missing")
        delay = s.take("prop_delay", to_us, 0)
        s.done()
        return LinkSpec(rate, delay)
    try:
        return LinkSpec(parse_rate(v))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _bool(v) -> bool:
    if not isinstance(v, bool):
        raise ValueError(f"expected true or false, got {v!r}")
    return v


def _source(v, path: str, index: int, synthetic: SyntheticParams) -> SourceSpec:
    s = _Section(v, path)
    kind = s.take("kind", _str_choice(("sensor", "camera")))
    if kind is None:
        raise ConfigError(s.key("kind"), "missing")
    is_sensor = kind == "sensor"
    interval = s.take("emit_interval", _pos_time, 500_000)
    payload = s.take("payload_bytes", lambda x: _int(x, 1), 49_000 if is_sensor else 495_000)
    start_at = s.take("start_at", to_us)
    name = s.take("name", str, f"{kind}{index}")
    rules_mode = s.take("rules_mode", _str_choice(RULE_MODES))
    frames = s.take("frames_per_message", lambda x: _int(x, 1), 1 if is_sensor else 10)
    data = s.take("data", _str_choice(("dataset", "synthetic")), "dataset")
    motes = s.take("motes", lambda x: tuple(_int(m, 0) for m in x))
    s.done()
    return SourceSpec(NodeKind(kind), interval, payload, start_at=start_at, name=name,
                      data=Synthetic(synthetic) if data == "synthetic" else None,
                      motes=motes, rules_mode=rules_mode, frames_per_message=frames)


def parse_config(doc: dict) -> Config:
    cfg = Config()
    root = _Section(doc, "")

    run = root.sub("run")
    cfg.duration = run.take("duration", _pos_time, cfg.duration)
    cfg.seed = run.take("seed", lambda x: _int(x, 0), cfg.seed)
    if cfg.seed >= 2**64:
        raise ConfigError("run.seed", "must fit in 64 bits")
    cfg.sample_interval = run.take("sample_interval", _pos_time, cfg.sample_interval)
    run.done()

    links = root.sub("links")
    default_delay = links.take("prop_delay", to_us, 0)
    new_links = {}
    for name in LINK_NAMES:
        spec = links.take(name, lambda x, n=name: _link(x, links.key(n)))
        if spec is None:
            spec = replace(cfg.links[name], prop_delay=default_delay)
        new_links[name] = spec
    links.done()
    cfg.links = new_links

    rules = root.sub("rules")
    cfg.rules = RuleSet(
        temp_threshold=rules.take("temp_threshold", _float, cfg.rules.temp_threshold),
        humidity_threshold=rules.take("humidity_threshold", _float, cfg.rules.humidity_threshold),
        light_threshold=rules.take("light_threshold", _float, cfg.rules.light_threshold),
        voltage_threshold=rules.take("voltage_threshold", _float, cfg.rules.voltage_threshold),
    )
    cfg.rules_mode = rules.take("mode", _str_choice(RULE_MODES), cfg.rules_mode)
    rules.done()

    edge = root.sub("edge")
    try:
        cfg.edge = EdgeParams(
            analytics_deadline=edge.take("analytics_deadline", _pos_time, cfg.edge.analytics_deadline),
            buffer_storage=edge.take("buffer_storage", lambda x: _int(x, 1), cfg.edge.buffer_storage),
            algorithm_time=edge.take("algorithm_time", _pos_time, cfg.edge.algorithm_time),
            overflow=edge.take("overflow", _str_choice(("forward", "drop")), cfg.edge.overflow),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("edge", str(exc)) from None
    edge.done()

    cloud = root.sub("cloud")
    cfg.cloud_algorithm_time = cloud.take("algorithm_time", _pos_time, cfg.cloud_algorithm_time)
    cloud.done()

    prio = root.sub("priority")
    class_rank = dict(cfg.priority.class_rank)
    cr = prio.sub("class_rank")
    for dc in DataClass:
        class_rank[dc] = cr.take(dc.value, _int, class_rank[dc])
    cr.done()
    sr = prio.sub("source_rank")
    source_rank = {name: sr.take(name, _int) for name in list(sr.table)}
    prio.done()
    cfg.priority = PriorityMaps(class_rank, source_rank)

    scaling = root.sub("scaling")
    sched = scaling.take("schedule", lambda x: x)
    if sched is not None:
        if not isinstance(sched, list):
            raise ConfigError("scaling.schedule", "expected an array")
        steps = []
        for i, step in enumerate(sched):
            st = _Section(step, f"scaling.schedule[{i}]")
            at = st.take("at", to_us)
            add = st.take("add", lambda x: _int(x, 1))
            if at is None or add is None:
                raise ConfigError(st.path, "needs both 'at' and 'add'")
            st.done()
            steps.append((at, add))
        cfg.scaling = sorted(steps)
    scaling.done()

    ds = root.sub("dataset")
    cfg.dataset = DatasetConfig(
        url=ds.take("url", str, DEFAULT_DATASET_URL),
        cache_dir=ds.take("cache_dir", str),
        mode=ds.take("mode", _str_choice(DATASET_MODES), "auto"),
        path=ds.take("path", str),
        max_records=ds.take("max_records", lambda x: _int(x, 1)),
        motes=ds.take("motes", lambda x: tuple(_int(m, 0) for m in x)),
        strict=ds.take("strict", _bool, False),
    )
    ds.done()

    syn = root.sub("synthetic")
    d = SyntheticParams()
    cfg.synthetic = SyntheticParams(
        temperature=syn.take("temperature", _range, d.temperature),
        humidity=syn.take("humidity", _range, d.humidity),
        light=syn.take("light", _range, d.light),
        voltage=syn.take("voltage", _range, d.voltage),
        moteid=syn.take("moteid", lambda x: _int(x, 0), d.moteid),
    )
    syn.done()

    if "sources" in root.table:
        raw = root.table.pop("sources")
        if not isinstance(raw, list):
            raise ConfigError("sources", "expected an array of tables ([[sources]])")
        if not raw:
            raise ConfigError("sources", "at least one source is required")
        cfg.sources = [_source(v, f"sources[{i}]", i, cfg.synthetic) for i, v in enumerate(raw)]
        names = [s.name for s in cfg.sources]
        if len(set(names)) != len(names):
            raise ConfigError("sources", "source names must be unique")

    root.done()
    validate(cfg)
    return cfg


def validate(cfg: Config) -> None:
    if cfg.duration <= 0:
        raise ConfigError("run.duration", "must be positive")
    if not cfg.sources:
        raise ConfigError("sources", "at least one source is required")
    for name, link in cfg.links.items():
        if link.rate <= 0:
            raise ConfigError(f"links.{name}", "rate must be positive")
    for at, _ in cfg.scaling:
        if at > cfg.duration:
            raise ConfigError("scaling.schedule", f"attach time {at / US_PER_SECOND} s is after the run ends")
    if cfg.scaling and not any(s.kind is NodeKind.SENSOR for s in cfg.sources):
        raise ConfigError("scaling.schedule", "scaling clones a sensor source but none is configured")


def loads(text: str) -> Config:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from None
    return parse_config(doc)


def load_config(path) -> Config:
    return loads(Path(path).read_text(encoding="utf-8"))


def _secs(us: SimTime):
    whole, frac = divmod(us, US_PER_SECOND)
    return whole if not frac else us / US_PER_SECOND


def to_dict(cfg: Config) -> dict:
    """TOML-ready dict; ``loads(dumps(cfg))`` reproduces ``cfg``."""
    doc: dict = {
        "run": {"duration": _secs(cfg.duration), "seed": cfg.seed, "sample_interval": _secs(cfg.sample_interval)},
        "links": {n: {"rate": l.rate, "prop_delay": _secs(l.prop_delay)} for n, l in cfg.links.items()},
        "sources": [],
        "rules": {
            "temp_threshold": cfg.rules.temp_threshold,
            "humidity_threshold": cfg.rules.humidity_threshold,
            "light_threshold": cfg.rules.light_threshold,
            "voltage_threshold": cfg.rules.voltage_threshold,
            "mode": cfg.rules_mode,
        },
        "edge": {
            "analytics_deadline": _secs(cfg.edge.analytics_deadline),
            "buffer_storage": cfg.edge.buffer_storage,
            "algorithm_time": _secs(cfg.edge.algorithm_time),
            "overflow": cfg.edge.overflow,
        },
        "cloud": {"algorithm_time": _secs(cfg.cloud_algorithm_time)},
        "priority": {
            "class_rank": {dc.value: r for dc, r in cfg.priority.class_rank.items()},
            "source_rank": dict(cfg.priority.source_rank),
        },
        "scaling": {"schedule": [{"at": _secs(at), "add": n} for at, n in cfg.scaling]},
        "synthetic": {
            "temperature": list(cfg.synthetic.temperature),
            "humidity": list(cfg.synthetic.humidity),
            "light": list(cfg.synthetic.light),
            "voltage": list(cfg.synthetic.voltage),
            "moteid": cfg.synthetic.moteid,
        },
    }
    for s in cfg.sources:
        entry = {"kind": s.kind.value, "name": s.name, "emit_interval": _secs(s.emit_interval),
                 "payload_bytes": s.payload_bytes, "frames_per_message": s.frames_per_message}
        if s.start_at is not None:
            entry["start_at"] = _secs(s.start_at)
        if s.rules_mode is not None:
            entry["rules_mode"] = s.rules_mode
        entry["data"] = "synthetic" if isinstance(s.data, Synthetic) else "dataset"
        if s.motes:
            entry["motes"] = list(s.motes)
        doc["sources"].append(entry)
    ds = {"url": cfg.dataset.url, "mode": cfg.dataset.mode, "strict": cfg.dataset.strict}
    for key in ("cache_dir", "path", "max_records"):
        val = getattr(cfg.dataset, key)
        if val is not None:
            ds[key] = val
    if cfg.dataset.motes:
        ds["motes"] = list(cfg.dataset.motes)
    doc["dataset"] = ds
    return doc


def dumps(cfg: Config) -> str:
    return tomli_w.dumps(to_dict(cfg))
