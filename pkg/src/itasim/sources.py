"""Data production: Intel Lab dataset parsing/replay, synthetic readings and
timed sensor/camera emissions."""

from __future__ import annotations

import datetime as dt
import gzip
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, NamedTuple, Sequence

from .engine import Engine, SimTime
from .netmodel import DataClass, Message, Network, NodeId, NodeKind

N_FIELDS = 8
FIELD_NAMES = ("date", "time", "epoch", "moteid", "temperature", "humidity", "light", "voltage")

_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?$")


class ParseError(ValueError):
    def __init__(self, line_no: int, field: int, reason: str = ""):
        self.line_no = line_no
        self.field = field
        name = FIELD_NAMES[field - 1] if field <= N_FIELDS else "extra"
        super().__init__(f"line {line_no}: field {field} ({name}): {reason}")


class EmptyDataset(ValueError):
    pass


class DatasetExhausted(RuntimeError):
    pass


class BadParams(ValueError):
    pass


@dataclass(frozen=True)
class SensorReading:
    date: dt.date
    time: dt.time
    epoch: int
    moteid: int
    temperature: float
    humidity: float
    light: float
    voltage: float


def _parse_time(text: str) -> dt.time:
    m = _TIME_RE.match(text)
    if not m:
        raise ValueError(text)
    hh, mm, ss, frac = m.groups()
    micro = int((frac or "").ljust(6, "0"))
    return dt.time(int(hh), int(mm), int(ss), micro)


def parse_intel_line(line: str, line_no: int = 0) -> SensorReading:
    """Parse one whitespace-separated record:
    ``date time epoch moteid temperature humidity light voltage``.

    Raises ParseError naming the first missing or malformed field (1-based).
    """
    parts = line.split()
    if len(parts) < N_FIELDS:
        raise ParseError(line_no, len(parts) + 1, "missing")
    if len(parts) > N_FIELDS:
        raise ParseError(line_no, N_FIELDS + 1, "unexpected trailing field")
    try:
        date = dt.date.fromisoformat(parts[0])
    except ValueError:
        raise ParseError(line_no, 1, f"bad date {parts[0]!r}") from None
    try:
        time = _parse_time(parts[1])
    except ValueError:
        raise ParseError(line_no, 2, f"bad time {parts[1]!r}") from None
    ints = []
    for idx in (2, 3):
        try:
            value = int(parts[idx])
        except ValueError:
            raise ParseError(line_no, idx + 1, f"not an integer: {parts[idx]!r}") from None
        if value < 0:
            raise ParseError(line_no, idx + 1, "negative")
        ints.append(value)
    floats = []
    for idx in range(4, 8):
        try:
            value = float(parts[idx])
        except ValueError:
            raise ParseError(line_no, idx + 1, f"not a number: {parts[idx]!r}") from None
        if not math.isfinite(value):
            raise ParseError(line_no, idx + 1, "not finite")
        floats.append(value)
    return SensorReading(date, time, ints[0], ints[1], *floats)


def format_reading(r: SensorReading) -> str:
    """Inverse of parse_intel_line in canonical form (single spaces, ISO date,
    six-digit fractional seconds when non-zero, shortest float repr)."""
    return " ".join([
        r.date.isoformat(), r.time.isoformat(), str(r.epoch), str(r.moteid),
        repr(r.temperature), repr(r.humidity), repr(r.light), repr(r.voltage),
    ])


class Dataset(NamedTuple):
    readings: tuple
    rejects: int


def _open_text(path: Path):
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8", errors="replace")
    return open(path, "r", encoding="utf-8", errors="replace")


def load_dataset(path, max_records: int | None = None, motes: Sequence[int] | None = None) -> Dataset:
    """Read accepted records in file order.

    Blank lines are ignored; lines that fail to parse are counted in
    ``rejects``. Records from motes outside ``motes`` are skipped without
    being counted. Plain text and gzip are both accepted.
    """
    wanted = set(motes) if motes else None
    readings = []
    rejects = 0
    with _open_text(Path(path)) as fh:
        for line_no, line in enumerate(fh, 1):
            if max_records is not None and len(readings) >= max_records:
                break
            if not line.strip():
                continue
            try:
                reading = parse_intel_line(line, line_no)
            except ParseError:
                rejects += 1
                continue
            if wanted is None or reading.moteid in wanted:
                readings.append(reading)
    if not readings:
        raise EmptyDataset(f"{path}: no accepted records")
    return Dataset(tuple(readings), rejects)


@dataclass(frozen=True)
class SyntheticParams:
    """Uniform ranges (inclusive) for synthetic readings."""

    temperature: tuple = (20.0, 55.0)
    humidity: tuple = (25.0, 65.0)
    light: tuple = (0.0, 40.0)
    voltage: tuple = (2.0, 3.0)
    moteid: int = 1

    def validate(self) -> None:
        for name in ("temperature", "humidity", "light", "voltage"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise BadParams(f"{name}: range must be finite")
            if lo > hi:
                raise BadParams(f"{name}: empty range [{lo}, {hi}]")


_SYNTH_DATE = dt.date(2004, 2, 28)


def synth_reading(rng, params: SyntheticParams, epoch: int = 0, at: SimTime = 0) -> SensorReading:
    params.validate()
    t = dt.datetime.combine(_SYNTH_DATE, dt.time()) + dt.timedelta(microseconds=at)
    return SensorReading(
        date=t.date(),
        time=t.time(),
        epoch=epoch,
        moteid=params.moteid,
        temperature=rng.uniform(*params.temperature),
        humidity=rng.uniform(*params.humidity),
        light=rng.uniform(*params.light),
        voltage=rng.uniform(*params.voltage),
    )


@dataclass(frozen=True)
class DatasetReplay:
    path: str
    motes: tuple | None = None
    strict: bool = False


@dataclass(frozen=True)
class Synthetic:
    params: SyntheticParams = SyntheticParams()


@dataclass
class SourceSpec:
    kind: NodeKind
    emit_interval: SimTime
    payload_bytes: int
    start_at: SimTime | None = None  # None: one interval after attach time
    name: str = ""
    # None: follow the run's dataset settings (sensors only)
    data: DatasetReplay | Synthetic | None = None
    motes: tuple | None = None
    rules_mode: str | None = None
    frames_per_message: int = 1

    def __post_init__(self):
        if self.kind not in (NodeKind.SENSOR, NodeKind.CAMERA):
            raise ValueError(f"source kind must be sensor or camera, got {self.kind}")
        if self.emit_interval <= 0:
            raise ValueError("emit_interval must be positive")
        if self.payload_bytes <= 0:
            raise ValueError("payload_bytes must be positive")

    @property
    def data_class(self) -> DataClass:
        return DataClass.RAW_SENSOR if self.kind is NodeKind.SENSOR else DataClass.IMAGE_FRAME


def emission_count(start_at: SimTime, interval: SimTime, run_end: SimTime) -> int:
    if start_at > run_end:
        return 0
    return (run_end - start_at) // interval + 1


class ReadingFeed:
    """Endless supply of readings for one sensor source."""

    def __init__(self, readings: Sequence[SensorReading] | None = None, rng=None,
                 params: SyntheticParams | None = None, strict: bool = False):
        if readings is None and rng is None:
            raise ValueError("need either readings to replay or an rng for synthesis")
        if readings is not None and not readings:
            raise EmptyDataset("nothing to replay")
        self.readings = readings
        self.rng = rng
        self.params = params or SyntheticParams()
        self.strict = strict
        self.served = 0
        if readings is None:
            self.params.validate()

    def next(self, at: SimTime = 0) -> SensorReading:
        n = self.served
        self.served += 1
        if self.readings is None:
            return synth_reading(self.rng, self.params, epoch=n, at=at)
        if n >= len(self.readings):
            if self.strict:
                raise DatasetExhausted(f"dataset exhausted after {len(self.readings)} records")
        return self.readings[n % len(self.readings)]


class SourceNode:
    """Emits a message every ``emit_interval`` and sends one copy up each path."""

    def __init__(self, engine: Engine, network: Network, node: NodeId, spec: SourceSpec,
                 inn_link: int, edge_link: int, run_end: SimTime, next_id: Callable[[], int],
                 feed: ReadingFeed | None = None, attached_at: SimTime = 0):
        if spec.kind is NodeKind.SENSOR and feed is None:
            raise ValueError("sensor sources need a reading feed")
        self.engine = engine
        self.network = network
        self.node = node
        self.spec = spec
        self.inn_link = inn_link
        self.edge_link = edge_link
        self.run_end = run_end
        self.next_id = next_id
        self.feed = feed
        self.start_at = spec.start_at if spec.start_at is not None else attached_at + spec.emit_interval
        self.emitted = 0
        self.emitted_bytes = 0
        self.log: list[Message] = []
        engine.register(node, self.handle)

    def start(self) -> None:
        if self.start_at <= self.run_end:
            self.engine.schedule(max(self.start_at, self.engine.now), self.node, "emit")

    def handle(self, event) -> None:
        if event.kind != "emit":
            raise ValueError(f"{self.node}: unexpected event {event.kind!r}")
        now = self.engine.now
        body = self.feed.next(now) if self.feed is not None else None
        msg = Message(
            msg_id=self.next_id(),
            source=self.node,
            data_class=self.spec.data_class,
            size=self.spec.payload_bytes,
            created_at=now,
            body=body,
        )
        self.emitted += 1
        self.emitted_bytes += msg.size
        self.log.append(msg)
        self.network.transmit(self.inn_link, msg.copy(), now)
        self.network.transmit(self.edge_link, msg.copy(), now)
        nxt = now + self.spec.emit_interval
        if nxt <= self.run_end:
            self.engine.schedule(nxt, self.node, "emit")

    def readings(self) -> Iterator[SensorReading]:
        return (m.body for m in self.log)
