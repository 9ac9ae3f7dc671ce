"""Cumulative time series, run summaries and CSV output.

Every value written to disk is exact: byte, bit and message counts are
integers and seconds are fixed-point decimals, so a summary recomputed from
the CSV files matches ``summary.csv`` character for character.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

from .engine import US_PER_SECOND, SimTime, fmt_seconds

SERIES_HEADER = ("t_seconds", "value")
SUMMARY_HEADER = ("metric", "edge", "inn", "reduction_pct")

# (summary metric, series prefix)
_SUMMARY_ROWS = (
    ("stored_bytes", "cloud_bytes"),
    ("compute_seconds", "compute_seconds"),
    ("messages_to_cloud", "msgs_processed"),
    ("bandwidth_bits", "bw_consumed"),
)
_AVAILABLE = {"edge": "bw_available_ec", "inn": "bw_available_ic"}


class UnknownSeries(KeyError):
    pass


def fmt_exact(x) -> str:
    """Exact decimal rendering of an int or a Fraction with a 2^a*5^b denominator."""
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    d = Decimal(x.numerator) / Decimal(x.denominator)
    if Fraction(d) != x:
        raise ValueError(f"{x} has no finite decimal expansion")
    text = format(d.normalize(), "f")
    return text


def parse_exact(text: str) -> Fraction:
    return Fraction(Decimal(text))


def fmt_pct(x: float | None) -> str:
    return "" if x is None else format(x, ".6g")


@dataclass
class MetricSeries:
    """Cumulative counter sampled every ``interval`` microseconds.

    The value at sample time ``k*interval`` is the sum of all deltas recorded
    at ``t <= k*interval``. ``scale`` divides stored integers for display
    (seconds are stored as microseconds).
    """

    name: str
    unit: str
    interval: SimTime
    scale: int = 1
    _buckets: dict = field(default_factory=dict, repr=False)
    total: int = 0

    def record(self, t: SimTime, delta: int) -> None:
        if t < 0:
            raise ValueError(f"{self.name}: cannot record at negative time {t}")
        if delta < 0:
            raise ValueError(f"{self.name}: cumulative series only accept non-negative deltas")
        k = -(-t // self.interval)
        self._buckets[k] = self._buckets.get(k, 0) + delta
        self.total += delta

    def n_samples(self, end: SimTime) -> int:
        return -(-end // self.interval) + 1

    def points(self, end: SimTime) -> list[tuple[Fraction, Fraction]]:
        out = []
        acc = 0
        for k in range(self.n_samples(end)):
            acc += self._buckets.get(k, 0)
            out.append((Fraction(k * self.interval, US_PER_SECOND), Fraction(acc, self.scale)))
        return out

    def deltas(self, end: SimTime) -> list[tuple[Fraction, Fraction]]:
        """Per-sample increments (an instantaneous-rate view)."""
        return [(Fraction(k * self.interval, US_PER_SECOND), Fraction(self._buckets.get(k, 0), self.scale))
                for k in range(self.n_samples(end))]


@dataclass
class CapacitySeries:
    """Cumulative channel capacity ``rate * t`` of one link, in bits."""

    name: str
    rate: int
    interval: SimTime
    unit: str = "bits"

    def points(self, end: SimTime) -> list[tuple[Fraction, Fraction]]:
        n = -(-end // self.interval) + 1
        return [(Fraction(k * self.interval, US_PER_SECOND), bandwidth_available(self.rate, k * self.interval))
                for k in range(n)]


def bandwidth_available(rate: int, t: SimTime) -> Fraction:
    """Bits a link of ``rate`` bit/s can carry in ``t`` microseconds."""
    if t < 0:
        raise ValueError("time must be non-negative")
    return Fraction(rate * t, US_PER_SECOND)


class Recorder:
    def __init__(self, sample_interval: SimTime = US_PER_SECOND):
        if sample_interval <= 0:
            raise ValueError("sample_interval must be positive")
        self.interval = sample_interval
        self.series: dict[str, MetricSeries | CapacitySeries] = {}
        self.end: SimTime = 0
        self.last: SimTime = 0  # latest time anything was recorded

    def declare(self, name: str, unit: str, scale: int = 1) -> MetricSeries:
        s = MetricSeries(name, unit, self.interval, scale)
        self.series[name] = s
        return s

    def declare_capacity(self, name: str, rate: int) -> CapacitySeries:
        s = CapacitySeries(name, rate, self.interval)
        self.series[name] = s
        return s

    def record(self, name: str, t: SimTime, delta: int) -> None:
        try:
            s = self.series[name]
        except KeyError:
            raise UnknownSeries(name) from None
        if not isinstance(s, MetricSeries):
            raise TypeError(f"{name} is derived, not recorded")
        s.record(t, delta)
        self.last = max(self.last, t)

    def all_points(self) -> dict[str, list]:
        return {name: s.points(self.end) for name, s in self.series.items()}


def reduction_pct(edge, inn) -> float | None:
    """100 * (1 - edge/inn), or None when the baseline is zero."""
    if inn == 0:
        return None
    return float(100 * (1 - Fraction(edge) / Fraction(inn)))


def first_exceedance(consumed: list, available: list) -> Fraction | None:
    """First sample time where cumulative demand is above cumulative capacity."""
    for (t, used), (t2, cap) in zip(consumed, available):
        if t != t2:
            raise ValueError("series are not aligned")
        if used > cap:
            return t
    return None


@dataclass
class RunSummary:
    stored_bytes: dict
    compute_seconds: dict
    messages_to_cloud: dict
    bandwidth_bits: dict
    reductions: dict
    saturation_time: dict  # path -> first sample time (s) over capacity, or None

    @property
    def saturation_time_inn(self):
        return self.saturation_time["inn"]

    def rows(self) -> list[tuple[str, str, str, str]]:
        pct_of = {"stored_bytes": "storage_pct", "compute_seconds": "compute_pct",
                  "messages_to_cloud": "messages_pct", "bandwidth_bits": "bandwidth_pct"}
        rows = []
        for metric, _ in _SUMMARY_ROWS:
            vals = getattr(self, metric)
            rows.append((metric, fmt_exact(vals["edge"]), fmt_exact(vals["inn"]),
                         fmt_pct(self.reductions[pct_of[metric]])))
        sat = self.saturation_time
        rows.append(("saturation_time_s",
                     "" if sat["edge"] is None else fmt_exact(sat["edge"]),
                     "" if sat["inn"] is None else fmt_exact(sat["inn"]), ""))
        return rows


def summarize_points(points: dict[str, list]) -> RunSummary:
    """Build a RunSummary from sampled series (in memory or read back from CSV)."""
    finals = {}
    for metric, prefix in _SUMMARY_ROWS:
        finals[metric] = {p: points[f"{prefix}_{p}"][-1][1] for p in ("edge", "inn")}
    for metric in ("stored_bytes", "messages_to_cloud", "bandwidth_bits"):
        finals[metric] = {p: int(v) for p, v in finals[metric].items()}
    reductions = {
        "storage_pct": reduction_pct(finals["stored_bytes"]["edge"], finals["stored_bytes"]["inn"]),
        "compute_pct": reduction_pct(finals["compute_seconds"]["edge"], finals["compute_seconds"]["inn"]),
        "messages_pct": reduction_pct(finals["messages_to_cloud"]["edge"], finals["messages_to_cloud"]["inn"]),
        "bandwidth_pct": reduction_pct(finals["bandwidth_bits"]["edge"], finals["bandwidth_bits"]["inn"]),
    }
    saturation = {p: first_exceedance(points[f"bw_consumed_{p}"], points[_AVAILABLE[p]])
                  for p in ("edge", "inn")}
    return RunSummary(reductions=reductions, saturation_time=saturation, **finals)


def summarize(recorder: Recorder) -> RunSummary:
    return summarize_points(recorder.all_points())


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_csv(recorder: Recorder, out_dir, diagnostics: bool = False) -> list[Path]:
    """One ``<series>.csv`` per series plus ``summary.csv``. Returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    points = recorder.all_points()
    for name in sorted(points):
        path = out / f"{name}.csv"
        _write_rows(path, SERIES_HEADER, [(fmt_exact(t), fmt_exact(v)) for t, v in points[name]])
        written.append(path)
    if diagnostics:
        for name in sorted(recorder.series):
            s = recorder.series[name]
            if isinstance(s, MetricSeries):
                path = out / f"rate_{name}.csv"
                _write_rows(path, SERIES_HEADER, [(fmt_exact(t), fmt_exact(v)) for t, v in s.deltas(recorder.end)])
                written.append(path)
    path = out / "summary.csv"
    _write_rows(path, SUMMARY_HEADER, summarize_points(points).rows())
    written.append(path)
    return written


def read_series(path) -> list[tuple[Fraction, Fraction]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SERIES_HEADER:
        raise ValueError(f"{path}: expected header {','.join(SERIES_HEADER)}")
    return [(parse_exact(t), parse_exact(v)) for t, v in rows[1:]]


def read_summary(path) -> list[tuple[str, ...]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [tuple(r) for r in csv.reader(fh)]
    if not rows or rows[0] != SUMMARY_HEADER:
        raise ValueError(f"{path}: expected header {','.join(SUMMARY_HEADER)}")
    return rows[1:]


def recompute_summary(in_dir) -> RunSummary:
    """Summary recomputed from the series CSVs in ``in_dir`` alone."""
    d = Path(in_dir)
    points = {p.stem: read_series(p) for p in sorted(d.glob("*.csv"))
              if p.name != "summary.csv" and not p.name.startswith("rate_")}
    return summarize_points(points)


__all__ = [
    "MetricSeries", "CapacitySeries", "Recorder", "RunSummary", "UnknownSeries",
    "bandwidth_available", "reduction_pct", "first_exceedance", "summarize",
    "summarize_points", "write_csv", "read_series", "read_summary", "recompute_summary",
    "fmt_exact", "fmt_seconds",
]
