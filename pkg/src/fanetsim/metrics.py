"""Run counters, derived metrics, and mean/std aggregation over repeated runs."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import DomainError, UndefinedMetricError

METRICS = (
    "throughput_bps",
    "received_packet_ratio",
    "mean_location_error_m",
    "mean_cache_age_s",
    "data_frames_sent",
    "data_frames_received",
)

CSV_COLUMNS = ("parameter", "value", "metric", "mean", "std", "runs", "seed_base")


@dataclass
class ChannelCounters:
    sent: int = 0
    received: int = 0
    corrupted: int = 0
    collided: int = 0
    overheard: int = 0
    malformed: int = 0

    @property
    def resolved(self):
        return self.received + self.corrupted + self.collided


@dataclass(frozen=True)
class Sample:
    time: float
    data_sent: int
    data_received: int
    payload_bits_delivered: int
    location_error_m: float
    cache_age_s: float


@dataclass
class RunReport:
    data: ChannelCounters = field(default_factory=ChannelCounters)
    control: ChannelCounters = field(default_factory=ChannelCounters)
    payload_bits_delivered: int = 0
    sim_time: float = 0.0
    forwards: int = 0
    retransmissions: int = 0
    samples: list = field(default_factory=list)
    # set by the engine; exact time average, preferred over the sample mean
    time_avg_cache_age_s: Optional[float] = None

    @property
    def frames_sent(self):
        return {"data": self.data.sent, "control": self.control.sent}

    @property
    def throughput_bps(self) -> float:
        return throughput(self) if self.sim_time > 0 else 0.0

    @property
    def received_packet_ratio(self) -> float:
        return received_packet_ratio(self)

    @property
    def mean_location_error_m(self) -> float:
        if not self.samples:
            return 0.0
        return math.fsum(s.location_error_m for s in self.samples) / len(self.samples)

    @property
    def mean_cache_age_s(self) -> float:
        if self.time_avg_cache_age_s is not None:
            return self.time_avg_cache_age_s
        if not self.samples:
            return 0.0
        return math.fsum(s.cache_age_s for s in self.samples) / len(self.samples)

    def metric(self, name) -> float:
        if name == "data_frames_sent":
            return float(self.data.sent)
        if name == "data_frames_received":
            return float(self.data.received)
        return float(getattr(self, name))

    def summary_dict(self) -> dict:
        return {m: self.metric(m) for m in METRICS}


def throughput(report) -> float:
    """Addressed, successfully delivered payload bits per simulated second."""
    if not report.sim_time > 0:
        raise UndefinedMetricError("throughput is undefined for zero simulated time")
    return report.payload_bits_delivered / report.sim_time


def received_packet_ratio(report) -> float:
    sent = report.data.sent
    if sent == 0:
        return 0.0
    return report.data.received / sent


def location_error(nodes, now, diagonal=None):
    """Mean cache position error over ordered pairs ``(i, j)``, ``i != j``.

    Entries never updated (counter 0) count as ``diagonal`` metres. Returns
    ``(error_m, age_s)``; the age term uses the entry origin timestamp.
    """
    n = len(nodes)
    if n < 2:
        raise DomainError("location error needs at least 2 nodes")
    cache_pos = np.stack([s.cache.pos for s in nodes])
    cache_cnt = np.stack([s.cache.counter for s in nodes])
    cache_t = np.stack([s.cache.updated_at for s in nodes])
    true_pos = np.stack([s.true_pos for s in nodes]).astype(float)
    diag = float("nan") if diagonal is None else float(diagonal)
    err, age = kernels.pair_errors(cache_pos, cache_cnt, cache_t, true_pos, float(now), diag)
    pairs = n * (n - 1)
    return err / pairs, age / pairs


@dataclass(frozen=True)
class Stat:
    mean: float
    std: float
    runs: int


@dataclass
class SweepSummary:
    parameter: str
    grid: list
    seed_base: int
    points: list = field(default_factory=list)

    def rows(self):
        for value, point in zip(self.grid, self.points):
            for metric in METRICS:
                st = point[metric]
                yield (self.parameter, value, metric, st.mean, st.std, st.runs, self.seed_base)

    def series(self, metric):
        return [p[metric] for p in self.points]


def aggregate(reports, metrics=METRICS) -> dict:
    """Sample mean and (n - 1) sample std per metric."""
    reports = list(reports)
    if not reports:
        raise DomainError("cannot aggregate an empty list of reports")
    out = {}
    for m in metrics:
        vals = [r.metric(m) for r in reports]
        mean = math.fsum(vals) / len(vals)
        std = statistics.stdev(vals) if len(vals) > 1 else 0.0
        out[m] = Stat(mean, std, len(vals))
    return out


def format_number(v) -> str:
    """Shortest round-trip decimal text."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def summary_csv(summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in summary.rows():
        w.writerow([format_number(x) if not isinstance(x, str) else x for x in row])
    return buf.getvalue()


def runs_csv(parameter, rows) -> str:
    """Per-run table: ``rows`` is an iterable of ``(value, seed, report)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("parameter", "value", "seed") + METRICS)
    for value, seed, report in rows:
        w.writerow(
            [parameter, format_number(value), str(seed)]
            + [format_number(report.metric(m)) for m in METRICS]
        )
    return buf.getvalue()
