"""Per-function sliding-window request metrics and saved backend latencies."""
from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

from gaia.modes import Backend

AGGREGATES = ("mean", "p50", "p95")

DEFAULT_WINDOW_MS = 60_000.0
DEFAULT_AGGREGATE = "p50"
DEFAULT_MIN_SAMPLES_FOR_SAVE = 3

SAMPLE_CSV_COLUMNS = ("function_id", "timestamp", "latency_ms", "backend", "cold_start")


class UnknownFunction(KeyError):
    pass


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    function_id: str
    timestamp: float
    latency_ms: float
    backend: Backend
    cold_start: bool = False

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError(f"negative latency {self.latency_ms}")


@dataclass(frozen=True)
class TelemetryWindow:
    function_id: str
    window_ms: float
    at: float
    request_rate: float
    latency_stat: Optional[float]
    sample_count: int
    latency_sample_count: int
    aggregate: str
    backend: Optional[Backend] = None


@dataclass
class SavedLatencies:
    saved_cpu_latency: Optional[float] = None
    saved_gpu_latency: Optional[float] = None
    cpu_recorded_at: Optional[float] = None
    gpu_recorded_at: Optional[float] = None

    def get(self, backend: Backend) -> Optional[float]:
        return self.saved_cpu_latency if backend is Backend.CPU else self.saved_gpu_latency

    def recorded_at(self, backend: Backend) -> Optional[float]:
        return self.cpu_recorded_at if backend is Backend.CPU else self.gpu_recorded_at

    def set(self, backend: Backend, latency: float, at: float) -> None:
        if backend is Backend.CPU:
            self.saved_cpu_latency, self.cpu_recorded_at = latency, at
        else:
            self.saved_gpu_latency, self.gpu_recorded_at = latency, at


@dataclass(frozen=True)
class TelemetryConfig:
    window_ms: float = DEFAULT_WINDOW_MS
    aggregate: str = DEFAULT_AGGREGATE
    exclude_cold_from_latency: bool = True
    min_samples_for_save: int = DEFAULT_MIN_SAMPLES_FOR_SAVE

    def __post_init__(self):
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"aggregate must be one of {AGGREGATES}, got {self.aggregate!r}")
        if self.min_samples_for_save < 1:
            raise ValueError("min_samples_for_save must be >= 1")


def nearest_rank(values: list[float], pct: float) -> float:
    """Nearest-rank percentile of a non-empty list."""
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return ordered[rank - 1]


def aggregate(values: list[float], how: str) -> Optional[float]:
    if not values:
        return None
    if how == "mean":
        return math.fsum(values) / len(values)
    if how == "p50":
        return nearest_rank(values, 50)
    if how == "p95":
        return nearest_rank(values, 95)
    raise ValueError(f"unknown aggregate {how!r}")


@dataclass
class _Series:
    timestamps: list[float] = field(default_factory=list)
    samples: list[Sample] = field(default_factory=list)
    saved: SavedLatencies = field(default_factory=SavedLatencies)


class TelemetryStore:
    """Append-only sample log with windowed queries.

    Samples must arrive in non-decreasing timestamp order per function;
    queries may be made for any past instant.
    """

    def __init__(self, config: Optional[TelemetryConfig] = None):
        self.config = config or TelemetryConfig()
        self._series: dict[str, _Series] = {}

    def register(self, function_id: str) -> None:
        self._series.setdefault(function_id, _Series())

    def functions(self) -> list[str]:
        return sorted(self._series)

    def _get(self, function_id: str) -> _Series:
        try:
            return self._series[function_id]
        except KeyError:
            raise UnknownFunction(function_id) from None

    def record(self, sample: Sample) -> None:
        series = self._get(sample.function_id)
        if series.timestamps and sample.timestamp < series.timestamps[-1]:
            raise ValueError(
                f"sample for {sample.function_id} at {sample.timestamp} precedes "
                f"last recorded {series.timestamps[-1]}"
            )
        series.timestamps.append(sample.timestamp)
        series.samples.append(sample)

    def samples(self, function_id: str) -> list[Sample]:
        return list(self._get(function_id).samples)

    def _in_window(self, series: _Series, at: float) -> list[Sample]:
        lo = bisect_right(series.timestamps, at - self.config.window_ms)
        hi = bisect_right(series.timestamps, at)
        return series.samples[lo:hi]

    def window_stats(
        self, function_id: str, at: float, backend: Optional[Backend] = None
    ) -> TelemetryWindow:
        """Statistics over samples with timestamps in ``(at - window_ms, at]``.

        The request rate counts every sample. The latency aggregate skips
        cold starts (unless configured otherwise) and, when ``backend`` is
        given, samples served by the other backend.
        """
        window = self._in_window(self._get(function_id), at)
        latencies = [
            s.latency_ms
            for s in window
            if not (self.config.exclude_cold_from_latency and s.cold_start)
            and (backend is None or s.backend is backend)
        ]
        return TelemetryWindow(
            function_id=function_id,
            window_ms=self.config.window_ms,
            at=at,
            request_rate=len(window) / (self.config.window_ms / 1000.0),
            latency_stat=aggregate(latencies, self.config.aggregate),
            sample_count=len(window),
            latency_sample_count=len(latencies),
            aggregate=self.config.aggregate,
            backend=backend,
        )

    def saved(self, function_id: str) -> SavedLatencies:
        return self._get(function_id).saved

    def save_backend_latency(self, function_id: str, backend: Backend, at: float) -> SavedLatencies:
        series = self._get(function_id)
        warm = [s.latency_ms for s in self._in_window(series, at) if s.backend is backend and not s.cold_start]
        if len(warm) < self.config.min_samples_for_save:
            raise InsufficientSamples(
                f"{function_id}: {len(warm)} warm {backend.short} samples in window, "
                f"need {self.config.min_samples_for_save}"
            )
        stat = self.window_stats(function_id, at, backend).latency_stat
        if stat is None:
            # only reachable with exclude_cold_from_latency off and no samples at all
            raise InsufficientSamples(f"{function_id}: no latency in window")
        series.saved.set(backend, stat, at)
        return series.saved

    def count_between(self, function_id: str, start: float, end: float) -> int:
        """Number of samples with timestamps in ``(start, end]``."""
        ts = self._get(function_id).timestamps
        return bisect_right(ts, end) - bisect_right(ts, start)

    def export_csv(self, out: TextIO, function_ids: Optional[Iterable[str]] = None) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(SAMPLE_CSV_COLUMNS)
        for fid in function_ids or self.functions():
            for s in self._get(fid).samples:
                writer.writerow([fid, f"{s.timestamp:.3f}", f"{s.latency_ms:.3f}", s.backend.value, int(s.cold_start)])
