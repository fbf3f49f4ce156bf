"""Per-backend service models and request trace generators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from gaia.modes import Backend

DEFAULT_JITTER_PCT = 5.0
DEFAULT_CPU_COLD_START_MS = 500.0
DEFAULT_GPU_COLD_START_MS = 4000.0

TRACE_KINDS = ("constant-rate", "explicit", "ramp")


@dataclass(frozen=True)
class BackendProfile:
    """How one function behaves on one backend.

    ``service_ms`` holds polynomial coefficients in the request parameter,
    lowest order first: ``[h, 0, 0, g]`` means ``h + g * n**3``.
    """

    service_ms: tuple[float, ...]
    cold_start_ms: float
    cpu_cores: float = 1.0
    ram_gb: float = 1.0
    gpu_util_pct: float = 0.0
    concurrency: int = 1
    spike_prob: float = 0.0
    spike_ms: float = 0.0

    def __post_init__(self):
        if not self.service_ms:
            raise ValueError("service_ms needs at least one coefficient")
        if self.cold_start_ms < 0:
            raise ValueError("cold_start_ms must be >= 0")
        if self.cpu_cores < 0 or self.ram_gb < 0:
            raise ValueError("resource usage must be >= 0")
        if not 0 <= self.gpu_util_pct <= 100:
            raise ValueError("gpu_util_pct must lie in [0, 100]")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if not 0 <= self.spike_prob <= 1 or self.spike_ms < 0:
            raise ValueError("spike_prob must lie in [0, 1] and spike_ms >= 0")

    def base_service(self, param: float) -> float:
        total = 0.0
        for k, c in enumerate(self.service_ms):
            if c:
                total += c * param**k
        return max(total, 0.0)


@dataclass(frozen=True)
class WorkloadModel:
    workload_id: str
    cpu: BackendProfile
    gpu: BackendProfile
    jitter_pct: float = DEFAULT_JITTER_PCT

    def __post_init__(self):
        if self.gpu.cold_start_ms < self.cpu.cold_start_ms:
            raise ValueError(f"{self.workload_id}: gpu cold start shorter than cpu cold start")
        if self.cpu.gpu_util_pct != 0:
            raise ValueError(f"{self.workload_id}: cpu backend cannot use the gpu")
        if not 0 <= self.jitter_pct < 100:
            raise ValueError("jitter_pct must lie in [0, 100)")

    def profile(self, backend: Backend) -> BackendProfile:
        return self.cpu if backend is Backend.CPU else self.gpu

    def service_time(self, backend: Backend, param: float, jitter: float = 0.0, spike_draw: float = 1.0) -> float:
        """Service time in ms.

        ``jitter`` in [-1, 1] scales the base time by ``1 + jitter * jitter_pct/100``;
        ``spike_draw`` in [0, 1) below the profile's spike probability
        replaces the base time with the spike time.
        """
        prof = self.profile(backend)
        base = prof.base_service(param)
        if spike_draw < prof.spike_prob:
            base = prof.spike_ms
        return base * (1.0 + jitter * self.jitter_pct / 100.0)


@dataclass(frozen=True, order=True)
class Request:
    arrival_ms: float
    function_id: str
    param: float = 0


@dataclass
class RequestTrace:
    requests: list[Request] = field(default_factory=list)

    def __post_init__(self):
        times = [r.arrival_ms for r in self.requests]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("trace arrivals must be sorted")

    def __len__(self) -> int:
        return len(self.requests)

    def __iter__(self):
        return iter(self.requests)

    def function_ids(self) -> list[str]:
        return sorted({r.function_id for r in self.requests})

    @classmethod
    def merge(cls, parts: Iterable[Sequence[Request]]) -> "RequestTrace":
        merged = sorted(
            (r for part in parts for r in part), key=lambda r: (r.arrival_ms, r.function_id)
        )
        return cls(merged)


def constant_rate(
    function_id: str, rate_per_s: float, duration_s: float, param: float = 0, start_ms: float = 0.0
) -> list[Request]:
    if rate_per_s <= 0 or duration_s < 0:
        raise ValueError("rate must be positive and duration non-negative")
    count = math.floor(duration_s * rate_per_s + 1e-9)
    step = 1000.0 / rate_per_s
    return [Request(start_ms + k * step, function_id, param) for k in range(count)]


def ramp(
    function_id: str,
    rate_per_s: float,
    duration_s: float,
    param_start: float,
    param_end: float,
    param_step: float = 1,
    start_ms: float = 0.0,
) -> list[Request]:
    """Constant arrival rate with the parameter swept linearly from start to end."""
    base = constant_rate(function_id, rate_per_s, duration_s, 0, start_ms)
    n = len(base)
    out = []
    for k, r in enumerate(base):
        frac = k / (n - 1) if n > 1 else 0.0
        value = param_start + frac * (param_end - param_start)
        if param_step:
            value = round(value / param_step) * param_step
        out.append(Request(r.arrival_ms, function_id, value))
    return out


def explicit(function_id: str, arrivals: Sequence[Sequence[float]]) -> list[Request]:
    """Arrivals given as ``[t_ms, param]`` pairs (or bare timestamps)."""
    out = []
    for item in arrivals:
        if isinstance(item, (int, float)):
            out.append(Request(float(item), function_id, 0))
        else:
            t, *rest = item
            out.append(Request(float(t), function_id, rest[0] if rest else 0))
    return sorted(out)


def generate(function_id: str, spec: dict) -> list[Request]:
    kind = spec.get("kind")
    if kind == "constant-rate":
        return constant_rate(
            function_id, spec["rate_per_s"], spec["duration_s"], spec.get("param", 0), spec.get("start_ms", 0.0)
        )
    if kind == "ramp":
        return ramp(
            function_id, spec["rate_per_s"], spec["duration_s"], spec["param_start"], spec["param_end"],
            spec.get("param_step", 1), spec.get("start_ms", 0.0),
        )
    if kind == "explicit":
        return explicit(function_id, spec["arrivals"])
    raise ValueError(f"unknown trace kind {kind!r}; expected one of {TRACE_KINDS}")


def stationary_trace(
    function_id: str, rate_per_s: float, duration_s: float, param: float = 0
) -> RequestTrace:
    return RequestTrace(constant_rate(function_id, rate_per_s, duration_s, param))


def jitter_draws(n: int, seed: Optional[int]):
    """Per-request random draws shared by every run with the same seed.

    Columns: cpu jitter, gpu jitter (both in [-1, 1)), cpu spike draw,
    gpu spike draw (both in [0, 1)).
    """
    rng = np.random.default_rng(seed)
    draws = rng.random((n, 4))
    draws[:, :2] = draws[:, :2] * 2.0 - 1.0
    return draws
