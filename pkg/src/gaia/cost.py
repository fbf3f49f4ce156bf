"""Pay-per-use cost of simulated runs and CPU/GPU/adaptive comparisons."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from gaia.modes import Backend
from gaia.simulator import SERIES, ScenarioResult, UsageInterval

COST_CSV_COLUMNS = ("function_id", "backend", "seconds", "cost")


class MissingSeries(ValueError):
    pass


class TraceMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PriceSheet:
    """Rates per vCPU-second, GB-second and GPU-second.

    ``granularity_ms`` rounds every busy interval up to a multiple of the
    given length; None bills exact durations.
    """

    cpu_rate: float
    ram_rate: float
    gpu_rate: float
    currency: str = "USD"
    granularity_ms: Optional[float] = None

    def __post_init__(self):
        for name in ("cpu_rate", "ram_rate", "gpu_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.granularity_ms is not None and self.granularity_ms <= 0:
            raise ValueError("granularity_ms must be positive")

    @property
    def has_gpu_premium(self) -> bool:
        return self.gpu_rate > self.cpu_rate

    def scaled(self, factor: float) -> "PriceSheet":
        return PriceSheet(
            self.cpu_rate * factor, self.ram_rate * factor, self.gpu_rate * factor,
            self.currency, self.granularity_ms,
        )

    def to_dict(self) -> dict:
        return {
            "cpu_rate": self.cpu_rate,
            "ram_rate": self.ram_rate,
            "gpu_rate": self.gpu_rate,
            "currency": self.currency,
            "granularity_ms": self.granularity_ms,
        }


@dataclass(frozen=True)
class CostLine:
    function_id: str
    backend: Backend
    seconds: float
    cost: float


@dataclass
class CostReport:
    lines: list[CostLine]
    timeline: list[float]
    request_count: int
    currency: str = "USD"
    per_function: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(line.cost for line in self.lines)

    def backend_total(self, backend: Backend) -> float:
        return math.fsum(line.cost for line in self.lines if line.backend is backend)

    def write_csv(self, out: TextIO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(COST_CSV_COLUMNS)
        for line in self.lines:
            writer.writerow([line.function_id, line.backend.value, f"{line.seconds:.6f}", f"{line.cost:.9f}"])


def _billed_ms(u: UsageInterval, start: Optional[float], end: Optional[float], granularity: Optional[float]):
    s = u.start if start is None else max(u.start, start)
    e = u.end if end is None else min(u.end, end)
    if e <= s:
        return 0.0, s, e
    ms = e - s
    if granularity:
        ms = math.ceil(ms / granularity - 1e-12) * granularity
    return ms, s, e


def _rate_per_second(u: UsageInterval, prices: PriceSheet) -> float:
    return u.cpu_cores * prices.cpu_rate + u.ram_gb * prices.ram_rate + (prices.gpu_rate if u.gpu_active else 0.0)


def cost_of(
    result: ScenarioResult,
    prices: PriceSheet,
    start: Optional[float] = None,
    end: Optional[float] = None,
) -> CostReport:
    """Bill every busy interval, optionally clipped to ``[start, end)`` ms.

    Idle time costs nothing; cold starts are billed on the backend that
    is starting.
    """
    if result.utilization is None or any(s not in result.utilization for s in SERIES):
        raise MissingSeries(f"result lacks one of the utilization series {SERIES}")
    seconds: dict[tuple[str, Backend], float] = {}
    costs: dict[tuple[str, Backend], float] = {}
    horizon = max([u.end for u in result.usage], default=0.0)
    n = math.ceil(horizon / 1000.0) if horizon > 0 else 0
    per_second = [0.0] * n
    for u in result.usage:
        ms, s, e = _billed_ms(u, start, end, prices.granularity_ms)
        if ms <= 0:
            continue
        rate = _rate_per_second(u, prices)
        key = (u.function_id, u.backend)
        seconds[key] = seconds.get(key, 0.0) + ms / 1000.0
        costs[key] = costs.get(key, 0.0) + rate * ms / 1000.0
        # spread over the timeline in proportion to the covered span
        scale = ms / (e - s)
        for k in range(int(s // 1000), min(n, math.ceil(e / 1000.0))):
            overlap = min(e, (k + 1) * 1000.0) - max(s, k * 1000.0)
            if overlap > 0:
                per_second[k] += rate * overlap * scale / 1000.0
    lines = [CostLine(fid, b, seconds[(fid, b)], costs[(fid, b)]) for fid, b in sorted(costs, key=lambda k: (k[0], k[1].value))]
    per_function: dict[str, float] = {}
    for line in lines:
        per_function[line.function_id] = per_function.get(line.function_id, 0.0) + line.cost
    timeline = list(np.cumsum(per_second)) if per_second else []
    return CostReport(lines, [float(x) for x in timeline], len(result.requests), prices.currency, per_function)


def resource_seconds(result: ScenarioResult) -> tuple[float, float, float]:
    """Total (vCPU-seconds, GB-seconds, GPU-seconds) over all busy intervals."""
    core = math.fsum(u.cpu_cores * u.seconds for u in result.usage)
    ram = math.fsum(u.ram_gb * u.seconds for u in result.usage)
    gpu = math.fsum(u.seconds for u in result.usage if u.gpu_active)
    return core, ram, gpu


def _mean_resource_seconds(runs) -> tuple[float, float, float]:
    if isinstance(runs, ScenarioResult):
        return resource_seconds(runs)
    per_run = [resource_seconds(r) for r in runs]
    if not per_run:
        raise ValueError("need at least one run to calibrate against")
    return tuple(math.fsum(col) / len(per_run) for col in zip(*per_run))


def calibrate_prices(
    cpu_run: Union[ScenarioResult, Sequence[ScenarioResult]],
    gpu_run: Union[ScenarioResult, Sequence[ScenarioResult]],
    cpu_total: float,
    gpu_total: float,
    ram_rate: float,
    currency: str = "USD",
) -> PriceSheet:
    """Solve for the vCPU and GPU rates that reproduce two observed totals.

    The RAM rate is taken as given; with it fixed, each total is linear in
    the two remaining rates. Given several runs per mode, their mean
    resource-seconds are matched.
    """
    c_core, c_ram, c_gpu = _mean_resource_seconds(cpu_run)
    g_core, g_ram, g_gpu = _mean_resource_seconds(gpu_run)
    a = np.array([[c_core, c_gpu], [g_core, g_gpu]])
    b = np.array([cpu_total - c_ram * ram_rate, gpu_total - g_ram * ram_rate])
    cpu_rate, gpu_rate = np.linalg.solve(a, b)
    return PriceSheet(float(cpu_rate), ram_rate, float(gpu_rate), currency)


@dataclass(frozen=True)
class ComparisonSummary:
    totals: dict
    savings_pct: dict
    cheapest: str


def _savings(reference: float, other: float) -> float:
    if reference == 0:
        return 0.0
    return (reference - other) / reference * 100.0


def compare(cpu: CostReport, gpu: CostReport, gaia: CostReport) -> ComparisonSummary:
    counts = {cpu.request_count, gpu.request_count, gaia.request_count}
    if len(counts) != 1:
        raise TraceMismatch(
            f"request counts differ: cpu={cpu.request_count} gpu={gpu.request_count} gaia={gaia.request_count}"
        )
    totals = {"cpu": cpu.total, "gpu": gpu.total, "gaia": gaia.total}
    savings = {
        "gaia_vs_cpu": _savings(totals["cpu"], totals["gaia"]),
        "gaia_vs_gpu": _savings(totals["gpu"], totals["gaia"]),
        "gpu_vs_cpu": _savings(totals["cpu"], totals["gpu"]),
    }
    # ties resolve in the listed order
    cheapest = min(("cpu", "gpu", "gaia"), key=lambda k: totals[k])
    return ComparisonSummary(totals, savings, cheapest)


def compare_totals(cpu_total: float, gpu_total: float, gaia_total: float) -> ComparisonSummary:
    """compare() for totals already on disk, where request counts are checked by the caller."""
    def report(total: float) -> CostReport:
        return CostReport([CostLine("*", Backend.CPU, 0.0, total)], [], 0)

    return compare(report(cpu_total), report(gpu_total), report(gaia_total))
