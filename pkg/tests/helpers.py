"""Builders shared by the test modules."""
from __future__ import annotations

from typing import Optional

from gaia.controller import ControllerConfig
from gaia.cost import PriceSheet
from gaia.simulator import Cluster, NodeSpec, Simulation, reference_cluster
from gaia.telemetry import TelemetryStore
from gaia.workload import BackendProfile, RequestTrace, WorkloadModel


def workload(
    cpu_ms: float = 100.0,
    gpu_ms: float = 20.0,
    *,
    cpu_cold: float = 500.0,
    gpu_cold: float = 4000.0,
    jitter: float = 0.0,
    cpu_slots: int = 1,
    gpu_slots: int = 1,
    cpu_cores: float = 1.0,
    gpu_util: float = 50.0,
) -> WorkloadModel:
    return WorkloadModel(
        "w",
        BackendProfile((cpu_ms,), cpu_cold, cpu_cores=cpu_cores, ram_gb=1.0, concurrency=cpu_slots),
        BackendProfile((gpu_ms,), gpu_cold, cpu_cores=1.0, ram_gb=1.0, gpu_util_pct=gpu_util, concurrency=gpu_slots),
        jitter_pct=jitter,
    )


def simulate(
    wl: WorkloadModel,
    trace: RequestTrace,
    mode: str,
    *,
    seed: int = 0,
    nodes: Optional[list[NodeSpec]] = None,
    cfg: Optional[ControllerConfig] = None,
    record_counts: bool = False,
    function_id: str = "f",
    warm: bool = False,
):
    cluster = Cluster(nodes if nodes is not None else reference_cluster())
    sim = Simulation(cluster, {function_id: wl}, cfg, TelemetryStore(), seed, mode.upper(), record_counts)
    dep = sim.deploy(function_id, mode)
    if warm:
        dep.active.ready_at = 0.0
    return sim.run(trace)


def unit_prices() -> PriceSheet:
    return PriceSheet(cpu_rate=0.001, ram_rate=0.0001, gpu_rate=0.01)
