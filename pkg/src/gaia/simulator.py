"""Deterministic discrete-event simulation of a heterogeneous serverless cluster.

Each function has one active instance at a time. Requests queue FIFO at
the active instance, which serves up to ``concurrency`` of them at once.
A redeploy places a new instance; work already dispatched to the old
instance drains there, later arrivals go to the new one and the first
of them pays the cold start. Time is simulated milliseconds.
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from gaia.analyzer import AnalysisReport
from gaia.controller import ControllerConfig, DecisionRecord, Reevaluator
from gaia.modes import Backend, ExecutionMode
from gaia.telemetry import Sample, TelemetryConfig, TelemetryStore
from gaia.workload import BackendProfile, RequestTrace, WorkloadModel, jitter_draws

logger = logging.getLogger(__name__)

# same-instant ordering: completions, then controller ticks, then arrivals
_COMPLETION, _TICK, _ARRIVAL = 0, 1, 2


class NoEligibleNode(RuntimeError):
    pass


@dataclass(frozen=True)
class GpuSpec:
    model: str
    vram_gb: float


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    vcpus: int
    ram_gb: float
    gpu: Optional[GpuSpec] = None

    def __post_init__(self):
        if self.vcpus < 1:
            raise ValueError(f"{self.node_id}: vcpus must be >= 1")
        if self.ram_gb <= 0:
            raise ValueError(f"{self.node_id}: ram_gb must be positive")


def reference_cluster() -> list[NodeSpec]:
    """Three-node testbed: a small control node, a CPU worker and a GPU worker."""
    return [
        NodeSpec("control", 4, 8.0),
        NodeSpec("worker-1", 8, 32.0),
        NodeSpec("worker-2", 16, 64.0, GpuSpec("NVIDIA GeForce RTX 3090", 24.0)),
    ]


@dataclass
class Instance:
    function_id: str
    backend: Backend
    node_id: str
    revision: int
    profile: BackendProfile
    slot_free: list = field(default_factory=list)
    ready_at: Optional[float] = None
    retired: bool = False
    last_end: float = 0.0

    def __post_init__(self):
        if not self.slot_free:
            self.slot_free = [0.0] * self.profile.concurrency

    def live(self, now: float) -> bool:
        return not self.retired or self.last_end > now


@dataclass
class Deployment:
    function_id: str
    mode: ExecutionMode
    active_backend: Backend
    instances: list[Instance]
    revision: int = 1

    @property
    def active(self) -> Instance:
        return self.instances[-1]


class Cluster:
    """Nodes plus the instances placed on them."""

    def __init__(self, nodes: Sequence[NodeSpec]):
        ids = [n.node_id for n in nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        self.nodes = {n.node_id: n for n in nodes}
        self.instances: list[Instance] = []

    @property
    def gpu_count(self) -> int:
        return sum(1 for n in self.nodes.values() if n.gpu is not None)

    def remove_node(self, node_id: str) -> None:
        self.nodes.pop(node_id)

    def _reserved(self, node_id: str, now: float) -> tuple[float, float, bool]:
        cores = ram = 0.0
        gpu_busy = False
        for inst in self.instances:
            if inst.node_id == node_id and inst.live(now):
                cores += inst.profile.cpu_cores
                ram += inst.profile.ram_gb
                gpu_busy |= inst.backend is Backend.GPU
        return cores, ram, gpu_busy

    def choose_node(self, backend: Backend, profile: BackendProfile, now: float) -> NodeSpec:
        """Least-loaded node that fits; CPU work avoids GPU nodes on ties."""
        candidates = []
        for node in self.nodes.values():
            if backend is Backend.GPU and node.gpu is None:
                continue
            cores, ram, gpu_busy = self._reserved(node.node_id, now)
            if backend is Backend.GPU and gpu_busy:
                continue
            if cores + profile.cpu_cores > node.vcpus or ram + profile.ram_gb > node.ram_gb:
                continue
            load = cores / node.vcpus
            avoid_gpu = backend is Backend.CPU and node.gpu is not None
            candidates.append((load, avoid_gpu, -(node.vcpus - cores), node.node_id, node))
        if not candidates:
            raise NoEligibleNode(f"no node can host a {backend.short} instance")
        return min(candidates, key=lambda c: c[:4])[4]

    def place(self, function_id: str, backend: Backend, profile: BackendProfile, revision: int, now: float) -> Instance:
        node = self.choose_node(backend, profile, now)
        inst = Instance(function_id, backend, node.node_id, revision, profile)
        self.instances.append(inst)
        return inst


def _zero_profile() -> BackendProfile:
    return BackendProfile((0.0,), 0.0, cpu_cores=0.0, ram_gb=0.0)


def deploy(
    function_id: str,
    target: Union[AnalysisReport, ExecutionMode, str],
    cluster: Union[Cluster, Sequence[NodeSpec]],
    workload: Optional[WorkloadModel] = None,
    now: float = 0.0,
) -> Deployment:
    """Place one cold instance for a function on the least-loaded eligible node.

    ``gpu`` needs a GPU node (NoEligibleNode otherwise); ``gpu_preferred``
    falls back to the CPU backend when no GPU node can take it.
    """
    if not isinstance(cluster, Cluster):
        cluster = Cluster(cluster)
    if isinstance(target, AnalysisReport):
        mode = target.mode
    else:
        mode = ExecutionMode(target)
    backend = mode.initial_backend

    def profile(b: Backend) -> BackendProfile:
        return workload.profile(b) if workload is not None else _zero_profile()

    try:
        inst = cluster.place(function_id, backend, profile(backend), 1, now)
    except NoEligibleNode:
        if mode is not ExecutionMode.GPU_PREFERRED:
            raise
        logger.warning("%s: no GPU capacity, starting gpu_preferred function on cpu", function_id)
        backend = Backend.CPU
        mode = ExecutionMode.CPU_PREFERRED
        inst = cluster.place(function_id, backend, profile(backend), 1, now)
    return Deployment(function_id, mode, backend, [inst], revision=1)


def redeploy(
    deployment: Deployment,
    target_backend: Backend,
    cluster: Cluster,
    now: float,
    workload: Optional[WorkloadModel] = None,
) -> Deployment:
    """Roll out a new revision on ``target_backend``.

    The old instance is retired but keeps whatever it already accepted.
    Raises NoEligibleNode and leaves the deployment untouched if no node fits.
    """
    if target_backend is deployment.active_backend:
        raise ValueError(f"{deployment.function_id} already runs on {target_backend.short}")
    prof = workload.profile(target_backend) if workload is not None else _zero_profile()
    old = deployment.active
    # the old instance's reservation still counts while it drains
    inst = cluster.place(deployment.function_id, target_backend, prof, deployment.revision + 1, now)
    old.retired = True
    deployment.instances.append(inst)
    deployment.revision += 1
    deployment.active_backend = target_backend
    if not deployment.mode.pinned:
        deployment.mode = (
            ExecutionMode.GPU_PREFERRED if target_backend is Backend.GPU else ExecutionMode.CPU_PREFERRED
        )
    return deployment


@dataclass(frozen=True)
class RequestRecord:
    index: int
    function_id: str
    param: float
    arrival: float
    start: float
    end: float
    service_ms: float
    backend: Backend
    revision: int
    node_id: str
    cold_start: bool

    @property
    def latency(self) -> float:
        return self.end - self.arrival


@dataclass(frozen=True)
class UsageInterval:
    """An instance busy (serving or cold-starting) over ``[start, end)``."""

    function_id: str
    backend: Backend
    revision: int
    node_id: str
    start: float
    end: float
    cpu_cores: float
    ram_gb: float
    gpu_util_pct: float

    @property
    def seconds(self) -> float:
        return (self.end - self.start) / 1000.0

    @property
    def gpu_active(self) -> bool:
        return self.backend is Backend.GPU


SERIES = ("cpu", "ram", "gpu")


@dataclass
class ScenarioResult:
    label: str
    seed: Optional[int]
    requests: list[RequestRecord]
    usage: list[UsageInterval]
    utilization: dict
    decisions: list[DecisionRecord]
    events: list[DecisionRecord]
    initial_modes: dict
    final_modes: dict
    counts: list = field(default_factory=list)
    cost: object = None

    @property
    def latencies(self) -> list[float]:
        return [r.latency for r in self.requests]

    def switch_verdicts(self, function_id: Optional[str] = None, applied_only: bool = True) -> list[str]:
        return [
            e.action.verdict.value
            for e in self.events
            if (function_id is None or e.function_id == function_id)
            and (not applied_only or e.outcome == "applied")
        ]

    def first_switch_at(self, function_id: Optional[str] = None) -> Optional[float]:
        for e in self.events:
            if e.outcome == "applied" and (function_id is None or e.function_id == function_id):
                return e.timestamp
        return None


def _busy_intervals(records: list[RequestRecord], cold_spans: list[tuple[float, float]]) -> list[tuple[float, float]]:
    spans = sorted([(r.start, r.end) for r in records] + cold_spans)
    merged: list[list[float]] = []
    for s, e in spans:
        if e <= s:
            continue
        if merged and s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [(s, e) for s, e in merged]


def utilization_series(usage: Sequence[UsageInterval], gpu_count: int, horizon_ms: Optional[float] = None) -> dict:
    """Per-second averages of cores, GB and GPU % over the run.

    Returns ``{series: {"total" | backend.value: [values...]}}``. GPU % is
    averaged over the cluster's GPUs.
    """
    end = max([u.end for u in usage] + [horizon_ms or 0.0])
    n = math.ceil(end / 1000.0) if end > 0 else 0
    out = {s: {k: [0.0] * n for k in ("total", Backend.CPU.value, Backend.GPU.value)} for s in SERIES}
    for u in usage:
        first = int(u.start // 1000)
        last = min(n - 1, int(math.ceil(u.end / 1000.0)) - 1)
        for k in range(first, last + 1):
            overlap = min(u.end, (k + 1) * 1000.0) - max(u.start, k * 1000.0)
            if overlap <= 0:
                continue
            frac = overlap / 1000.0
            values = {
                "cpu": u.cpu_cores * frac,
                "ram": u.ram_gb * frac,
                "gpu": (u.gpu_util_pct / gpu_count * frac) if gpu_count else 0.0,
            }
            for s, v in values.items():
                out[s]["total"][k] += v
                out[s][u.backend.value][k] += v
    return out


@dataclass
class _Pending:
    index: int
    instance: Instance
    start: float
    end: float


class Simulation:
    """One scenario run: a trace against deployments under one controller."""

    def __init__(
        self,
        cluster: Cluster,
        workloads: dict[str, WorkloadModel],
        controller_cfg: Optional[ControllerConfig] = None,
        telemetry: Optional[TelemetryStore] = None,
        seed: Optional[int] = 0,
        label: str = "AUTO",
        record_counts: bool = False,
    ):
        self.cluster = cluster
        self.workloads = workloads
        self.cfg = controller_cfg or ControllerConfig()
        self.telemetry = telemetry or TelemetryStore(TelemetryConfig())
        self.seed = seed
        self.label = label
        self.record_counts = record_counts
        self.deployments: dict[str, Deployment] = {}
        self.reevaluator = Reevaluator(self.cfg, self.telemetry, self._redeploy)
        self._cold_spans: dict[int, tuple[float, float]] = {}

    def add_deployment(self, deployment: Deployment) -> None:
        fid = deployment.function_id
        if fid not in self.workloads:
            raise KeyError(f"no workload model for {fid}")
        self.deployments[fid] = deployment
        self.reevaluator.register(fid, deployment.mode)

    def deploy(self, function_id: str, target, now: float = 0.0) -> Deployment:
        dep = deploy(function_id, target, self.cluster, self.workloads[function_id], now)
        self.add_deployment(dep)
        return dep

    def _redeploy(self, function_id: str, target: Backend, now: float) -> None:
        redeploy(self.deployments[function_id], target, self.cluster, now, self.workloads[function_id])

    def _dispatch(self, index: int, req, draws) -> tuple[RequestRecord, Instance]:
        dep = self.deployments[req.function_id]
        inst = dep.active
        wl = self.workloads[req.function_id]
        b = inst.backend
        col = 0 if b is Backend.CPU else 1
        service = wl.service_time(b, req.param, draws[index, col], draws[index, col + 2])
        cold = inst.ready_at is None
        slot = min(range(len(inst.slot_free)), key=lambda i: (inst.slot_free[i], i))
        if cold:
            inst.ready_at = req.arrival_ms + inst.profile.cold_start_ms
            self._cold_spans[id(inst)] = (req.arrival_ms, inst.ready_at)
            start = req.arrival_ms
            end = inst.ready_at + service
        else:
            start = max(req.arrival_ms, inst.slot_free[slot], inst.ready_at)
            end = start + service
        inst.slot_free[slot] = end
        inst.last_end = max(inst.last_end, end)
        rec = RequestRecord(
            index, req.function_id, req.param, req.arrival_ms, start, end, service,
            b, inst.revision, inst.node_id, cold,
        )
        return rec, inst

    def run(self, trace: RequestTrace) -> ScenarioResult:
        missing = set(trace.function_ids()) - set(self.deployments)
        if missing:
            raise KeyError(f"trace references undeployed functions: {sorted(missing)}")
        initial_modes = {fid: d.mode.value for fid, d in self.deployments.items()}
        requests = trace.requests
        draws = jitter_draws(len(requests), self.seed)
        heap: list = []
        seq = 0
        for i, req in enumerate(requests):
            heapq.heappush(heap, (req.arrival_ms, _ARRIVAL, seq, i))
            seq += 1
        period = self.cfg.reevaluation_period_ms
        if requests:
            heapq.heappush(heap, (period, _TICK, seq, None))
            seq += 1

        records: dict[int, RequestRecord] = {}
        outstanding: dict[int, _Pending] = {}
        arrived = completed = 0
        counts = []
        instances_used: dict[int, Instance] = {}

        while heap:
            now, kind, _, payload = heapq.heappop(heap)
            if kind == _ARRIVAL:
                rec, inst = self._dispatch(payload, requests[payload], draws)
                records[payload] = rec
                instances_used[id(inst)] = inst
                outstanding[payload] = _Pending(payload, inst, rec.start, rec.end)
                arrived += 1
                heapq.heappush(heap, (rec.end, _COMPLETION, seq, payload))
                seq += 1
            elif kind == _COMPLETION:
                rec = records[payload]
                del outstanding[payload]
                completed += 1
                self.telemetry.record(Sample(rec.function_id, now, rec.latency, rec.backend, rec.cold_start))
            else:
                self.reevaluator.reevaluate_all(now)
                more_arrivals = any(k == _ARRIVAL for _, k, _, _ in heap)
                if more_arrivals or outstanding:
                    heapq.heappush(heap, (now + period, _TICK, seq, None))
                    seq += 1
            if self.record_counts:
                in_service = sum(1 for p in outstanding.values() if p.start <= now)
                counts.append((now, arrived, completed, in_service, len(outstanding) - in_service))

        ordered = [records[i] for i in range(len(requests))]
        usage = []
        for inst in instances_used.values():
            mine = [r for r in ordered if r.function_id == inst.function_id and r.revision == inst.revision]
            cold = [self._cold_spans[id(inst)]] if id(inst) in self._cold_spans else []
            for s, e in _busy_intervals(mine, cold):
                p = inst.profile
                usage.append(UsageInterval(
                    inst.function_id, inst.backend, inst.revision, inst.node_id, s, e,
                    p.cpu_cores, p.ram_gb, p.gpu_util_pct if inst.backend is Backend.GPU else 0.0,
                ))
        usage.sort(key=lambda u: (u.start, u.function_id, u.revision))
        log = self.reevaluator.log
        return ScenarioResult(
            label=self.label,
            seed=self.seed,
            requests=ordered,
            usage=usage,
            utilization=utilization_series(usage, self.cluster.gpu_count),
            decisions=list(log),
            events=[r for r in log if r.outcome in ("applied", "failed")],
            initial_modes=initial_modes,
            final_modes={fid: d.mode.value for fid, d in self.deployments.items()},
            counts=counts,
        )


def run_trace(
    trace: RequestTrace,
    deployments: Sequence[Deployment],
    workloads: dict[str, WorkloadModel],
    cluster: Cluster,
    controller_cfg: Optional[ControllerConfig] = None,
    telemetry: Optional[TelemetryStore] = None,
    seed: Optional[int] = 0,
    prices=None,
    label: str = "AUTO",
    record_counts: bool = False,
) -> ScenarioResult:
    """Run a trace end to end; attaches a CostReport when ``prices`` is given."""
    sim = Simulation(cluster, workloads, controller_cfg, telemetry, seed, label, record_counts)
    for dep in deployments:
        sim.add_deployment(dep)
    result = sim.run(trace)
    if prices is not None:
        from gaia.cost import cost_of

        result.cost = cost_of(result, prices)
    return result
