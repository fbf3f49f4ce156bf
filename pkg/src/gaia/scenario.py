"""Scenario files: loading and validation, repeated runs, and CSV outputs.

A scenario is one YAML file naming the cluster, workload models,
functions with their sources and traces, and the controller, telemetry,
analyzer and price settings. Every optional value has a default; the
resolved form with all defaults filled in is written next to the run
outputs as ``manifest.yaml`` and can be loaded back as a scenario.
"""
from __future__ import annotations

import csv
import io
import math
import shutil
import statistics
import tempfile
from collections import Counter
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import jsonschema
import yaml

from gaia.analyzer import AnalysisReport, AnalyzerConfig, analyze
from gaia.controller import DECISION_CSV_COLUMNS, ControllerConfig, write_decision_log
from gaia.cost import COST_CSV_COLUMNS, PriceSheet, cost_of
from gaia.modes import Backend, ExecutionMode
from gaia.simulator import SERIES, Cluster, GpuSpec, NodeSpec, ScenarioResult, Simulation
from gaia.telemetry import AGGREGATES, TelemetryConfig, TelemetryStore
from gaia.workload import (
    DEFAULT_CPU_COLD_START_MS,
    DEFAULT_GPU_COLD_START_MS,
    DEFAULT_JITTER_PCT,
    TRACE_KINDS,
    BackendProfile,
    RequestTrace,
    WorkloadModel,
    generate,
)

DEPLOYMENT_MODES = ("auto", "cpu", "gpu")
LABELS = {"auto": "AUTO", "cpu": "CPU", "gpu": "GPU"}
DEFAULT_REPETITIONS = 5

OUTPUT_FILES = ("response_time.csv", "cpu.csv", "ram.csv", "gpu.csv", "events.csv", "cost.csv")
MANIFEST = "manifest.yaml"
RUNS_DIR = "runs"
RESPONSE_COLUMNS = ("Index", "response_time", "backend", "function_id", "arrival_ms", "param")
TOTAL_ROW = ("TOTAL", "all")

_number = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_positive = {"type": "number", "exclusiveMinimum": 0}

_PROFILE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["service_ms"],
    "properties": {
        "service_ms": {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 1}]},
        "cold_start_ms": _nonneg,
        "cpu_cores": _nonneg,
        "ram_gb": _nonneg,
        "gpu_util_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "concurrency": {"type": "integer", "minimum": 1},
        "spike_prob": {"type": "number", "minimum": 0, "maximum": 1},
        "spike_ms": _nonneg,
    },
}

_TRACE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(TRACE_KINDS)},
        "rate_per_s": _positive,
        "duration_s": _nonneg,
        "param": _number,
        "start_ms": _nonneg,
        "param_start": _number,
        "param_end": _number,
        "param_step": _nonneg,
        "arrivals": {
            "type": "array",
            "items": {"oneOf": [_nonneg, {"type": "array", "items": _number, "minItems": 1, "maxItems": 2}]},
        },
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "constant-rate"}}},
         "then": {"required": ["rate_per_s", "duration_s"]}},
        {"if": {"properties": {"kind": {"const": "ramp"}}},
         "then": {"required": ["rate_per_s", "duration_s", "param_start", "param_end"]}},
        {"if": {"properties": {"kind": {"const": "explicit"}}}, "then": {"required": ["arrivals"]}},
    ],
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "seed", "nodes", "workloads", "functions"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "seed": {"type": "integer", "minimum": 0},
        "repetitions": {"type": "integer", "minimum": 1},
        "output_dir": {"type": ["string", "null"]},
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["node_id", "vcpus", "ram_gb"],
                "properties": {
                    "node_id": {"type": "string", "minLength": 1},
                    "vcpus": {"type": "integer", "minimum": 1},
                    "ram_gb": _positive,
                    "gpu": {
                        "type": ["object", "null"],
                        "additionalProperties": False,
                        "required": ["model", "vram_gb"],
                        "properties": {"model": {"type": "string"}, "vram_gb": _positive},
                    },
                },
            },
        },
        "workloads": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {
                "type": "object",
                "additionalProperties": False,
                "required": ["cpu", "gpu"],
                "properties": {"cpu": _PROFILE, "gpu": _PROFILE, "jitter_pct": _nonneg},
            },
        },
        "functions": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["function_id", "source", "workload", "trace"],
                "properties": {
                    "function_id": {"type": "string", "pattern": "^[A-Za-z_][A-Za-z0-9_-]*$"},
                    "source": {"type": "string", "minLength": 1},
                    "workload": {"type": "string"},
                    "deployment_mode": {"enum": list(DEPLOYMENT_MODES)},
                    "trace": _TRACE,
                },
            },
        },
        "controller": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                f.name: ({"type": ["number", "null"]} if f.name == "reversal_hold_ms" else _number)
                for f in fields(ControllerConfig)
            },
        },
        "telemetry": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window_ms": _positive,
                "aggregate": {"enum": list(AGGREGATES)},
                "exclude_cold_from_latency": {"type": "boolean"},
                "min_samples_for_save": {"type": "integer", "minimum": 1},
            },
        },
        "prices": {
            "type": "object",
            "additionalProperties": False,
            "required": ["cpu_rate", "ram_rate", "gpu_rate"],
            "properties": {
                "cpu_rate": _nonneg,
                "ram_rate": _nonneg,
                "gpu_rate": _nonneg,
                "currency": {"type": "string"},
                "granularity_ms": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "analyzer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "frameworks": {"type": "array", "items": {"type": "string"}},
                "tensor_ops": {"type": "array", "items": {"type": "string"}},
                "big_op_threshold": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ScenarioError(ValueError):
    """A scenario file failed validation; ``path`` locates the bad field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


def _field_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


@dataclass(frozen=True)
class FunctionSpec:
    function_id: str
    source: Path
    workload: str
    trace: dict
    deployment_mode: str = "auto"

    def source_text(self) -> str:
        return self.source.read_text(encoding="utf-8")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    seed: int
    nodes: tuple
    workloads: dict
    functions: tuple
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    telemetry: TelemetryConfig = field(default_factory=TelemetryConfig)
    prices: PriceSheet = PriceSheet(0.0, 0.0, 0.0)
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)
    repetitions: int = DEFAULT_REPETITIONS
    output_dir: Optional[Path] = None

    def trace(self) -> RequestTrace:
        return RequestTrace.merge(generate(f.function_id, f.trace) for f in self.functions)

    def workload_for(self, function_id: str) -> WorkloadModel:
        for f in self.functions:
            if f.function_id == function_id:
                return self.workloads[f.workload]
        raise KeyError(function_id)

    def resolved(self) -> dict:
        """Plain-data form with every default filled in and absolute paths."""
        return {
            "name": self.name,
            "seed": self.seed,
            "repetitions": self.repetitions,
            "output_dir": None if self.output_dir is None else str(self.output_dir),
            "nodes": [_node_dict(n) for n in self.nodes],
            "workloads": {wid: _workload_dict(w) for wid, w in sorted(self.workloads.items())},
            "functions": [
                {
                    "function_id": f.function_id,
                    "source": str(f.source),
                    "workload": f.workload,
                    "deployment_mode": f.deployment_mode,
                    "trace": dict(f.trace),
                }
                for f in self.functions
            ],
            "controller": self.controller.to_dict(),
            "telemetry": {
                "window_ms": self.telemetry.window_ms,
                "aggregate": self.telemetry.aggregate,
                "exclude_cold_from_latency": self.telemetry.exclude_cold_from_latency,
                "min_samples_for_save": self.telemetry.min_samples_for_save,
            },
            "prices": self.prices.to_dict(),
            "analyzer": {
                "frameworks": sorted(self.analyzer.frameworks),
                "tensor_ops": sorted(self.analyzer.tensor_ops),
                "big_op_threshold": self.analyzer.big_op_threshold,
            },
        }


def _node_dict(n: NodeSpec) -> dict:
    gpu = None if n.gpu is None else {"model": n.gpu.model, "vram_gb": n.gpu.vram_gb}
    return {"node_id": n.node_id, "vcpus": n.vcpus, "ram_gb": n.ram_gb, "gpu": gpu}


def _profile_dict(p: BackendProfile) -> dict:
    return {
        "service_ms": list(p.service_ms),
        "cold_start_ms": p.cold_start_ms,
        "cpu_cores": p.cpu_cores,
        "ram_gb": p.ram_gb,
        "gpu_util_pct": p.gpu_util_pct,
        "concurrency": p.concurrency,
        "spike_prob": p.spike_prob,
        "spike_ms": p.spike_ms,
    }


def _workload_dict(w: WorkloadModel) -> dict:
    return {"jitter_pct": w.jitter_pct, "cpu": _profile_dict(w.cpu), "gpu": _profile_dict(w.gpu)}


def _resolve_trace(trace: dict) -> dict:
    kind = trace["kind"]
    if kind == "constant-rate":
        keys = {"param": 0, "start_ms": 0.0}
    elif kind == "ramp":
        keys = {"param_step": 1, "start_ms": 0.0}
    else:
        keys = {}
    out = dict(trace)
    for k, v in keys.items():
        out.setdefault(k, v)
    if kind == "explicit":
        out["arrivals"] = [list(a) if isinstance(a, (list, tuple)) else a for a in trace["arrivals"]]
    return out


class _Builder:
    """Turns validated plain data into domain objects, tagging errors with their field path."""

    def __init__(self, base_dir: Path):
        self.base_dir = base_dir

    def make(self, path: str, factory, *args, **kwargs):
        try:
            return factory(*args, **kwargs)
        except (ValueError, TypeError) as exc:
            raise ScenarioError(path, str(exc)) from None

    def profile(self, path: str, data: dict, default_cold: float) -> BackendProfile:
        service = data["service_ms"]
        service = (float(service),) if isinstance(service, (int, float)) else tuple(float(c) for c in service)
        return self.make(
            path, BackendProfile,
            service_ms=service,
            cold_start_ms=float(data.get("cold_start_ms", default_cold)),
            cpu_cores=float(data.get("cpu_cores", 1.0)),
            ram_gb=float(data.get("ram_gb", 1.0)),
            gpu_util_pct=float(data.get("gpu_util_pct", 0.0)),
            concurrency=int(data.get("concurrency", 1)),
            spike_prob=float(data.get("spike_prob", 0.0)),
            spike_ms=float(data.get("spike_ms", 0.0)),
        )


def _float_map(data: dict) -> dict:
    return {k: (float(v) if isinstance(v, int) and not isinstance(v, bool) else v) for k, v in data.items()}


def parse_scenario(data, base_dir: Union[str, Path] = ".") -> ScenarioSpec:
    """Validate plain data and build a ScenarioSpec.

    Relative source paths resolve against ``base_dir``.
    """
    if not isinstance(data, dict):
        raise ScenarioError("", "scenario must be a mapping")
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ScenarioError(_field_path(err.absolute_path) or "<root>", err.message)

    base_dir = Path(base_dir).resolve()
    b = _Builder(base_dir)

    nodes = []
    for i, n in enumerate(data["nodes"]):
        gpu = n.get("gpu")
        gpu_spec = None if gpu is None else GpuSpec(gpu["model"], float(gpu["vram_gb"]))
        nodes.append(b.make(f"nodes[{i}]", NodeSpec, n["node_id"], int(n["vcpus"]), float(n["ram_gb"]), gpu_spec))
    ids = [n.node_id for n in nodes]
    dupes = sorted(k for k, c in Counter(ids).items() if c > 1)
    if dupes:
        raise ScenarioError("nodes", f"duplicate node_id {dupes[0]!r}")

    workloads = {}
    for wid, w in data["workloads"].items():
        path = f"workloads.{wid}"
        cpu = b.profile(f"{path}.cpu", w["cpu"], DEFAULT_CPU_COLD_START_MS)
        gpu = b.profile(f"{path}.gpu", w["gpu"], DEFAULT_GPU_COLD_START_MS)
        workloads[wid] = b.make(path, WorkloadModel, wid, cpu, gpu, float(w.get("jitter_pct", DEFAULT_JITTER_PCT)))

    functions = []
    seen = set()
    for i, f in enumerate(data["functions"]):
        path = f"functions[{i}]"
        if f["function_id"] in seen:
            raise ScenarioError(f"{path}.function_id", f"duplicate function_id {f['function_id']!r}")
        seen.add(f["function_id"])
        if f["workload"] not in workloads:
            raise ScenarioError(f"{path}.workload", f"unknown workload {f['workload']!r}")
        source = Path(f["source"])
        if not source.is_absolute():
            source = base_dir / source
        if not source.is_file():
            raise ScenarioError(f"{path}.source", f"no such file: {source}")
        trace = _resolve_trace(f["trace"])
        b.make(f"{path}.trace", generate, f["function_id"], trace)
        functions.append(FunctionSpec(f["function_id"], source, f["workload"], trace, f.get("deployment_mode", "auto")))

    controller = b.make("controller", ControllerConfig.from_dict, data.get("controller", {}))
    telemetry_data = data.get("telemetry", {})
    telemetry = b.make(
        "telemetry", TelemetryConfig,
        **{k: (float(v) if k == "window_ms" else v) for k, v in telemetry_data.items()},
    )

    prices_data = data.get("prices")
    if prices_data is None:
        prices = PriceSheet(0.0, 0.0, 0.0)
    else:
        prices = b.make("prices", PriceSheet, **_float_map(prices_data))
        free = prices.cpu_rate == prices.ram_rate == prices.gpu_rate == 0
        if not free and not prices.has_gpu_premium:
            raise ScenarioError("prices.gpu_rate", "gpu_rate must exceed cpu_rate")

    analyzer_data = data.get("analyzer", {})
    analyzer = b.make(
        "analyzer", AnalyzerConfig,
        frameworks=frozenset(analyzer_data.get("frameworks", AnalyzerConfig.frameworks)),
        tensor_ops=frozenset(analyzer_data.get("tensor_ops", AnalyzerConfig.tensor_ops)),
        big_op_threshold=int(analyzer_data.get("big_op_threshold", AnalyzerConfig.big_op_threshold)),
    )

    out = data.get("output_dir")
    output_dir = None if out is None else (Path(out) if Path(out).is_absolute() else base_dir / out)

    return ScenarioSpec(
        name=data["name"],
        seed=int(data["seed"]),
        nodes=tuple(nodes),
        workloads=workloads,
        functions=tuple(functions),
        controller=controller,
        telemetry=telemetry,
        prices=prices,
        analyzer=analyzer,
        repetitions=int(data.get("repetitions", DEFAULT_REPETITIONS)),
        output_dir=output_dir,
    )


def preset_names() -> list[str]:
    root = resources.files("gaia") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_path(name: str) -> Path:
    path = Path(str(resources.files("gaia") / "presets" / f"{name}.yaml"))
    if not path.is_file():
        raise FileNotFoundError(f"no preset named {name!r}; available: {', '.join(preset_names())}")
    return path


def load_scenario(path_or_preset: Union[str, Path]) -> ScenarioSpec:
    """Load a scenario file, a resolved manifest, or a shipped preset by name."""
    path = Path(path_or_preset)
    if not path.exists() and path.suffix == "" and str(path_or_preset) in preset_names():
        path = preset_path(str(path_or_preset))
    if path.is_dir() and (path / MANIFEST).is_file():
        path = path / MANIFEST
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("", f"not valid YAML: {exc}") from None
    if isinstance(data, dict) and "scenario" in data and "deployments" in data:
        data = data["scenario"]
    return parse_scenario(data, path.parent)


@dataclass(frozen=True)
class DeploymentPlan:
    function_id: str
    deployment_mode: str
    target: ExecutionMode
    report: Optional[AnalysisReport] = None


def plan_deployments(spec: ScenarioSpec, override: Optional[str] = None) -> list[DeploymentPlan]:
    """auto runs the analyzer on the function source; cpu and gpu pin without it."""
    if override is not None and override not in DEPLOYMENT_MODES:
        raise ValueError(f"deployment mode must be one of {DEPLOYMENT_MODES}, got {override!r}")
    plans = []
    for f in spec.functions:
        mode = override or f.deployment_mode
        if mode == "auto":
            report = analyze(f.source_text(), spec.analyzer)
            plans.append(DeploymentPlan(f.function_id, mode, report.mode, report))
        else:
            plans.append(DeploymentPlan(f.function_id, mode, ExecutionMode(mode)))
    return plans


def run_label(plans: Sequence[DeploymentPlan]) -> str:
    modes = {p.deployment_mode for p in plans}
    return LABELS[modes.pop()] if len(modes) == 1 else LABELS["auto"]


def run_once(spec: ScenarioSpec, plans: Sequence[DeploymentPlan], seed: int, label: str,
             trace: Optional[RequestTrace] = None) -> ScenarioResult:
    trace = trace if trace is not None else spec.trace()
    workloads = {f.function_id: spec.workloads[f.workload] for f in spec.functions}
    sim = Simulation(
        Cluster(spec.nodes), workloads, spec.controller, TelemetryStore(spec.telemetry), seed, label,
    )
    for p in plans:
        sim.deploy(p.function_id, p.target)
    result = sim.run(trace)
    result.cost = cost_of(result, spec.prices)
    return result


@dataclass
class ScenarioRun:
    spec: ScenarioSpec
    label: str
    plans: list[DeploymentPlan]
    seeds: list[int]
    results: list[ScenarioResult]


def run_scenario(
    spec: ScenarioSpec,
    deployment_mode: Optional[str] = None,
    seed: Optional[int] = None,
    repetitions: Optional[int] = None,
) -> ScenarioRun:
    """Repeat the scenario with seeds ``seed, seed+1, ...``."""
    base = spec.seed if seed is None else seed
    reps = spec.repetitions if repetitions is None else repetitions
    if reps < 1:
        raise ValueError("repetitions must be >= 1")
    plans = plan_deployments(spec, deployment_mode)
    label = run_label(plans)
    trace = spec.trace()
    seeds = [base + k for k in range(reps)]
    results = [run_once(spec, plans, s, label, trace) for s in seeds]
    return ScenarioRun(spec, label, plans, seeds, results)


# CSV output. Every float goes through _f so reruns are byte-identical.

def _f(x: float) -> str:
    return f"{x:.6f}"


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def _response_rows(result: ScenarioResult) -> list[list]:
    return [
        [r.index, r.latency, r.backend.value, r.function_id, r.arrival, r.param]
        for r in result.requests
    ]


def _write_response(rows: list[list], out) -> None:
    w = _writer(out)
    w.writerow(RESPONSE_COLUMNS)
    for idx, latency, backend, fid, arrival, param in rows:
        w.writerow([idx, _f(latency), backend, fid, _f(arrival), _f(float(param))])


def _series_columns(label: str) -> tuple[str, str, str]:
    return label, f"{label}-cpu-revision", f"{label}-gpu-revision"


def _series_table(result: ScenarioResult, series: str) -> list[list[float]]:
    s = result.utilization[series]
    return [list(t) for t in zip(s["total"], s[Backend.CPU.value], s[Backend.GPU.value])]


def _write_series(table: list[list[float]], label: str, out) -> None:
    w = _writer(out)
    w.writerow(("Index",) + _series_columns(label))
    for i, row in enumerate(table):
        w.writerow([i] + [_f(v) for v in row])


def _cost_rows(result: ScenarioResult) -> dict:
    return {(l.function_id, l.backend.value): (l.seconds, l.cost) for l in result.cost.lines}


def _write_cost(rows: dict, out) -> None:
    w = _writer(out)
    w.writerow(COST_CSV_COLUMNS)
    for (fid, backend), (seconds, cost) in sorted(rows.items()):
        w.writerow([fid, backend, _f(seconds), f"{cost:.9f}"])
    total_s = math.fsum(s for s, _ in rows.values())
    total_c = math.fsum(c for _, c in rows.values())
    w.writerow(list(TOTAL_ROW) + [_f(total_s), f"{total_c:.9f}"])


def write_run_csvs(result: ScenarioResult, run_name: str, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "response_time.csv", "w", newline="") as fh:
        _write_response(_response_rows(result), fh)
    for s in SERIES:
        with open(out_dir / f"{s}.csv", "w", newline="") as fh:
            _write_series(_series_table(result, s), result.label, fh)
    with open(out_dir / "events.csv", "w", newline="") as fh:
        write_decision_log(result.events, fh, extra={"run": run_name})
    with open(out_dir / "cost.csv", "w", newline="") as fh:
        _write_cost(_cost_rows(result), fh)


def _aggregate_response(results: Sequence[ScenarioResult]) -> list[list]:
    per_run = [_response_rows(r) for r in results]
    rows = []
    for parts in zip(*per_run):
        backends = {p[2] for p in parts}
        first = parts[0]
        backend = first[2] if len(backends) == 1 else "mixed"
        rows.append([first[0], _mean([p[1] for p in parts]), backend, first[3], first[4], first[5]])
    return rows


def _aggregate_series(results: Sequence[ScenarioResult], series: str) -> list[list[float]]:
    tables = [_series_table(r, series) for r in results]
    n = max(len(t) for t in tables)
    padded = [t + [[0.0, 0.0, 0.0]] * (n - len(t)) for t in tables]
    return [[_mean([t[i][c] for t in padded]) for c in range(3)] for i in range(n)]


def _aggregate_cost(results: Sequence[ScenarioResult]) -> dict:
    per_run = [_cost_rows(r) for r in results]
    keys = sorted(set().union(*per_run))
    return {
        k: (_mean([rows.get(k, (0.0, 0.0))[0] for rows in per_run]),
            _mean([rows.get(k, (0.0, 0.0))[1] for rows in per_run]))
        for k in keys
    }


def run_dir_name(k: int, seed: int) -> str:
    return f"run-{k + 1}-seed-{seed}"


def manifest_data(run: ScenarioRun) -> dict:
    return {
        "scenario": run.spec.resolved(),
        "deployments": [
            {
                "function_id": p.function_id,
                "deployment_mode": p.deployment_mode,
                "mode": p.target.value,
                "annotations": None if p.report is None else p.report.to_annotations(),
            }
            for p in run.plans
        ],
        "label": run.label,
        "seeds": list(run.seeds),
    }


def write_outputs(run: ScenarioRun, out_dir: Union[str, Path], plot: bool = False) -> Path:
    """Write per-run and mean-aggregated CSVs plus the resolved manifest.

    Output is staged in a sibling temporary directory and moved into place
    only when complete, so a failure leaves no partial results. An
    existing directory is replaced only if it holds an earlier run.
    """
    out_dir = Path(out_dir).resolve()
    if out_dir.exists() and any(out_dir.iterdir()) and not (out_dir / MANIFEST).is_file():
        raise FileExistsError(f"{out_dir} exists and does not hold an earlier run")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}-", dir=out_dir.parent))
    try:
        for k, (seed, result) in enumerate(zip(run.seeds, run.results)):
            name = run_dir_name(k, seed)
            write_run_csvs(result, name, staging / RUNS_DIR / name)
        with open(staging / "response_time.csv", "w", newline="") as fh:
            _write_response(_aggregate_response(run.results), fh)
        for s in SERIES:
            with open(staging / f"{s}.csv", "w", newline="") as fh:
                _write_series(_aggregate_series(run.results, s), run.label, fh)
        with open(staging / "events.csv", "w", newline="") as fh:
            w = _writer(fh)
            w.writerow(("run",) + DECISION_CSV_COLUMNS)
            for k, (seed, result) in enumerate(zip(run.seeds, run.results)):
                buf = io.StringIO()
                write_decision_log(result.events, buf, extra={"run": run_dir_name(k, seed)})
                fh.write("".join(buf.getvalue().splitlines(keepends=True)[1:]))
        with open(staging / "cost.csv", "w", newline="") as fh:
            _write_cost(_aggregate_cost(run.results), fh)
        with open(staging / MANIFEST, "w") as fh:
            yaml.safe_dump(manifest_data(run), fh, sort_keys=False)
        if plot:
            from gaia.plots import plot_run

            plot_run(staging)
        if out_dir.exists():
            shutil.rmtree(out_dir)
        staging.rename(out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return out_dir


def read_response_times(out_dir: Union[str, Path]) -> list[dict]:
    with open(Path(out_dir) / "response_time.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def read_cost_total(out_dir: Union[str, Path]) -> float:
    with open(Path(out_dir) / "cost.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            if (row["function_id"], row["backend"]) == TOTAL_ROW:
                return float(row["cost"])
    raise ValueError(f"{out_dir}/cost.csv has no total row")


def read_label(out_dir: Union[str, Path]) -> str:
    with open(Path(out_dir) / "cpu.csv", newline="") as fh:
        header = next(csv.reader(fh))
    return header[1]


def summarize(run: ScenarioRun) -> list[str]:
    """Human-readable summary lines: deployments, median latency, switches, cost."""
    lines = [f"scenario {run.spec.name}: mode {run.label}, {len(run.results)} run(s), seeds {run.seeds[0]}..{run.seeds[-1]}"]
    for p in run.plans:
        why = f" ({p.report.reason})" if p.report is not None else ""
        lines.append(f"  {p.function_id}: deployed {p.target.value}{why}")
    agg = _aggregate_response(run.results)
    for fid in sorted({row[3] for row in agg}):
        lat = [row[1] for row in agg if row[3] == fid]
        lines.append(f"  {fid}: median latency {statistics.median(lat):.2f} ms over {len(lat)} requests")
    for k, (seed, result) in enumerate(zip(run.seeds, run.results)):
        events = ", ".join(
            f"{e.timestamp / 1000:.0f}s {e.function_id} {e.action.verdict.value}"
            + ("" if e.outcome == "applied" else f" ({e.outcome})")
            for e in result.events
        ) or "none"
        lines.append(f"  {run_dir_name(k, seed)}: switches {events}")
    totals = [r.cost.total for r in run.results]
    lines.append(f"  cost total {_mean(totals):.5f} {run.spec.prices.currency} (mean over {len(totals)} run(s))")
    return lines
