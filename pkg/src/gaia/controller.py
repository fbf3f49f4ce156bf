"""Runtime promote/demote controller for functions in a preferred mode.

:func:`decide` is the pure per-function decision. :class:`Reevaluator`
runs it periodically over a registry, records the departing backend's
latency on every switch, and hands switches to a redeploy callback.
"""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field, fields
from typing import Callable, Iterable, Optional, TextIO

import yaml

from gaia.modes import Backend, ExecutionMode
from gaia.telemetry import InsufficientSamples, SavedLatencies, TelemetryStore, TelemetryWindow

logger = logging.getLogger(__name__)


class PinnedMode(ValueError):
    """decide() was handed a function whose mode is cpu or gpu."""


class Verdict(str, enum.Enum):
    SWITCH_TO_CPU = "switch_to_cpu"
    SWITCH_TO_GPU = "switch_to_gpu"
    KEEP_MODE = "keep_mode"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ControllerConfig:
    latency_threshold_ms: float = 500.0
    cold_start_mitigation_threshold: float = 1.0
    low_rate_threshold: float = 0.5
    gap_ms: float = 50.0
    recent_change_window_ms: float = 120_000.0
    reevaluation_period_ms: float = 15_000.0
    # None holds a function on its backend for the rest of the run once it
    # has returned to a backend it already left
    reversal_hold_ms: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None and f.name == "reversal_hold_ms":
                continue
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                raise ValueError(f"{f.name} must be a positive number, got {value!r}")
        if self.low_rate_threshold > self.cold_start_mitigation_threshold:
            raise ValueError("low_rate_threshold must not exceed cold_start_mitigation_threshold")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown controller keys: {sorted(unknown)}")
        return cls(**{k: (float(v) if isinstance(v, int) and not isinstance(v, bool) else v)
                      for k, v in data.items()})


def load_controller_config(stream: TextIO) -> ControllerConfig:
    """Read a ``key: value`` file, one key per ControllerConfig field."""
    data = yaml.safe_load(stream) or {}
    if not isinstance(data, dict):
        raise ValueError("controller config must be a key: value mapping")
    return ControllerConfig.from_dict(data)


def dump_controller_config(cfg: ControllerConfig, stream: TextIO) -> None:
    yaml.safe_dump(cfg.to_dict(), stream, sort_keys=False)


@dataclass
class FunctionState:
    function_id: str
    mode: ExecutionMode
    last_change_at: Optional[float] = None
    saved: SavedLatencies = field(default_factory=SavedLatencies)
    visited: set = field(default_factory=set)
    hold_until: Optional[float] = None
    held: bool = False

    def recent_change(self, now: float, cfg: ControllerConfig) -> bool:
        if self.last_change_at is None:
            return False
        return (now - self.last_change_at) < cfg.recent_change_window_ms

    @property
    def backend(self) -> Backend:
        return self.mode.initial_backend

    def on_hold(self, now: float) -> bool:
        if not self.held:
            return False
        return self.hold_until is None or now < self.hold_until


@dataclass(frozen=True)
class InputsSnapshot:
    rate: float
    latency: Optional[float]
    saved_cpu: Optional[float]
    saved_gpu: Optional[float]
    recent_change: bool


@dataclass(frozen=True)
class AdaptationAction:
    verdict: Verdict
    rationale: str
    inputs_snapshot: InputsSnapshot


def _fmt(value: Optional[float]) -> str:
    return "none" if value is None else f"{value:.2f}"


def decide(
    state: FunctionState, window: TelemetryWindow, cfg: ControllerConfig, now: float
) -> AdaptationAction:
    if state.mode.pinned:
        raise PinnedMode(f"{state.function_id} is pinned to {state.mode.value}")
    rate = window.request_rate
    latency = window.latency_stat
    saved_cpu = state.saved.saved_cpu_latency
    saved_gpu = state.saved.saved_gpu_latency
    recent = state.recent_change(now, cfg)
    snap = InputsSnapshot(rate, latency, saved_cpu, saved_gpu, recent)
    facts = (
        f"rate={rate:.3f}/s latency={_fmt(latency)}ms saved_cpu={_fmt(saved_cpu)} "
        f"saved_gpu={_fmt(saved_gpu)} recent_change={recent}"
    )

    def keep(why: str) -> AdaptationAction:
        return AdaptationAction(Verdict.KEEP_MODE, f"{why}; {facts}", snap)

    if latency is None:
        return keep("no latency in window")
    gate_open = rate > cfg.cold_start_mitigation_threshold

    if state.mode is ExecutionMode.CPU_PREFERRED:
        if gate_open:
            if latency > cfg.latency_threshold_ms:
                return AdaptationAction(Verdict.SWITCH_TO_GPU, f"latency above SLO; {facts}", snap)
            if recent and saved_gpu is not None and latency > saved_gpu + cfg.gap_ms:
                return AdaptationAction(
                    Verdict.SWITCH_TO_GPU, f"cpu slower than saved gpu latency plus gap; {facts}", snap
                )
        return keep("cpu acceptable" if gate_open else "rate below cold-start gate")

    # gpu_preferred
    if gate_open and recent and saved_cpu is not None and latency + cfg.gap_ms > saved_cpu:
        return AdaptationAction(
            Verdict.SWITCH_TO_CPU, f"gpu not faster than saved cpu latency by gap; {facts}", snap
        )
    if rate < cfg.low_rate_threshold and (saved_cpu is None or saved_cpu < cfg.latency_threshold_ms):
        return AdaptationAction(Verdict.SWITCH_TO_CPU, f"low request rate, cpu acceptable; {facts}", snap)
    return keep("gpu retained")


@dataclass(frozen=True)
class DecisionRecord:
    timestamp: float
    function_id: str
    action: AdaptationAction
    outcome: str  # applied | failed | suppressed | keep | error


DECISION_CSV_COLUMNS = (
    "timestamp", "function_id", "verdict", "outcome", "rationale",
    "rate", "latency", "saved_cpu", "saved_gpu",
)


def _csv_num(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.3f}"


def write_decision_log(records: Iterable[DecisionRecord], out: TextIO, extra: Optional[dict] = None) -> None:
    extra = extra or {}
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(tuple(extra) + DECISION_CSV_COLUMNS)
    for r in records:
        s = r.action.inputs_snapshot
        writer.writerow(list(extra.values()) + [
            f"{r.timestamp:.3f}", r.function_id, r.action.verdict.value, r.outcome,
            r.action.rationale, _csv_num(s.rate), _csv_num(s.latency),
            _csv_num(s.saved_cpu), _csv_num(s.saved_gpu),
        ])


Redeploy = Callable[[str, Backend, float], None]


class Reevaluator:
    """Periodic reevaluation over every non-pinned function.

    Must be externally serialized: one reevaluate_all at a time. On a
    switch the departing backend's latency is saved, ``last_change_at`` is
    updated and ``redeploy(function_id, target_backend, now)`` is called.
    A redeploy that raises leaves the function's mode unchanged and is
    logged as a failed switch.

    Anti-oscillation: once a switch takes a function back to a backend it
    has already left, further switches are suppressed (logged as
    keep_mode) for ``reversal_hold_ms``.
    """

    def __init__(self, cfg: ControllerConfig, telemetry: TelemetryStore, redeploy: Optional[Redeploy] = None):
        self.cfg = cfg
        self.telemetry = telemetry
        self.redeploy = redeploy
        self.registry: dict[str, FunctionState] = {}
        self.log: list[DecisionRecord] = []

    def register(self, function_id: str, mode: ExecutionMode) -> FunctionState:
        self.telemetry.register(function_id)
        state = FunctionState(function_id, mode, saved=self.telemetry.saved(function_id))
        state.visited.add(mode.initial_backend)
        self.registry[function_id] = state
        return state

    def reevaluate_all(self, now: float) -> list[tuple[str, AdaptationAction]]:
        results = []
        for fid in sorted(self.registry):
            state = self.registry[fid]
            if state.mode.pinned:
                continue
            try:
                action, outcome = self._reevaluate(state, now)
            except Exception as exc:  # one bad function must not stall the loop
                logger.exception("reevaluation of %s failed", fid)
                snap = InputsSnapshot(0.0, None, state.saved.saved_cpu_latency, state.saved.saved_gpu_latency, False)
                action, outcome = AdaptationAction(Verdict.KEEP_MODE, f"error: {exc}", snap), "error"
            self.log.append(DecisionRecord(now, fid, action, outcome))
            results.append((fid, action))
        return results

    def _reevaluate(self, state: FunctionState, now: float) -> tuple[AdaptationAction, str]:
        current = state.backend
        window = self.telemetry.window_stats(state.function_id, now, backend=current)
        action = decide(state, window, self.cfg, now)
        if action.verdict is Verdict.KEEP_MODE:
            return action, "keep"
        if state.on_hold(now):
            held = AdaptationAction(
                Verdict.KEEP_MODE,
                f"held after round trip, would {action.verdict.value}: {action.rationale}",
                action.inputs_snapshot,
            )
            return held, "suppressed"

        target = Backend.GPU if action.verdict is Verdict.SWITCH_TO_GPU else Backend.CPU
        if self.redeploy is not None:
            try:
                self.redeploy(state.function_id, target, now)
            except Exception as exc:
                logger.info("switch of %s to %s failed: %s", state.function_id, target.short, exc)
                failed = AdaptationAction(action.verdict, f"redeploy failed ({exc}); {action.rationale}",
                                          action.inputs_snapshot)
                return failed, "failed"

        try:
            self.telemetry.save_backend_latency(state.function_id, current, now)
        except InsufficientSamples as exc:
            logger.debug("not saving %s latency: %s", current.short, exc)
        state.mode = ExecutionMode.GPU_PREFERRED if target is Backend.GPU else ExecutionMode.CPU_PREFERRED
        state.last_change_at = now
        if target in state.visited:
            state.held = True
            hold = self.cfg.reversal_hold_ms
            state.hold_until = None if hold is None else now + hold
        state.visited.add(target)
        logger.info("%.0fs %s %s: %s", now / 1000, state.function_id, action.verdict.value, action.rationale)
        return action, "applied"

    def switch_events(self) -> list[DecisionRecord]:
        return [r for r in self.log if r.outcome in ("applied", "failed")]
