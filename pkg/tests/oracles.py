"""Straight-line reference implementations, written independently of the package."""
from __future__ import annotations

import math
from typing import Optional

EXPLICIT = ("gpu", "explicit GPU usage")
LARGE = ("gpu_preferred", "large tensor ops")
SMALL = ("cpu_preferred", "small tensor ops")
IMPORTS = ("cpu_preferred", "imports only")
NOTHING = ("cpu", "no GPU-related activity")


def mode_identifier(dl_import: bool, gpu_explicit: bool, big_ops: bool, small_ops: bool) -> tuple[str, str]:
    if gpu_explicit:
        return EXPLICIT
    if dl_import and big_ops:
        return LARGE
    if dl_import and small_ops and not big_ops:
        return SMALL
    if dl_import:
        return IMPORTS
    return NOTHING


def runtime_decision(
    mode: str,
    rate: float,
    latency: Optional[float],
    saved_cpu: Optional[float],
    saved_gpu: Optional[float],
    recent_change: bool,
    slo: float = 500.0,
    gate: float = 1.0,
    low: float = 0.5,
    gap: float = 50.0,
) -> str:
    if latency is None:
        return "keep_mode"
    if mode == "cpu_preferred":
        slower_than_gpu = recent_change and saved_gpu is not None and latency > saved_gpu + gap
        if rate > gate and (latency > slo or slower_than_gpu):
            return "switch_to_gpu"
    elif mode == "gpu_preferred":
        if rate > gate and recent_change and saved_cpu is not None and latency + gap > saved_cpu:
            return "switch_to_cpu"
        elif rate < low and (saved_cpu is None or saved_cpu < slo):
            return "switch_to_cpu"
    return "keep_mode"


def nearest_rank(values: list[float], pct: float) -> float:
    ordered = sorted(values)
    k = math.ceil(len(ordered) * pct / 100)
    return ordered[max(k, 1) - 1]


def solve_two_rates(c_core, c_ram, c_gpu, g_core, g_ram, g_gpu, cpu_total, gpu_total, ram_rate):
    """Cramer's rule for the vCPU and GPU rates."""
    b1 = cpu_total - ram_rate * c_ram
    b2 = gpu_total - ram_rate * g_ram
    det = c_core * g_gpu - c_gpu * g_core
    return (b1 * g_gpu - c_gpu * b2) / det, (c_core * b2 - b1 * g_core) / det
