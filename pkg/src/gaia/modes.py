from __future__ import annotations

import enum


class ExecutionMode(str, enum.Enum):
    """Where a function is allowed to run.

    ``cpu`` and ``gpu`` are pinned; the two preferred modes start on the
    named backend and may be switched at runtime.
    """

    CPU = "cpu"
    CPU_PREFERRED = "cpu_preferred"
    GPU_PREFERRED = "gpu_preferred"
    GPU = "gpu"

    @property
    def level(self) -> int:
        # reporting order only, never used for decisions
        return _LEVELS[self]

    @property
    def pinned(self) -> bool:
        return self in (ExecutionMode.CPU, ExecutionMode.GPU)

    @property
    def initial_backend(self) -> "Backend":
        if self in (ExecutionMode.GPU, ExecutionMode.GPU_PREFERRED):
            return Backend.GPU
        return Backend.CPU

    def __str__(self) -> str:
        return self.value


_LEVELS = {
    ExecutionMode.CPU: 0,
    ExecutionMode.CPU_PREFERRED: 1,
    ExecutionMode.GPU_PREFERRED: 2,
    ExecutionMode.GPU: 3,
}


class Backend(str, enum.Enum):
    CPU = "cpu_backend"
    GPU = "gpu_backend"

    @property
    def short(self) -> str:
        return "cpu" if self is Backend.CPU else "gpu"

    @property
    def other(self) -> "Backend":
        return Backend.GPU if self is Backend.CPU else Backend.CPU

    def __str__(self) -> str:
        return self.value
