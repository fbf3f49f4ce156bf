"""Hybrid CPU/GPU acceleration control plane for serverless functions.

Deploy-time execution-mode classification, SLO-driven promote/demote
adaptation, and a deterministic heterogeneous-cluster simulator to run
both against.
"""

from gaia.modes import Backend, ExecutionMode

__version__ = "0.1.0"

__all__ = ["Backend", "ExecutionMode", "__version__"]
