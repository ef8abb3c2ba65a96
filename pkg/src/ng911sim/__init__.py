"""Discrete-event simulator of emergency call-processing and dispatch networks."""

from .core import ConfigError, KernelError, ReplicationPlan, SchedulingError
from .scenario import charlotte, load_scenario, parse_scenario
from .simulator import BatchResult, ReplicationResult, run_batch, run_replication

__version__ = "0.1.0"

__all__ = [
    "BatchResult",
    "ConfigError",
    "KernelError",
    "ReplicationPlan",
    "ReplicationResult",
    "SchedulingError",
    "charlotte",
    "load_scenario",
    "parse_scenario",
    "run_batch",
    "run_replication",
]
