"""Structured compressible-flow solver for round supersonic jets.

Finite-difference curvilinear scheme with scalar artificial dissipation,
five-stage explicit time marching, SPMD block decomposition with two-layer
halo exchange, per-partition file I/O, jet statistics, and a strong-scaling
benchmark harness.
"""

from .core import (ConfigError, FlowConfig, InvalidStateError,
                   conservative_from_primitive, primitive_from_conservative)
from .meshgen import GridSpec, GlobalGrid, CurvilinearMesh, compute_metrics, generate
from .partition import PartitionSpec, PartitionTopology, balance, build_topology
from .integrate import RkScheme, RunPlan, RunResult, run_processes, run_threads, warmup
from .stats import RunningMoments, azimuthal_average, extract_profile, potential_core
from .storage import PartitionSet, load_partition_set, write_partition_set

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "FlowConfig", "InvalidStateError",
    "conservative_from_primitive", "primitive_from_conservative",
    "GridSpec", "GlobalGrid", "CurvilinearMesh", "compute_metrics", "generate",
    "PartitionSpec", "PartitionTopology", "balance", "build_topology",
    "RkScheme", "RunPlan", "RunResult", "run_processes", "run_threads", "warmup",
    "RunningMoments", "azimuthal_average", "extract_profile", "potential_core",
    "PartitionSet", "load_partition_set", "write_partition_set",
    "__version__",
]
