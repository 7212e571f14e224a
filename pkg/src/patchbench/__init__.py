"""Finite-volume patch-update kernel benchmark.

A library plus CLI harness that runs a Rusanov-type finite-volume update
over batches of Cartesian patches and compares execution realizations
(sequential, patch-wise, batched, task-graph), memory layouts (AoS, SoA,
AoSoA), reduction strategies and data-transfer modes, with the sequential
run as the bitwise golden reference.
"""

from .bench import BenchConfig, BenchRecord, emit_csv, init_field, run_sweep
from .equations import EulerParameters, InvalidStateError
from .executors import (
    ExecutionTrace,
    Realization,
    ReductionStrategy,
    WorkerPool,
    WorkgroupLimitError,
)
from .kernelgraph import KernelPlan, build_plan
from .memory import DeviceArena, ScatteredPatchSet, TransferMode
from .microkernels import ScratchArrays, TimeStepContext
from .patchdata import BatchShape, Layout, PatchBatch

__version__ = "0.1.0"

__all__ = [
    "BatchShape",
    "BenchConfig",
    "BenchRecord",
    "DeviceArena",
    "EulerParameters",
    "ExecutionTrace",
    "InvalidStateError",
    "KernelPlan",
    "Layout",
    "PatchBatch",
    "Realization",
    "ReductionStrategy",
    "ScatteredPatchSet",
    "ScratchArrays",
    "TimeStepContext",
    "TransferMode",
    "WorkerPool",
    "WorkgroupLimitError",
    "build_plan",
    "emit_csv",
    "init_field",
    "run_sweep",
]
