"""Kernel realizations: sequential oracle, patch-wise, batched, task-graph.

All four compute the same update; they differ in how the algorithmic steps
are mapped onto a fixed-size worker pool:

* sequential  -- plain nested loops over the scalar microkernels, in
                 canonical index order; defines the golden output.
* batched     -- one collapsed parallel-for over all patches per step, with
                 a global wait after every step.
* patch-wise  -- one parallel region over patches; each patch runs all steps
                 in order over the union range [-1,p]^d with per-step
                 masking, and only the very end synchronizes globally.
* task-graph  -- the per-patch dependency DAG, assembled dynamically inside
                 the timed region and executed node by node under the edge
                 constraints.

Every parallel realization must reproduce the sequential output bit for bit;
the scheduling never changes what is computed, only when and where.
"""

from __future__ import annotations

import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import microkernels as mk
from .kernelgraph import (
    KernelPlan,
    StepOp,
    StepSpec,
    build_task_graph,
    masked_per_patch,
    topological_order,
)
from .microkernels import ScratchArrays, StepOffsets, TimeStepContext
from .patchdata import FieldView

__all__ = [
    "Realization",
    "ReductionStrategy",
    "ExecutionTrace",
    "WorkerPool",
    "WorkgroupLimitError",
    "run_sequential",
    "run_batched",
    "run_patchwise",
    "run_taskgraph",
    "reduce_max",
    "NEUTRAL_EIGENVALUE",
]

# Masked-out lanes contribute the neutral element of the max reduction.
NEUTRAL_EIGENVALUE = 0.0


class Realization(Enum):
    SEQUENTIAL = "sequential"
    PATCH_WISE = "patch-wise"
    BATCHED = "batched"
    TASK_GRAPH = "task-graph"


class ReductionStrategy(Enum):
    GROUP_TREE = "tree"
    SHARED_MAX = "shared-max"
    SERIAL = "serial"


class WorkgroupLimitError(RuntimeError):
    """The emulated workgroup (p+2)^d exceeds the configured lane limit; the
    patch would have to be broken down manually."""


@dataclass
class ExecutionTrace:
    """Scheduling telemetry of one launch."""

    global_sync_count: int = 0
    per_step_task_counts: list[int] = field(default_factory=list)
    masked_invocation_count: int = 0
    executed_invocation_count: int = 0
    launch_count: int = 0


class WorkerPool:
    """Fixed-size thread pool with a chunked parallel-for.

    ``parallel_for`` splits a flat index range into contiguous chunks, runs
    ``body(lo, hi)`` per chunk, and returns the per-chunk results in chunk
    order once all chunks finished (the global wait).
    """

    def __init__(self, workers: int) -> None:
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.workers = workers
        self._executor = ThreadPoolExecutor(max_workers=workers)

    def parallel_for(
        self, total: int, body: Callable[[int, int], object], chunks: int | None = None
    ) -> list[object]:
        if total <= 0:
            return []
        n_chunks = min(chunks or self.workers, total)
        if n_chunks == 1:
            return [body(0, total)]
        size, rem = divmod(total, n_chunks)
        bounds = []
        lo = 0
        for i in range(n_chunks):
            hi = lo + size + (1 if i < rem else 0)
            bounds.append((lo, hi))
            lo = hi
        futures = [self._executor.submit(body, lo, hi) for lo, hi in bounds]
        return [f.result() for f in futures]

    def submit(self, fn: Callable[..., object], *args: object) -> Future:
        return self._executor.submit(fn, *args)

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc: object) -> None:
        self.shutdown()


# ----------------------------------------------------------------------
# max reductions
# ----------------------------------------------------------------------


def _tree_max(values: np.ndarray) -> float:
    """Balanced pairwise max; exact for any order since max is exact."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return NEUTRAL_EIGENVALUE
    while v.size > 1:
        half = v.size // 2
        folded = np.maximum(v[:half], v[half : 2 * half])
        if v.size % 2:
            folded = np.concatenate([folded, v[2 * half :]])
        v = folded
    return float(v[0])


def _serial_max(values: np.ndarray) -> float:
    result = NEUTRAL_EIGENVALUE
    for x in values:
        if x > result:
            result = float(x)
    return result


def reduce_max(
    values: np.ndarray, strategy: ReductionStrategy, pool: WorkerPool | None = None
) -> float:
    """Maximum of ``values`` (neutral element 0) under a reduction strategy.

    All strategies return the identical value; they only differ in the
    algorithm shape: a balanced pairwise tree, chunk-local maxima folded into
    a shared maximum, or one serial loop.
    """
    values = np.asarray(values, dtype=np.float64)
    if strategy is ReductionStrategy.GROUP_TREE:
        return max(NEUTRAL_EIGENVALUE, _tree_max(values))
    if strategy is ReductionStrategy.SERIAL:
        return _serial_max(values)
    holder = _SharedMax()
    if pool is None or values.size == 0:
        holder.update(_chunk_max(values))
    else:
        pool.parallel_for(
            values.size, lambda lo, hi: holder.update(_chunk_max(values[lo:hi]))
        )
    return holder.value


class _SharedMax:
    """Shared maximum cell updated by concurrent workers (atomic analog)."""

    def __init__(self) -> None:
        self.value = NEUTRAL_EIGENVALUE
        self._lock = threading.Lock()

    def update(self, candidate: float) -> None:
        with self._lock:
            if candidate > self.value:
                self.value = candidate


def _chunk_max(values: np.ndarray) -> float:
    return float(np.max(values)) if values.size else NEUTRAL_EIGENVALUE


def _strategy_max(values: np.ndarray, strategy: ReductionStrategy) -> float:
    """Single-worker application of a strategy's algorithm shape."""
    if strategy is ReductionStrategy.GROUP_TREE:
        return max(NEUTRAL_EIGENVALUE, _tree_max(values))
    if strategy is ReductionStrategy.SERIAL:
        return _serial_max(values)
    holder = _SharedMax()
    holder.update(_chunk_max(values))
    return holder.value


# ----------------------------------------------------------------------
# sequential oracle
# ----------------------------------------------------------------------


def run_sequential(
    plan: KernelPlan,
    inp: FieldView,
    out: FieldView,
    scratch: ScratchArrays,
    ctx: TimeStepContext,
) -> float | None:
    """Golden executor: serialized steps, patches and cells in canonical
    order, scalar microkernels throughout."""
    reduced: float | None = None
    patches = range(plan.shape.patch_count)
    for step in plan.steps:
        kind = step.kind
        if kind.op is StepOp.COPY:
            for patch in patches:
                for i in range(step.range_size):
                    mk.copy_cell(
                        inp, out, patch, step.lins_haloed[i], step.lins_interior[i]
                    )
        elif kind.op is StepOp.FLUX:
            for patch in patches:
                for i in range(step.range_size):
                    mk.flux_cell(inp, scratch, patch, step.lins_haloed[i], kind.axis, ctx)
        elif kind.op is StepOp.EIGENVALUE:
            for patch in patches:
                for i in range(step.range_size):
                    mk.eigenvalue_cell(
                        inp, scratch, patch, step.lins_haloed[i], kind.axis, ctx
                    )
        elif kind.op is StepOp.ACCUMULATE:
            for patch in patches:
                for i in range(step.range_size):
                    mk.accumulate_cell(
                        inp,
                        out,
                        scratch,
                        patch,
                        step.lins_haloed[i],
                        step.lins_left[i],
                        step.lins_right[i],
                        step.lins_interior[i],
                        kind.axis,
                        ctx,
                    )
        else:
            reduced = NEUTRAL_EIGENVALUE
            for patch in patches:
                for i in range(step.range_size):
                    value = mk.reduce_cell_value(out, patch, step.lins_interior[i], ctx)
                    if value > reduced:
                        reduced = value
    return reduced


# ----------------------------------------------------------------------
# shared vectorized step dispatch
# ----------------------------------------------------------------------


def _run_step_slice(
    step: StepSpec,
    offs: StepOffsets,
    inp: FieldView,
    out: FieldView,
    scratch: ScratchArrays,
    patch: int,
    sl: slice,
    ctx: TimeStepContext,
) -> None:
    kind = step.kind
    if kind.op is StepOp.COPY:
        mk.copy_cells(inp, out, patch, offs, sl)
    elif kind.op is StepOp.FLUX:
        mk.flux_cells(inp, scratch, patch, offs, sl, kind.axis, ctx)
    elif kind.op is StepOp.EIGENVALUE:
        mk.eigenvalue_cells(inp, scratch, patch, offs, sl, kind.axis, ctx)
    elif kind.op is StepOp.ACCUMULATE:
        mk.accumulate_cells(inp, out, scratch, patch, offs, sl, kind.axis, ctx)
    else:
        raise AssertionError("reduce steps are dispatched separately")


def _all_offsets(
    plan: KernelPlan, inp: FieldView, out: FieldView, scratch: ScratchArrays
) -> list[StepOffsets]:
    return [mk.compute_step_offsets(s, inp, out, scratch) for s in plan.steps]


# ----------------------------------------------------------------------
# batched realization
# ----------------------------------------------------------------------


def run_batched(
    plan: KernelPlan,
    inp: FieldView,
    out: FieldView,
    scratch: ScratchArrays,
    ctx: TimeStepContext,
    pool: WorkerPool,
    strategy: ReductionStrategy = ReductionStrategy.GROUP_TREE,
) -> tuple[float | None, ExecutionTrace]:
    """One collapsed parallel-for per step over T x range, global wait each."""
    offsets = _all_offsets(plan, inp, out, scratch)
    trace = ExecutionTrace()
    reduced: float | None = None
    t = plan.shape.patch_count
    for step, offs in zip(plan.steps, offsets):
        n = step.range_size
        total = t * n
        if step.kind.op is StepOp.REDUCE:
            reduced = _batched_reduce(step, offs, out, ctx, pool, strategy, total, n)
        else:

            def body(lo: int, hi: int, step=step, offs=offs) -> int:
                done = 0
                for patch in range(lo // n, (hi - 1) // n + 1):
                    s = max(lo - patch * n, 0)
                    e = min(hi - patch * n, n)
                    _run_step_slice(step, offs, inp, out, scratch, patch, slice(s, e), ctx)
                    done += e - s
                return done

            counts = pool.parallel_for(total, body)
            assert sum(counts) == total
        trace.global_sync_count += 1
        trace.launch_count += 1
        trace.per_step_task_counts.append(total)
    trace.executed_invocation_count = sum(trace.per_step_task_counts)
    return reduced, trace


def _batched_reduce(
    step: StepSpec,
    offs: StepOffsets,
    out: FieldView,
    ctx: TimeStepContext,
    pool: WorkerPool,
    strategy: ReductionStrategy,
    total: int,
    n: int,
) -> float:
    def chunk_values(lo: int, hi: int) -> np.ndarray:
        parts = []
        for patch in range(lo // n, (hi - 1) // n + 1):
            s = max(lo - patch * n, 0)
            e = min(hi - patch * n, n)
            parts.append(mk.reduce_cell_values(out, patch, offs, slice(s, e), ctx))
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    if strategy is ReductionStrategy.SERIAL:
        # Whole scope on a single worker, plain running-max loop per chunk.
        (result,) = pool.parallel_for(
            total, lambda lo, hi: _serial_max(chunk_values(lo, hi)), chunks=1
        )
        return float(result)
    if strategy is ReductionStrategy.GROUP_TREE:
        chunk_maxima = pool.parallel_for(total, lambda lo, hi: _tree_max(chunk_values(lo, hi)))
        return max(
            NEUTRAL_EIGENVALUE, _tree_max(np.array(chunk_maxima, dtype=np.float64))
        )
    holder = _SharedMax()
    pool.parallel_for(total, lambda lo, hi: holder.update(_chunk_max(chunk_values(lo, hi))))
    return holder.value


# ----------------------------------------------------------------------
# patch-wise realization
# ----------------------------------------------------------------------


def run_patchwise(
    plan: KernelPlan,
    inp: FieldView,
    out: FieldView,
    scratch: ScratchArrays,
    ctx: TimeStepContext,
    pool: WorkerPool,
    strategy: ReductionStrategy = ReductionStrategy.GROUP_TREE,
    workgroup_limit: int = 1024,
) -> tuple[float | None, ExecutionTrace]:
    """One parallel region over patches; per patch all steps run in order
    over the union range with masking, synchronizing only at the very end."""
    shape = plan.shape
    union = shape.haloed_cells
    if union > workgroup_limit:
        raise WorkgroupLimitError(
            f"(p+2)^d = {union} exceeds workgroup limit {workgroup_limit}; "
            "the patch must be broken down manually"
        )
    offsets = _all_offsets(plan, inp, out, scratch)
    t = shape.patch_count
    patch_max = np.full(t, NEUTRAL_EIGENVALUE) if plan.with_reduction else None

    def body(lo: int, hi: int) -> int:
        done = 0
        for patch in range(lo, hi):
            # The union-range loop is not materialized: each step touches
            # exactly its unmasked lanes and the masked lanes are accounted
            # for arithmetically below.
            for step, offs in zip(plan.steps, offsets):
                full = slice(0, step.range_size)
                if step.kind.op is StepOp.REDUCE:
                    lane_values = np.full(union, NEUTRAL_EIGENVALUE)
                    lane_values[step.lins_haloed] = mk.reduce_cell_values(
                        out, patch, offs, full, ctx
                    )
                    patch_max[patch] = _strategy_max(lane_values, strategy)
                else:
                    _run_step_slice(step, offs, inp, out, scratch, patch, full, ctx)
                done += step.range_size
        return done

    counts = pool.parallel_for(t, body)
    per_step = [t * s.range_size for s in plan.steps]
    assert sum(counts) == sum(per_step)
    reduced = None
    if plan.with_reduction:
        reduced = max(NEUTRAL_EIGENVALUE, _tree_max(patch_max))
    trace = ExecutionTrace(
        global_sync_count=1,
        per_step_task_counts=per_step,
        masked_invocation_count=t * masked_per_patch(shape, plan.with_reduction),
        executed_invocation_count=sum(per_step),
        launch_count=1,
    )
    return reduced, trace


# ----------------------------------------------------------------------
# task-graph realization
# ----------------------------------------------------------------------


def run_taskgraph(
    plan: KernelPlan,
    inp: FieldView,
    out: FieldView,
    scratch: ScratchArrays,
    ctx: TimeStepContext,
    pool: WorkerPool,
    strategy: ReductionStrategy = ReductionStrategy.GROUP_TREE,
    prebuilt_dag: bool = False,
) -> tuple[float | None, ExecutionTrace]:
    """Execute the per-patch DAG node by node under its edge constraints.

    The DAG is assembled (and validated acyclic) inside this call, so the
    dynamic-assembly cost is part of the kernel runtime; ``prebuilt_dag``
    reuses the plan's DAG and exists for testing only.
    """
    shape = plan.shape
    dag = plan.dag if prebuilt_dag else build_task_graph(shape, plan.with_reduction)
    topological_order(dag)  # cycle detection; must never fire for built DAGs
    offsets = _all_offsets(plan, inp, out, scratch)
    patch_max = (
        np.full(shape.patch_count, NEUTRAL_EIGENVALUE) if plan.with_reduction else None
    )
    node_counts = np.zeros(dag.node_count, dtype=np.int64)

    indegree = list(dag.indegree)
    lock = threading.Lock()
    done = threading.Event()
    state: dict[str, object] = {"remaining": dag.node_count, "error": None}

    def execute(node: int) -> None:
        try:
            patch, si = dag.node_of(node)
            step, offs = plan.steps[si], offsets[si]
            full = slice(0, step.range_size)
            if step.kind.op is StepOp.REDUCE:
                patch_max[patch] = _strategy_max(
                    mk.reduce_cell_values(out, patch, offs, full, ctx), strategy
                )
            else:
                _run_step_slice(step, offs, inp, out, scratch, patch, full, ctx)
            node_counts[node] = step.range_size
        except BaseException as exc:  # surfaced after the final wait
            with lock:
                if state["error"] is None:
                    state["error"] = exc
                state["remaining"] = 0
            done.set()
            return
        ready = []
        with lock:
            state["remaining"] -= 1
            if state["remaining"] == 0:
                done.set()
            for succ in dag.successors[node]:
                indegree[succ] -= 1
                if indegree[succ] == 0:
                    ready.append(succ)
        for succ in ready:
            pool.submit(execute, succ)

    roots = [node for node, deg in enumerate(indegree) if deg == 0]
    for node in roots:
        pool.submit(execute, node)
    done.wait()
    if state["error"] is not None:
        raise state["error"]  # type: ignore[misc]

    reduced = None
    if plan.with_reduction:
        reduced = max(NEUTRAL_EIGENVALUE, _tree_max(patch_max))
    n_steps = len(plan.steps)
    per_step = [
        int(node_counts[si::n_steps].sum()) for si in range(n_steps)
    ]
    trace = ExecutionTrace(
        global_sync_count=1,
        per_step_task_counts=per_step,
        masked_invocation_count=0,
        executed_invocation_count=int(node_counts.sum()),
        launch_count=dag.node_count,
    )
    return reduced, trace
