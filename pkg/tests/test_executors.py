"""Realization equivalence, traces, reductions, worker-pool behavior."""

import numpy as np
import pytest

from helpers import constant_field, make_ctx, make_scratch, outputs_bytes

from patchbench.bench import init_field
from patchbench.equations import EulerParameters, max_eigenvalue
from patchbench.executors import (
    NEUTRAL_EIGENVALUE,
    ReductionStrategy,
    WorkerPool,
    WorkgroupLimitError,
    reduce_max,
    run_batched,
    run_patchwise,
    run_sequential,
    run_taskgraph,
)
from patchbench.kernelgraph import build_plan, invocations_per_patch, masked_per_patch
from patchbench.patchdata import BatchShape

PARALLEL_RUNNERS = {
    "batched": run_batched,
    "patch-wise": run_patchwise,
    "task-graph": run_taskgraph,
}


def run_realization(name, shape, scattered, with_reduction, workers=4,
                    strategy=ReductionStrategy.GROUP_TREE):
    plan = build_plan(shape, with_reduction)
    scratch = make_scratch(shape)
    ctx = make_ctx()
    inp, out = scattered.input_view(), scattered.output_view()
    if name == "sequential":
        return run_sequential(plan, inp, out, scratch, ctx), None
    with WorkerPool(workers) as pool:
        return PARALLEL_RUNNERS[name](plan, inp, out, scratch, ctx, pool, strategy)


@pytest.mark.parametrize("name", sorted(PARALLEL_RUNNERS))
@pytest.mark.parametrize("d,p,t", [(2, 4, 1), (2, 6, 4), (3, 4, 3)])
@pytest.mark.parametrize("with_reduction", [False, True])
def test_realizations_match_sequential_bitwise(name, d, p, t, with_reduction):
    shape = BatchShape(d, p, t)
    base = init_field(shape, seed=17)
    golden = base.clone()
    golden_reduced, _ = run_realization("sequential", shape, golden, with_reduction)
    trial = base.clone()
    reduced, trace = run_realization(name, shape, trial, with_reduction)
    assert outputs_bytes(trial) == outputs_bytes(golden)
    if with_reduction:
        assert np.float64(reduced).tobytes() == np.float64(golden_reduced).tobytes()
    else:
        assert reduced is None and golden_reduced is None
    assert trace.executed_invocation_count == t * invocations_per_patch(
        shape, with_reduction
    )


@pytest.mark.parametrize("strategy", list(ReductionStrategy))
@pytest.mark.parametrize("name", sorted(PARALLEL_RUNNERS))
def test_reduction_strategies_agree_with_sequential(name, strategy):
    shape = BatchShape(2, 4, 3)
    base = init_field(shape, seed=23)
    golden = base.clone()
    golden_reduced, _ = run_realization("sequential", shape, golden, True)
    trial = base.clone()
    reduced, _ = run_realization(name, shape, trial, True, strategy=strategy)
    assert np.float64(reduced).tobytes() == np.float64(golden_reduced).tobytes()


def test_batched_trace_counts():
    shape = BatchShape(3, 4, 2)
    scattered = init_field(shape, seed=1)
    reduced, trace = run_realization("batched", shape, scattered, True)
    assert trace.global_sync_count == 11
    assert trace.launch_count == 11
    assert len(trace.per_step_task_counts) == 11
    # flux steps process T*(p+2)*p^(d-1) volumes
    assert trace.per_step_task_counts[1] == 2 * 6 * 16
    assert trace.masked_invocation_count == 0
    no_red, trace2 = run_realization("batched", shape, scattered.clone(), False)
    assert trace2.global_sync_count == 10 == 1 + 3 * shape.dim


def test_patchwise_trace_counts():
    shape = BatchShape(2, 4, 3)
    scattered = init_field(shape, seed=2)
    _, trace = run_realization("patch-wise", shape, scattered, True)
    assert trace.global_sync_count == 1
    assert trace.launch_count == 1
    assert trace.masked_invocation_count == 3 * masked_per_patch(shape, True)
    # masked fraction of a flux step: 1 - (p+2)p/(p+2)^2 = 1/3 for d=2, p=4
    union = shape.haloed_cells
    flux_executed = trace.per_step_task_counts[1]
    masked_flux = 3 * union - flux_executed
    assert masked_flux / (3 * union) == pytest.approx(1 / 3)


def test_taskgraph_trace_counts():
    shape = BatchShape(3, 4, 2)
    scattered = init_field(shape, seed=3)
    _, trace = run_realization("task-graph", shape, scattered, True)
    assert trace.launch_count == 22
    assert trace.global_sync_count == 1
    assert trace.per_step_task_counts[0] == 2 * 64


def test_executed_counts_identical_across_realizations():
    shape = BatchShape(2, 6, 2)
    counts = set()
    per_step = []
    for name in sorted(PARALLEL_RUNNERS):
        scattered = init_field(shape, seed=4)
        _, trace = run_realization(name, shape, scattered, True)
        counts.add(trace.executed_invocation_count)
        per_step.append(trace.per_step_task_counts)
    assert len(counts) == 1
    assert per_step[0] == per_step[1] == per_step[2]


def test_workgroup_limit():
    shape = BatchShape(3, 12, 1)  # (12+2)^3 = 2744 > 1024
    scattered = init_field(shape, seed=5)
    plan = build_plan(shape, False)
    scratch = make_scratch(shape)
    ctx = make_ctx()
    with WorkerPool(2) as pool:
        with pytest.raises(WorkgroupLimitError):
            run_patchwise(
                plan,
                scattered.input_view(),
                scattered.output_view(),
                scratch,
                ctx,
                pool,
                workgroup_limit=1024,
            )
        # boundary: fires iff strictly above the limit
        reduced, _ = run_patchwise(
            plan,
            scattered.input_view(),
            scattered.output_view(),
            scratch,
            ctx,
            pool,
            workgroup_limit=2744,
        )
    assert reduced is None


@pytest.mark.parametrize("name", sorted(PARALLEL_RUNNERS))
def test_determinism_across_runs_and_worker_counts(name):
    shape = BatchShape(2, 4, 4)
    results = []
    for workers in (1, 3, 7):
        scattered = init_field(shape, seed=6)
        reduced, trace = run_realization(name, shape, scattered, True, workers=workers)
        results.append(
            (
                outputs_bytes(scattered),
                np.float64(reduced).tobytes(),
                trace.executed_invocation_count,
                trace.per_step_task_counts,
            )
        )
    assert results[0] == results[1] == results[2]


def test_taskgraph_scheduling_stress_is_deterministic():
    """Many repetitions under a contended pool: the DAG's disjoint-write
    discipline must make every run bitwise identical."""
    shape = BatchShape(2, 4, 6)
    reference = None
    for _ in range(10):
        scattered = init_field(shape, seed=8)
        reduced, _ = run_realization("task-graph", shape, scattered, True, workers=8)
        snapshot = (outputs_bytes(scattered), np.float64(reduced).tobytes())
        if reference is None:
            reference = snapshot
        assert snapshot == reference


def test_taskgraph_prebuilt_dag_mode():
    shape = BatchShape(2, 4, 2)
    base = init_field(shape, seed=9)
    golden = base.clone()
    run_realization("sequential", shape, golden, True)
    plan = build_plan(shape, True)
    scratch = make_scratch(shape)
    trial = base.clone()
    with WorkerPool(2) as pool:
        reduced, trace = run_taskgraph(
            plan,
            trial.input_view(),
            trial.output_view(),
            scratch,
            make_ctx(),
            pool,
            prebuilt_dag=True,
        )
    assert outputs_bytes(trial) == outputs_bytes(golden)
    assert trace.launch_count == plan.dag.node_count


def test_reduce_max_strategies_agree():
    rng = np.random.default_rng(0)
    values = rng.uniform(0.0, 5.0, size=1001)
    with WorkerPool(4) as pool:
        tree = reduce_max(values, ReductionStrategy.GROUP_TREE)
        shared = reduce_max(values, ReductionStrategy.SHARED_MAX, pool)
        serial = reduce_max(values, ReductionStrategy.SERIAL)
    assert tree == shared == serial == float(np.max(values))


def test_reduce_max_neutral_and_single():
    assert reduce_max(np.array([]), ReductionStrategy.GROUP_TREE) == NEUTRAL_EIGENVALUE
    assert reduce_max(np.array([]), ReductionStrategy.SERIAL) == 0.0
    assert reduce_max(np.array([3.25]), ReductionStrategy.SHARED_MAX) == 3.25


def test_single_cell_patch_reduce():
    shape = BatchShape(2, 2, 1)
    q0 = (1.0, 0.25, -0.5, 2.0)
    scattered = constant_field(shape, q0)
    reduced, _ = run_realization("patch-wise", shape, scattered, True)
    params = EulerParameters()
    assert reduced == max(max_eigenvalue(q0, n, params) for n in range(2))


def test_constant_state_reduction_matches_analytic():
    shape = BatchShape(3, 4, 2)
    q0 = (1.5, 0.3, -0.15, 0.0, 3.0)
    params = EulerParameters()
    expected = max(max_eigenvalue(q0, n, params) for n in range(3))
    for name in ("sequential", "batched", "patch-wise", "task-graph"):
        scattered = constant_field(shape, q0)
        reduced, _ = run_realization(name, shape, scattered, True)
        assert reduced == expected


def test_worker_pool_chunking():
    with WorkerPool(3) as pool:
        spans = pool.parallel_for(10, lambda lo, hi: (lo, hi))
        assert spans == [(0, 4), (4, 7), (7, 10)]
        assert pool.parallel_for(0, lambda lo, hi: 1) == []
        assert pool.parallel_for(2, lambda lo, hi: hi - lo) == [1, 1]
    with pytest.raises(ValueError):
        WorkerPool(0)
