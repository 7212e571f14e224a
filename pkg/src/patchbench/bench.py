"""Benchmark harness: seeded fields, timed launches, sweeps, CSV emission.

A sweep runs a grid of configurations. Each configuration owns a scattered
patch set filled from a seeded generator, is optionally verified bitwise
against the sequential golden run, then timed over a warm-up launch plus
``samples`` measured launches. Timings split into compute (the kernel
proper, including dynamic task-graph assembly), transfer (gather/scatter)
and allocation (buffer acquire/release); total covers the whole launch.

Field generation uses a 64-bit linear congruential generator
(state <- state * 6364136223846793005 + 1442695040888963407 mod 2^64,
doubles taken from the top 53 bits), so identical seeds give bitwise
identical fields on any platform.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .equations import EulerParameters
from .executors import (
    ExecutionTrace,
    Realization,
    ReductionStrategy,
    WorkerPool,
    run_batched,
    run_patchwise,
    run_sequential,
    run_taskgraph,
)
from .kernelgraph import KernelPlan, build_plan
from .memory import (
    DeviceArena,
    ScatteredPatchSet,
    TransferMode,
    acquire_buffers,
    allocate_scattered,
    gather_patches,
    release_buffers,
    scatter_results,
)
from .microkernels import TimeStepContext
from .patchdata import BatchShape, Layout

__all__ = [
    "CSV_HEADER",
    "Lcg64",
    "BenchConfig",
    "BenchRecord",
    "LaunchResult",
    "VerifyError",
    "init_field",
    "run_launch",
    "verify_against_sequential",
    "run_sweep",
    "emit_csv",
]

CSV_HEADER = [
    "dim",
    "p",
    "T",
    "layout",
    "realization",
    "transfer_mode",
    "reduction_strategy",
    "with_reduction",
    "samples",
    "workers",
    "mean_total_s",
    "mean_compute_s",
    "mean_transfer_s",
    "mean_alloc_s",
    "time_per_volume_update_s",
    "time_per_unknown_update_s",
    "reduced_eigenvalue",
]


class VerifyError(RuntimeError):
    """A realization's output differs from the sequential golden run."""


class Lcg64:
    """64-bit LCG (Knuth's MMIX constants); documented in the README."""

    MULTIPLIER = 6364136223846793005
    INCREMENT = 1442695040888963407
    _MASK = (1 << 64) - 1

    def __init__(self, seed: int) -> None:
        self.state = seed & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state * self.MULTIPLIER + self.INCREMENT) & self._MASK
        return self.state

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)


def init_field(shape: BatchShape, seed: int, gamma: float = 1.4) -> ScatteredPatchSet:
    """Seeded admissible field on a fresh scattered patch set.

    Per patch, per haloed cell in canonical order, the generator draws
    rho in [0.5, 2], the d velocities in [-0.5, 0.5], and the pressure in
    [0.5, 2], in that order, and converts to conserved variables
    (rho, rho*u_i, E = p/(gamma-1) + 0.5*rho*|u|^2). Admissibility holds by
    construction. Outputs start zeroed.
    """
    rng = Lcg64(seed)
    scattered = allocate_scattered(shape)
    d = shape.dim
    n = shape.unknowns
    for arr in scattered.inputs:
        for lin in range(shape.haloed_cells):
            rho = rng.uniform(0.5, 2.0)
            u = [rng.uniform(-0.5, 0.5) for _ in range(d)]
            p = rng.uniform(0.5, 2.0)
            ke = u[0] * u[0] + u[1] * u[1]
            if d == 3:
                ke = ke + u[2] * u[2]
            base = lin * n
            arr[base] = rho
            for i in range(d):
                arr[base + 1 + i] = rho * u[i]
            arr[base + d + 1] = p / (gamma - 1.0) + 0.5 * rho * ke
    return scattered


@dataclass(frozen=True)
class BenchConfig:
    """One point of the sweep grid."""

    dim: int = 2
    patch_size: int = 4
    patch_count: int = 4
    layout: Layout = Layout.AOS
    realization: Realization = Realization.PATCH_WISE
    transfer_mode: TransferMode = TransferMode.POOLED
    reduction_strategy: ReductionStrategy = ReductionStrategy.GROUP_TREE
    with_reduction: bool = True
    samples: int = 16
    workers: int = 4
    gamma: float = 1.4
    dt: float = 1e-3
    h: float = 1e-1
    seed: int = 0
    workgroup_limit: int = 1024

    @property
    def shape(self) -> BatchShape:
        return BatchShape(self.dim, self.patch_size, self.patch_count)

    @property
    def sort_key(self) -> tuple:
        return (
            self.dim,
            self.patch_size,
            self.patch_count,
            self.layout.value,
            self.realization.value,
            self.transfer_mode.value,
            self.reduction_strategy.value,
            self.with_reduction,
            self.samples,
            self.workers,
        )


@dataclass
class LaunchResult:
    total_s: float
    compute_s: float
    transfer_s: float
    alloc_s: float
    reduced: float | None
    trace: ExecutionTrace | None


@dataclass
class BenchRecord:
    config: BenchConfig
    mean_total_s: float
    mean_compute_s: float
    mean_transfer_s: float
    mean_alloc_s: float
    min_total_s: float
    reduced_eigenvalue: float

    @property
    def time_per_volume_update_s(self) -> float:
        shape = self.config.shape
        return self.mean_total_s / (shape.patch_count * shape.interior_cells)

    @property
    def time_per_unknown_update_s(self) -> float:
        shape = self.config.shape
        return self.mean_total_s / (
            shape.patch_count * shape.interior_cells * shape.unknowns
        )


def run_launch(
    plan: KernelPlan,
    scattered: ScatteredPatchSet,
    layout: Layout,
    realization: Realization,
    transfer_mode: TransferMode,
    strategy: ReductionStrategy,
    ctx: TimeStepContext,
    arena: DeviceArena,
    pool: WorkerPool,
    workgroup_limit: int = 1024,
) -> LaunchResult:
    """One full launch: acquire, gather, compute, scatter, release."""
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    buffers = acquire_buffers(plan.shape, layout, transfer_mode, arena, scattered)
    alloc_s = time.perf_counter() - t0

    transfer_s = 0.0
    if transfer_mode is not TransferMode.SHARED:
        t0 = time.perf_counter()
        gather_patches(scattered, buffers.batch)
        transfer_s += time.perf_counter() - t0

    inp, out = buffers.input_view, buffers.output_view
    t0 = time.perf_counter()
    trace: ExecutionTrace | None = None
    if realization is Realization.SEQUENTIAL:
        reduced = run_sequential(plan, inp, out, buffers.scratch, ctx)
    elif realization is Realization.BATCHED:
        reduced, trace = run_batched(plan, inp, out, buffers.scratch, ctx, pool, strategy)
    elif realization is Realization.PATCH_WISE:
        reduced, trace = run_patchwise(
            plan, inp, out, buffers.scratch, ctx, pool, strategy, workgroup_limit
        )
    else:
        reduced, trace = run_taskgraph(plan, inp, out, buffers.scratch, ctx, pool, strategy)
    compute_s = time.perf_counter() - t0

    if transfer_mode is not TransferMode.SHARED:
        t0 = time.perf_counter()
        scatter_results(buffers.batch, scattered)
        transfer_s += time.perf_counter() - t0

    t0 = time.perf_counter()
    release_buffers(buffers, arena)
    alloc_s += time.perf_counter() - t0

    total_s = time.perf_counter() - t_start
    return LaunchResult(total_s, compute_s, transfer_s, alloc_s, reduced, trace)


def _first_mismatch(golden: ScatteredPatchSet, got: ScatteredPatchSet) -> str | None:
    for patch, (a, b) in enumerate(zip(golden.outputs, got.outputs)):
        if a.tobytes() != b.tobytes():
            bad = np.nonzero(~(a == b))[0]
            idx = int(bad[0]) if bad.size else 0
            return f"patch {patch} offset {idx}: golden {a[idx]!r}, got {b[idx]!r}"
    return None


def verify_against_sequential(
    plan: KernelPlan,
    scattered: ScatteredPatchSet,
    config: BenchConfig,
    arena: DeviceArena,
    pool: WorkerPool,
) -> None:
    """Run the configuration once and demand bitwise equality with the
    sequential golden run; raises VerifyError with the first mismatch."""
    params = EulerParameters(config.gamma)
    ctx_checked = TimeStepContext(config.dt, config.h, params, check=True)
    golden = scattered.clone()
    golden_reduced = run_launch(
        plan,
        golden,
        Layout.AOS,
        Realization.SEQUENTIAL,
        TransferMode.SHARED,
        config.reduction_strategy,
        ctx_checked,
        arena,
        pool,
        config.workgroup_limit,
    ).reduced

    trial = scattered.clone()
    ctx = TimeStepContext(config.dt, config.h, params, check=False)
    result = run_launch(
        plan,
        trial,
        config.layout,
        config.realization,
        config.transfer_mode,
        config.reduction_strategy,
        ctx,
        arena,
        pool,
        config.workgroup_limit,
    )
    mismatch = _first_mismatch(golden, trial)
    if mismatch is not None:
        raise VerifyError(f"{config}: output differs from sequential at {mismatch}")
    if plan.with_reduction:
        a = np.float64(golden_reduced).tobytes()
        b = np.float64(result.reduced).tobytes()
        if a != b:
            raise VerifyError(
                f"{config}: reduced eigenvalue {result.reduced!r} != sequential "
                f"{golden_reduced!r}"
            )


def run_sweep(
    configs: Iterable[BenchConfig],
    verify: bool = False,
    log: Callable[[str], None] | None = None,
) -> list[BenchRecord]:
    """Benchmark every configuration; returns records in lexicographic
    configuration order (the CSV row order)."""
    records = []
    ordered = sorted(configs, key=lambda c: c.sort_key)
    for i, config in enumerate(ordered):
        shape = config.shape
        plan = build_plan(shape, config.with_reduction)
        scattered = init_field(shape, config.seed, config.gamma)
        arena = DeviceArena()
        ctx = TimeStepContext(config.dt, config.h, EulerParameters(config.gamma))
        with WorkerPool(config.workers) as pool:
            if verify:
                verify_against_sequential(plan, scattered, config, arena, pool)
            launch = lambda: run_launch(
                plan,
                scattered,
                config.layout,
                config.realization,
                config.transfer_mode,
                config.reduction_strategy,
                ctx,
                arena,
                pool,
                config.workgroup_limit,
            )
            launch()  # warm-up; also primes the pooled arena
            results = [launch() for _ in range(config.samples)]
        n = len(results)
        reduced = results[-1].reduced
        record = BenchRecord(
            config,
            mean_total_s=sum(r.total_s for r in results) / n,
            mean_compute_s=sum(r.compute_s for r in results) / n,
            mean_transfer_s=sum(r.transfer_s for r in results) / n,
            mean_alloc_s=sum(r.alloc_s for r in results) / n,
            min_total_s=min(r.total_s for r in results),
            reduced_eigenvalue=0.0 if reduced is None else reduced,
        )
        records.append(record)
        if log is not None:
            log(
                f"[{i + 1}/{len(ordered)}] d={config.dim} p={config.patch_size} "
                f"T={config.patch_count} {config.layout.value} {config.realization.value} "
                f"{config.transfer_mode.value} red={'on' if config.with_reduction else 'off'}"
                f" mean_total={record.mean_total_s:.3e}s"
            )
    return records


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def emit_csv(records: Sequence[BenchRecord], path: str, extended: bool = False) -> None:
    """Write records in the stable schema; floats carry 17 significant
    digits so they round-trip exactly."""
    header = list(CSV_HEADER) + (["min_total_s"] if extended else [])
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for rec in records:
                c = rec.config
                row = [
                    c.dim,
                    c.patch_size,
                    c.patch_count,
                    c.layout.value,
                    c.realization.value,
                    c.transfer_mode.value,
                    c.reduction_strategy.value,
                    "true" if c.with_reduction else "false",
                    c.samples,
                    c.workers,
                    _fmt(rec.mean_total_s),
                    _fmt(rec.mean_compute_s),
                    _fmt(rec.mean_transfer_s),
                    _fmt(rec.mean_alloc_s),
                    _fmt(rec.time_per_volume_update_s),
                    _fmt(rec.time_per_unknown_update_s),
                    _fmt(rec.reduced_eigenvalue),
                ]
                if extended:
                    row.append(_fmt(rec.min_total_s))
                writer.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write benchmark CSV to {path}: {exc}") from exc
