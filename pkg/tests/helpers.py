"""Shared fixtures-in-spirit for the kernel test modules."""

from __future__ import annotations

import numpy as np

from patchbench.bench import init_field
from patchbench.equations import EulerParameters
from patchbench.kernelgraph import StepKind, StepOp, build_plan
from patchbench.memory import ScatteredPatchSet, allocate_scattered
from patchbench.microkernels import (
    ScratchArrays,
    TimeStepContext,
    accumulate_cell,
    copy_cell,
    eigenvalue_cell,
    flux_cell,
)
from patchbench.patchdata import BatchShape, Layout

DT = 1e-3
H = 1e-1


def make_scratch(shape: BatchShape, layout: Layout = Layout.AOS) -> ScratchArrays:
    flux = [
        np.empty(ScratchArrays.flux_entry_count(shape)) for _ in range(shape.dim)
    ]
    lam = [
        np.empty(ScratchArrays.lambda_entry_count(shape)) for _ in range(shape.dim)
    ]
    return ScratchArrays(shape, layout, flux, lam)


def make_ctx(check: bool = False, gamma: float = 1.4, dt: float = DT, h: float = H):
    return TimeStepContext(dt, h, EulerParameters(gamma), check)


def constant_field(shape: BatchShape, q) -> ScatteredPatchSet:
    """Scattered set with every volume (halo included) holding state q."""
    scattered = allocate_scattered(shape)
    for arr in scattered.inputs:
        arr[:] = np.tile(np.asarray(q, dtype=np.float64), shape.haloed_cells)
    return scattered


def outputs_bytes(scattered: ScatteredPatchSet) -> bytes:
    return b"".join(arr.tobytes() for arr in scattered.outputs)


def telescoping_pairs(shape: BatchShape, seed: int):
    """Single-axis updates on a random field, paired with the boundary-face
    sums they must telescope onto.

    Returns (update_sum, boundary_sum_scaled) tuples, one per
    (axis, patch, unknown): interior faces cancel pairwise, so the interior
    sum of the per-axis update has to equal (dt/h) times the signed sum of
    boundary-face fluxes, up to summation rounding.
    """
    p, n = shape.patch_size, shape.unknowns
    scattered = init_field(shape, seed)
    ctx = make_ctx()
    scale = ctx.dt / ctx.h
    plan = build_plan(shape, False)
    inp, out = scattered.input_view(), scattered.output_view()
    by_kind = {s.kind: s for s in plan.steps}
    pairs = []

    for axis in range(shape.dim):
        scratch = make_scratch(shape)
        copy = by_kind[StepKind(StepOp.COPY)]
        flux_step = by_kind[StepKind(StepOp.FLUX, axis)]
        eig_step = by_kind[StepKind(StepOp.EIGENVALUE, axis)]
        acc = by_kind[StepKind(StepOp.ACCUMULATE, axis)]
        for patch in range(shape.patch_count):
            for i in range(copy.range_size):
                copy_cell(inp, out, patch, copy.lins_haloed[i], copy.lins_interior[i])
            for i in range(flux_step.range_size):
                flux_cell(inp, scratch, patch, flux_step.lins_haloed[i], axis, ctx)
            for i in range(eig_step.range_size):
                eigenvalue_cell(inp, scratch, patch, eig_step.lins_haloed[i], axis, ctx)
            for i in range(acc.range_size):
                accumulate_cell(
                    inp, out, scratch, patch,
                    acc.lins_haloed[i], acc.lins_left[i], acc.lins_right[i],
                    acc.lins_interior[i], axis, ctx,
                )

        fview, lview = scratch.flux_view(axis), scratch.lambda_view(axis)
        for patch in range(shape.patch_count):

            def face(lin_l, lin_v, k):
                w = max(lview.read(patch, lin_l, 0), lview.read(patch, lin_v, 0))
                return 0.5 * (
                    fview.read(patch, lin_l, k) + fview.read(patch, lin_v, k)
                ) - 0.5 * w * (inp.read(patch, lin_v, k) - inp.read(patch, lin_l, k))

            update_sum = np.zeros(n)
            boundary = np.zeros(n)
            for i in range(acc.range_size):
                cell = tuple(acc.cells[i])
                for k in range(n):
                    update_sum[k] += out.read(
                        patch, int(acc.lins_interior[i]), k
                    ) - inp.read(patch, int(acc.lins_haloed[i]), k)
                if cell[axis] == 0:
                    for k in range(n):
                        boundary[k] += face(
                            int(acc.lins_left[i]), int(acc.lins_haloed[i]), k
                        )
                if cell[axis] == p - 1:
                    for k in range(n):
                        boundary[k] -= face(
                            int(acc.lins_haloed[i]), int(acc.lins_right[i]), k
                        )
            for k in range(n):
                pairs.append((update_sum[k], scale * boundary[k]))
    return pairs
