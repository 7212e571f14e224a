"""Data-transfer modes between scattered host patches and batch buffers.

The host side hands the kernel T patches scattered over the heap (one
allocation each, AoS). Three modes emulate how that data reaches the compute
buffers:

* shared   -- compute in place on the scattered allocations through an
              indirection view; no batch buffers, no copies (USM analog).
* copy     -- gather into freshly allocated batch buffers, scatter results
              back, free everything afterwards.
* pooled   -- like copy, but batch and scratch buffers are taken from a
              recycling arena that never frees (managed-memory analog).

Which mode is active never changes what is computed, only where the data
lives; results must stay bitwise identical across modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .microkernels import ScratchArrays
from .patchdata import (
    BatchShape,
    FieldView,
    FlatFieldView,
    Layout,
    PatchBatch,
    ScatteredFieldView,
    offset_table,
)

__all__ = [
    "TransferMode",
    "ShapeMismatchError",
    "ScatteredPatchSet",
    "allocate_scattered",
    "DeviceArena",
    "LaunchBuffers",
    "acquire_buffers",
    "release_buffers",
    "gather_patches",
    "scatter_results",
]


class TransferMode(Enum):
    SHARED = "shared"
    EXPLICIT_COPY = "copy"
    POOLED = "pooled"


class ShapeMismatchError(ValueError):
    """Scattered set and batch disagree on their shape."""


@dataclass
class ScatteredPatchSet:
    """T independently allocated per-patch arrays, AoS, haloed input plus
    interior output."""

    shape: BatchShape
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]

    def __post_init__(self) -> None:
        s = self.shape
        if len(self.inputs) != s.patch_count or len(self.outputs) != s.patch_count:
            raise ShapeMismatchError("patch array count does not match patch_count")
        in_size = s.unknowns * s.haloed_cells
        out_size = s.unknowns * s.interior_cells
        for arr in self.inputs:
            if arr.size != in_size:
                raise ShapeMismatchError(f"input patch has {arr.size} != {in_size} entries")
        for arr in self.outputs:
            if arr.size != out_size:
                raise ShapeMismatchError(f"output patch has {arr.size} != {out_size} entries")

    def input_view(self) -> ScatteredFieldView:
        return ScatteredFieldView(self.inputs, self.shape, haloed=True)

    def output_view(self) -> ScatteredFieldView:
        return ScatteredFieldView(self.outputs, self.shape, haloed=False)

    def clone(self) -> "ScatteredPatchSet":
        return ScatteredPatchSet(
            self.shape,
            [arr.copy() for arr in self.inputs],
            [arr.copy() for arr in self.outputs],
        )


def allocate_scattered(shape: BatchShape) -> ScatteredPatchSet:
    s = shape
    return ScatteredPatchSet(
        shape,
        [np.zeros(s.unknowns * s.haloed_cells) for _ in range(s.patch_count)],
        [np.zeros(s.unknowns * s.interior_cells) for _ in range(s.patch_count)],
    )


class DeviceArena:
    """Buffer source with recycling and allocation accounting.

    ``allocate`` always creates a fresh buffer; ``acquire`` reuses a recycled
    buffer of the same role when one is available. The allocation counter
    only ever counts real allocations, so under pooling it must stay constant
    from the second launch of a given configuration on.
    """

    def __init__(self) -> None:
        self.allocation_count = 0
        self.outstanding_bytes = 0
        self.high_water_bytes = 0
        self._pool: dict[tuple, list[np.ndarray]] = {}

    def allocate(self, count: int) -> np.ndarray:
        buf = np.empty(count, dtype=np.float64)
        self.allocation_count += 1
        self.outstanding_bytes += buf.nbytes
        self.high_water_bytes = max(self.high_water_bytes, self.outstanding_bytes)
        return buf

    def free(self, buf: np.ndarray) -> None:
        self.outstanding_bytes -= buf.nbytes

    def acquire(self, key: tuple, count: int) -> np.ndarray:
        stack = self._pool.get(key)
        if stack:
            return stack.pop()
        return self.allocate(count)

    def recycle(self, key: tuple, buf: np.ndarray) -> None:
        self._pool.setdefault(key, []).append(buf)


@dataclass
class LaunchBuffers:
    """Everything one kernel launch addresses, plus how to give it back."""

    mode: TransferMode
    shape: BatchShape
    layout: Layout
    batch: PatchBatch | None
    scratch: ScratchArrays
    input_view: FieldView
    output_view: FieldView
    pooled: list[tuple[tuple, np.ndarray]] = field(default_factory=list)
    owned: list[np.ndarray] = field(default_factory=list)


def _scratch_keys(shape: BatchShape, layout: Layout) -> list[tuple]:
    s = (shape.dim, shape.patch_size, shape.patch_count, layout.value)
    keys = [("flux", axis) + s for axis in range(shape.dim)]
    keys += [("lambda", axis) + s for axis in range(shape.dim)]
    return keys


def acquire_buffers(
    shape: BatchShape,
    layout: Layout,
    mode: TransferMode,
    arena: DeviceArena,
    scattered: ScatteredPatchSet,
) -> LaunchBuffers:
    """Set up batch/scratch buffers and the field views for one launch.

    Shared mode has no batch buffers at all: the views indirect straight into
    the scattered per-patch arrays (which are AoS, so the layout only matters
    for the temporaries). Scratch is pooled under shared mode as well.
    """
    if scattered.shape != shape:
        raise ShapeMismatchError(f"scattered set is {scattered.shape}, launch wants {shape}")
    flux_size = ScratchArrays.flux_entry_count(shape)
    lambda_size = ScratchArrays.lambda_entry_count(shape)
    sizes = [flux_size] * shape.dim + [lambda_size] * shape.dim

    pooled: list[tuple[tuple, np.ndarray]] = []
    owned: list[np.ndarray] = []
    if mode is TransferMode.EXPLICIT_COPY:
        scratch_bufs = [arena.allocate(n) for n in sizes]
        owned += scratch_bufs
    else:
        keys = _scratch_keys(shape, layout)
        scratch_bufs = [arena.acquire(k, n) for k, n in zip(keys, sizes)]
        pooled += list(zip(keys, scratch_bufs))
    scratch = ScratchArrays(
        shape, layout, scratch_bufs[: shape.dim], scratch_bufs[shape.dim :]
    )

    if mode is TransferMode.SHARED:
        return LaunchBuffers(
            mode,
            shape,
            layout,
            None,
            scratch,
            scattered.input_view(),
            scattered.output_view(),
            pooled,
            owned,
        )

    if mode is TransferMode.EXPLICIT_COPY:
        inp = arena.allocate(shape.input_size)
        out = arena.allocate(shape.output_size)
        owned += [inp, out]
    else:
        in_key = ("input", shape.dim, shape.patch_size, shape.patch_count, layout.value)
        out_key = ("output",) + in_key[1:]
        inp = arena.acquire(in_key, shape.input_size)
        out = arena.acquire(out_key, shape.output_size)
        pooled += [(in_key, inp), (out_key, out)]
    batch = PatchBatch(shape, layout, inp, out)
    return LaunchBuffers(
        mode,
        shape,
        layout,
        batch,
        scratch,
        FlatFieldView(inp, layout, shape, haloed=True),
        FlatFieldView(out, layout, shape, haloed=False),
        pooled,
        owned,
    )


def release_buffers(buffers: LaunchBuffers, arena: DeviceArena) -> None:
    for key, buf in buffers.pooled:
        arena.recycle(key, buf)
    for buf in buffers.owned:
        arena.free(buf)
    buffers.pooled = []
    buffers.owned = []


def gather_patches(src: ScatteredPatchSet, dst: PatchBatch) -> None:
    """Copy T scattered AoS input patches into the batch's layout."""
    if src.shape != dst.shape:
        raise ShapeMismatchError(f"gather from {src.shape} into {dst.shape}")
    shape = dst.shape
    one = BatchShape(shape.dim, shape.patch_size, 1)
    src_offs = offset_table(Layout.AOS, one, haloed=True).ravel()
    dst_table = offset_table(dst.layout, shape, haloed=True).ravel()
    view = FlatFieldView(dst.input, dst.layout, shape, haloed=True)
    for patch, arr in enumerate(src.inputs):
        _, base = view.block(patch)
        dst.input[base + dst_table] = arr[src_offs]


def scatter_results(src: PatchBatch, dst: ScatteredPatchSet) -> None:
    """Copy the batch's interior output back into the scattered AoS patches."""
    if src.shape != dst.shape:
        raise ShapeMismatchError(f"scatter from {src.shape} into {dst.shape}")
    shape = src.shape
    one = BatchShape(shape.dim, shape.patch_size, 1)
    dst_offs = offset_table(Layout.AOS, one, haloed=False).ravel()
    src_table = offset_table(src.layout, shape, haloed=False).ravel()
    view = FlatFieldView(src.output, src.layout, shape, haloed=False)
    for patch, arr in enumerate(dst.outputs):
        _, base = view.block(patch)
        arr[dst_offs] = src.output[base + src_table]
