"""Patch-batch storage: shapes, memory layouts, and offset enumerators.

A batch holds T patches of p^d finite volumes. Input carries a halo layer of
one volume on every side ((p+2)^d volumes per patch), output is interior
only (p^d volumes). Three layouts order the N unknowns in memory:

    AoS    unknown fastest-running within a volume
    SoA    unknown slowest-running across the whole batch
    AoSoA  per-patch SoA blocks stored patch after patch

Coordinate 0 is the fastest-running spatial index everywhere; cell
coordinates run over [-1, p] on haloed grids and [0, p) on interior grids.
The enumerators below are the single source of truth for where a
(patch, cell, unknown) triple lives; kernels never do their own pointer
arithmetic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "Layout",
    "BatchShape",
    "VolumeIndex",
    "PatchBatch",
    "cell_linear",
    "cells_linear",
    "linear_offset",
    "offset_table",
    "block_base",
    "flatten_index",
    "unflatten_index",
    "nd_range_shape",
    "FieldView",
    "FlatFieldView",
    "ScatteredFieldView",
    "dump_batch",
    "load_batch",
]


class Layout(Enum):
    """Memory-order tag for batch arrays."""

    AOS = "aos"
    SOA = "soa"
    AOSOA = "aosoa"


_LAYOUT_CODES = {Layout.AOS: 0, Layout.SOA: 1, Layout.AOSOA: 2}
_LAYOUT_FROM_CODE = {v: k for k, v in _LAYOUT_CODES.items()}


@dataclass(frozen=True)
class BatchShape:
    """Dimensions of one patch batch: d, volumes per axis p, patch count T."""

    dim: int
    patch_size: int
    patch_count: int

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.patch_size < 2:
            raise ValueError(f"patch_size must be >= 2, got {self.patch_size}")
        if self.patch_count < 1:
            raise ValueError(f"patch_count must be >= 1, got {self.patch_count}")

    @property
    def unknowns(self) -> int:
        return self.dim + 2

    @property
    def haloed_extent(self) -> int:
        return self.patch_size + 2

    @property
    def haloed_cells(self) -> int:
        return self.haloed_extent**self.dim

    @property
    def interior_cells(self) -> int:
        return self.patch_size**self.dim

    @property
    def input_size(self) -> int:
        return self.unknowns * self.haloed_cells * self.patch_count

    @property
    def output_size(self) -> int:
        return self.unknowns * self.interior_cells * self.patch_count

    def extent(self, haloed: bool) -> int:
        return self.haloed_extent if haloed else self.patch_size


class VolumeIndex(NamedTuple):
    """One volume of one patch: patch number plus d-tuple cell coordinate."""

    patch: int
    cell: tuple[int, ...]


def _check_cell(shape: BatchShape, haloed: bool, cell: Sequence[int]) -> None:
    if len(cell) != shape.dim:
        raise IndexError(f"cell {tuple(cell)} is not {shape.dim}-dimensional")
    lo = -1 if haloed else 0
    hi = shape.patch_size if haloed else shape.patch_size - 1
    for c in cell:
        if not lo <= c <= hi:
            raise IndexError(f"cell coordinate {c} outside [{lo}, {hi}]")


def cell_linear(shape: BatchShape, haloed: bool, cell: Sequence[int]) -> int:
    """Linearize a cell coordinate, coordinate 0 fastest-running."""
    m = shape.extent(haloed)
    shift = 1 if haloed else 0
    lin = 0
    for k in range(shape.dim - 1, -1, -1):
        lin = lin * m + (cell[k] + shift)
    return lin


def cells_linear(shape: BatchShape, haloed: bool, cells: np.ndarray) -> np.ndarray:
    """Vectorized :func:`cell_linear` for an (n, d) array of coordinates."""
    m = shape.extent(haloed)
    shift = 1 if haloed else 0
    lin = np.zeros(len(cells), dtype=np.int64)
    for k in range(shape.dim - 1, -1, -1):
        lin = lin * m + (cells[:, k] + shift)
    return lin


def linear_offset(
    layout: Layout,
    shape: BatchShape,
    haloed: bool,
    v: VolumeIndex,
    unknown: int,
    check: bool = False,
) -> int:
    """Storage offset of (patch, cell, unknown) in a flat batch array.

    Bijective from the full index domain onto [0, N * m^d * T) for every
    layout, with m = p+2 (haloed) or p (interior).
    """
    if check:
        if not 0 <= v.patch < shape.patch_count:
            raise IndexError(f"patch {v.patch} outside [0, {shape.patch_count})")
        if not 0 <= unknown < shape.unknowns:
            raise IndexError(f"unknown {unknown} outside [0, {shape.unknowns})")
        _check_cell(shape, haloed, v.cell)
    m_d = shape.extent(haloed) ** shape.dim
    lin = cell_linear(shape, haloed, v.cell)
    n = shape.unknowns
    if layout is Layout.AOS:
        return (v.patch * m_d + lin) * n + unknown
    if layout is Layout.SOA:
        return unknown * (shape.patch_count * m_d) + v.patch * m_d + lin
    return v.patch * (n * m_d) + unknown * m_d + lin


def block_base(layout: Layout, shape: BatchShape, haloed: bool, patch: int) -> int:
    """Offset of patch's first element relative to the batch array start."""
    m_d = shape.extent(haloed) ** shape.dim
    if layout is Layout.SOA:
        return patch * m_d
    return patch * (shape.unknowns * m_d)


def offset_table(
    layout: Layout, shape: BatchShape, haloed: bool, unknowns: int | None = None
) -> np.ndarray:
    """Within-block offsets as an (unknowns, m^d) table indexed by (k, lin).

    ``linear_offset(...) == block_base(patch) + offset_table()[k, lin]`` holds
    for all layouts because the patch index only ever contributes a per-patch
    base. The table is shared between the scalar and vectorized access paths.
    """
    n = shape.unknowns if unknowns is None else unknowns
    m_d = shape.extent(haloed) ** shape.dim
    k = np.arange(n, dtype=np.int64)[:, None]
    lin = np.arange(m_d, dtype=np.int64)[None, :]
    if layout is Layout.AOS:
        table = lin * n + k
    elif layout is Layout.SOA:
        table = k * (shape.patch_count * m_d) + lin
    else:
        table = k * m_d + lin
    table.setflags(write=False)
    return table


def flatten_index(shape: BatchShape, patch: int, cell: Sequence[int]) -> int:
    """Pack (patch, haloed cell) into one flat integer, coordinate 0 fastest."""
    return patch * shape.haloed_cells + cell_linear(shape, True, cell)


def unflatten_index(shape: BatchShape, flat: int) -> VolumeIndex:
    """Inverse of :func:`flatten_index`."""
    m = shape.haloed_extent
    patch, lin = divmod(flat, shape.haloed_cells)
    cell = []
    for _ in range(shape.dim):
        lin, c = divmod(lin, m)
        cell.append(c - 1)
    return VolumeIndex(patch, tuple(cell))


def nd_range_shape(shape: BatchShape) -> tuple[int, ...]:
    """At most 3 axes covering patch x haloed cube, slowest axis first.

    Index spaces with more than three dimensions are folded into the leading
    axis so that the fastest-running axis stays coordinate 0 and strided
    accesses remain contiguous under the enumerators.
    """
    m = shape.haloed_extent
    if shape.dim == 2:
        return (shape.patch_count, m, m)
    return (shape.patch_count * m, m, m)


@dataclass
class PatchBatch:
    """Flat input (haloed) and output (interior) arrays under one layout."""

    shape: BatchShape
    layout: Layout
    input: np.ndarray
    output: np.ndarray

    def __post_init__(self) -> None:
        if self.input.size != self.shape.input_size:
            raise ValueError(
                f"input has {self.input.size} entries, expected {self.shape.input_size}"
            )
        if self.output.size != self.shape.output_size:
            raise ValueError(
                f"output has {self.output.size} entries, expected {self.shape.output_size}"
            )


class FieldView:
    """Uniform access to one logical field of a batch.

    A view hides whether the field lives in a single flat array (gathered
    batch or scratch) or in T scattered per-patch allocations. ``block``
    returns the backing array plus the patch's base offset; ``offsets``
    returns the patch-independent (unknowns, n_cells) within-block offsets
    for a set of linearized cells.
    """

    shape: BatchShape
    haloed: bool
    unknowns: int

    def __init__(self, shape: BatchShape, haloed: bool, unknowns: int) -> None:
        self.shape = shape
        self.haloed = haloed
        self.unknowns = unknowns

    def block(self, patch: int) -> tuple[np.ndarray, int]:
        raise NotImplementedError

    def offsets(self, lins: np.ndarray) -> np.ndarray:
        """Within-block offsets, shape (unknowns, len(lins))."""
        return self._table[:, lins]

    # scalar path -----------------------------------------------------

    def read(self, patch: int, lin: int, unknown: int) -> float:
        arr, base = self.block(patch)
        return float(arr[base + self._table[unknown, lin]])

    def write(self, patch: int, lin: int, unknown: int, value: float) -> None:
        arr, base = self.block(patch)
        arr[base + self._table[unknown, lin]] = value

    def add(self, patch: int, lin: int, unknown: int, value: float) -> None:
        arr, base = self.block(patch)
        off = base + self._table[unknown, lin]
        arr[off] = arr[off] + value


class FlatFieldView(FieldView):
    """Field stored in one contiguous batch array under a layout."""

    def __init__(
        self,
        array: np.ndarray,
        layout: Layout,
        shape: BatchShape,
        haloed: bool,
        unknowns: int | None = None,
    ) -> None:
        super().__init__(shape, haloed, unknowns or shape.unknowns)
        expected = self.unknowns * shape.extent(haloed) ** shape.dim * shape.patch_count
        if array.size != expected:
            raise ValueError(f"array has {array.size} entries, expected {expected}")
        self.array = array
        self.layout = layout
        self._table = offset_table(layout, shape, haloed, self.unknowns)
        m_d = shape.extent(haloed) ** shape.dim
        self._base_stride = m_d if layout is Layout.SOA else self.unknowns * m_d

    def block(self, patch: int) -> tuple[np.ndarray, int]:
        return self.array, patch * self._base_stride


class ScatteredFieldView(FieldView):
    """Field stored as T independent per-patch AoS arrays."""

    def __init__(
        self, arrays: Sequence[np.ndarray], shape: BatchShape, haloed: bool
    ) -> None:
        super().__init__(shape, haloed, shape.unknowns)
        if len(arrays) != shape.patch_count:
            raise ValueError(
                f"{len(arrays)} patch arrays for patch_count {shape.patch_count}"
            )
        self.arrays = list(arrays)
        one_patch = BatchShape(shape.dim, shape.patch_size, 1)
        self._table = offset_table(Layout.AOS, one_patch, haloed, shape.unknowns)

    def block(self, patch: int) -> tuple[np.ndarray, int]:
        return self.arrays[patch], 0


def dump_batch(batch: PatchBatch, path: str | Path) -> None:
    """Write a batch as (d, p, N, T, layout) int32 header plus raw doubles.

    All values little-endian; input array first, then output.
    """
    s = batch.shape
    header = struct.pack(
        "<5i", s.dim, s.patch_size, s.unknowns, s.patch_count, _LAYOUT_CODES[batch.layout]
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(batch.input, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(batch.output, dtype="<f8").tobytes())


def load_batch(path: str | Path) -> PatchBatch:
    """Inverse of :func:`dump_batch`."""
    with open(path, "rb") as f:
        d, p, n, t, code = struct.unpack("<5i", f.read(20))
        shape = BatchShape(d, p, t)
        if n != shape.unknowns:
            raise ValueError(f"header unknown count {n} != d+2 = {shape.unknowns}")
        raw = f.read()
    expected = (shape.input_size + shape.output_size) * 8
    if len(raw) != expected:
        raise ValueError(f"payload of {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f8")
    inp = data[: shape.input_size].astype(np.float64)
    out = data[shape.input_size :].astype(np.float64)
    return PatchBatch(shape, _LAYOUT_FROM_CODE[code], inp, out)
