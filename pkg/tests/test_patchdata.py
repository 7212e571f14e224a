"""Offset enumerators, index flattening, views, batch serialization."""

import numpy as np
import pytest

from patchbench.patchdata import (
    BatchShape,
    FlatFieldView,
    Layout,
    PatchBatch,
    ScatteredFieldView,
    VolumeIndex,
    block_base,
    cell_linear,
    cells_linear,
    dump_batch,
    flatten_index,
    linear_offset,
    load_batch,
    nd_range_shape,
    offset_table,
    unflatten_index,
)


def all_cells(shape, haloed):
    lo = -1 if haloed else 0
    hi = shape.patch_size + 1 if haloed else shape.patch_size
    span = range(lo, hi)
    if shape.dim == 2:
        return [(c0, c1) for c1 in span for c0 in span]
    return [(c0, c1, c2) for c2 in span for c1 in span for c0 in span]


def test_enumerate_examples():
    shape = BatchShape(2, 4, 2)
    assert linear_offset(Layout.AOS, shape, True, VolumeIndex(0, (-1, -1)), 0) == 0
    assert linear_offset(Layout.AOS, shape, True, VolumeIndex(0, (0, -1)), 1) == 5
    assert linear_offset(Layout.SOA, shape, True, VolumeIndex(1, (-1, -1)), 3) == 252


@pytest.mark.parametrize("layout", list(Layout))
@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("p", [4, 6, 8])
@pytest.mark.parametrize("t", [1, 2, 4])
@pytest.mark.parametrize("haloed", [True, False])
def test_enumerate_bijective(layout, d, p, t, haloed):
    """Brute force: every index maps somewhere, no two collide, no gaps."""
    shape = BatchShape(d, p, t)
    m_d = shape.extent(haloed) ** d
    total = shape.unknowns * m_d * t
    seen = np.zeros(total, dtype=bool)
    for patch in range(t):
        for cell in all_cells(shape, haloed):
            for k in range(shape.unknowns):
                off = linear_offset(layout, shape, haloed, VolumeIndex(patch, cell), k)
                assert 0 <= off < total
                assert not seen[off]
                seen[off] = True
    assert seen.all()


def test_aos_adjacency():
    shape = BatchShape(2, 4, 2)
    for cell in [(-1, -1), (0, 0), (4, 4), (2, -1)]:
        for k in range(shape.unknowns - 1):
            v = VolumeIndex(1, cell)
            assert (
                linear_offset(Layout.AOS, shape, True, v, k + 1)
                - linear_offset(Layout.AOS, shape, True, v, k)
                == 1
            )


def test_soa_adjacency():
    shape = BatchShape(2, 4, 2)
    cells = all_cells(shape, True)
    for k in range(shape.unknowns):
        offs = [
            linear_offset(Layout.SOA, shape, True, VolumeIndex(0, c), k) for c in cells
        ]
        assert all(b - a == 1 for a, b in zip(offs, offs[1:]))


def test_offset_table_matches_scalar_enumerator():
    for layout in Layout:
        for haloed in (True, False):
            shape = BatchShape(3, 4, 3)
            table = offset_table(layout, shape, haloed)
            for patch in (0, 2):
                base = block_base(layout, shape, haloed, patch)
                for cell in [(0, 0, 0), (1, 2, 3)] + (
                    [(-1, 0, 4)] if haloed else []
                ):
                    lin = cell_linear(shape, haloed, cell)
                    for k in range(shape.unknowns):
                        assert base + table[k, lin] == linear_offset(
                            layout, shape, haloed, VolumeIndex(patch, cell), k
                        )


def test_cells_linear_matches_scalar():
    shape = BatchShape(3, 6, 1)
    cells = np.array(all_cells(shape, True), dtype=np.int64)
    lins = cells_linear(shape, True, cells)
    assert [cell_linear(shape, True, tuple(c)) for c in cells] == lins.tolist()
    # canonical order is ascending linearization
    assert (np.diff(lins) == 1).all()


def test_bounds_checking():
    shape = BatchShape(2, 4, 2)
    with pytest.raises(IndexError):
        linear_offset(Layout.AOS, shape, False, VolumeIndex(0, (-1, 0)), 0, check=True)
    with pytest.raises(IndexError):
        linear_offset(Layout.AOS, shape, True, VolumeIndex(2, (0, 0)), 0, check=True)
    with pytest.raises(IndexError):
        linear_offset(Layout.AOS, shape, True, VolumeIndex(0, (0, 0)), 4, check=True)
    with pytest.raises(IndexError):
        linear_offset(Layout.AOS, shape, True, VolumeIndex(0, (5, 0)), 0, check=True)


def test_flatten_round_trip_origin():
    shape = BatchShape(2, 4, 1)
    flat = flatten_index(shape, 0, (-1, -1))
    assert flat == 0
    assert unflatten_index(shape, flat) == VolumeIndex(0, (-1, -1))


@pytest.mark.parametrize("d,p,t", [(3, 4, 2), (3, 8, 4), (2, 6, 3)])
def test_flatten_exhaustive_bijection(d, p, t):
    shape = BatchShape(d, p, t)
    total = t * shape.haloed_cells
    flats = []
    for patch in range(t):
        for cell in all_cells(shape, True):
            flat = flatten_index(shape, patch, cell)
            assert unflatten_index(shape, flat) == VolumeIndex(patch, cell)
            flats.append(flat)
    # packed indices are exactly [0, T*(p+2)^d) with no gaps
    assert sorted(flats) == list(range(total))


def test_nd_range_shape_covers_flat_space():
    for d, p, t in [(2, 4, 5), (3, 6, 4)]:
        shape = BatchShape(d, p, t)
        nd = nd_range_shape(shape)
        assert len(nd) <= 3
        assert int(np.prod(nd)) == t * shape.haloed_cells
        # fastest-running nd axis is coordinate 0
        assert nd[-1] == shape.haloed_extent


def test_flat_view_matches_enumerator():
    shape = BatchShape(2, 4, 3)
    for layout in Layout:
        arr = np.arange(shape.input_size, dtype=np.float64)
        view = FlatFieldView(arr, layout, shape, haloed=True)
        for patch in range(3):
            for cell in [(-1, -1), (0, 0), (4, 2)]:
                lin = cell_linear(shape, True, cell)
                for k in range(shape.unknowns):
                    expected = arr[
                        linear_offset(layout, shape, True, VolumeIndex(patch, cell), k)
                    ]
                    assert view.read(patch, lin, k) == expected


def test_scattered_view_is_per_patch_aos():
    shape = BatchShape(2, 4, 2)
    arrays = [
        np.arange(shape.unknowns * shape.haloed_cells, dtype=np.float64) + 1000 * i
        for i in range(2)
    ]
    view = ScatteredFieldView(arrays, shape, haloed=True)
    for patch in range(2):
        for cell in [(-1, -1), (3, 3)]:
            lin = cell_linear(shape, True, cell)
            for k in range(shape.unknowns):
                assert view.read(patch, lin, k) == arrays[patch][lin * shape.unknowns + k]


def test_view_write_and_add():
    shape = BatchShape(2, 4, 1)
    arr = np.zeros(shape.output_size)
    view = FlatFieldView(arr, Layout.SOA, shape, haloed=False)
    view.write(0, 3, 1, 2.5)
    view.add(0, 3, 1, 0.5)
    lin = 3
    assert arr[linear_offset(Layout.SOA, shape, False, VolumeIndex(0, (3, 0)), 1)] == 3.0
    assert view.read(0, lin, 1) == 3.0


def test_batch_size_validation():
    shape = BatchShape(2, 4, 1)
    with pytest.raises(ValueError):
        PatchBatch(shape, Layout.AOS, np.zeros(3), np.zeros(shape.output_size))


def test_dump_load_round_trip(tmp_path):
    shape = BatchShape(3, 4, 2)
    rng = np.random.default_rng(0)
    batch = PatchBatch(
        shape,
        Layout.AOSOA,
        rng.random(shape.input_size),
        rng.random(shape.output_size),
    )
    path = tmp_path / "batch.bin"
    dump_batch(batch, path)
    loaded = load_batch(path)
    assert loaded.shape == shape
    assert loaded.layout is Layout.AOSOA
    assert loaded.input.tobytes() == batch.input.tobytes()
    assert loaded.output.tobytes() == batch.output.tobytes()
    # header is five little-endian int32s
    raw = path.read_bytes()
    assert np.frombuffer(raw[:20], dtype="<i4").tolist() == [3, 4, 5, 2, 2]


def test_shape_validation():
    with pytest.raises(ValueError):
        BatchShape(4, 4, 1)
    with pytest.raises(ValueError):
        BatchShape(2, 1, 1)
    with pytest.raises(ValueError):
        BatchShape(2, 4, 0)
