from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from viewshed.grid import (
    Grid,
    GridFormatError,
    TerrainSpec,
    Viewpoint,
    Visibility,
    VisibilityGrid,
    export_pgm,
    generate,
    load_grid,
    load_visibility,
    store_grid,
    store_visibility,
)


def test_load_small_asc(tmp_path):
    p = tmp_path / "g.asc"
    p.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n"
                 "NODATA_value -9999\n1 2\n3 4\n")
    g = load_grid(p)
    assert (g.nrows, g.ncols) == (2, 2)
    assert g.values.ravel().tolist() == [1, 2, 3, 4]


def test_asc_nodata_flagged(tmp_path):
    p = tmp_path / "g.asc"
    p.write_text("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n"
                 "NODATA_value -9999\n5 -9999\n")
    g = load_grid(p)
    assert g.nodata_mask().tolist() == [[False, True]]
    assert VisibilityGrid.like(g).flags[0, 1] == Visibility.NODATA


def test_raw_value_count_mismatch(tmp_path):
    p = tmp_path / "g.raw"
    store_grid(Grid(np.zeros((3, 3))), p)
    data = p.read_bytes()
    p.write_bytes(data[:-4])
    with pytest.raises(GridFormatError, match="value count mismatch"):
        load_grid(p)


def test_asc_value_count_mismatch(tmp_path):
    p = tmp_path / "g.asc"
    p.write_text("ncols 2\nnrows 2\ncellsize 1\n1 2 3\n")
    with pytest.raises(GridFormatError, match="value count mismatch"):
        load_grid(p)


@pytest.mark.parametrize("suffix", [".asc", ".raw"])
def test_round_trip_small(tmp_path, suffix):
    g = Grid(np.array([[1.5, 2.0], [3.25, -4.0]]), cell_spacing=2.5)
    p = tmp_path / f"g{suffix}"
    store_grid(g, p)
    h = load_grid(p)
    assert np.array_equal(h.values, g.values)
    assert h.cell_spacing == g.cell_spacing


@settings(max_examples=40, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e6, 1e6, width=32)),
       st.sampled_from([".asc", ".raw"]))
def test_round_trip_bit_exact(tmp_path_factory, values, suffix):
    g = Grid(values)
    p = tmp_path_factory.mktemp("rt") / f"g{suffix}"
    store_grid(g, p)
    assert np.array_equal(load_grid(p).values, g.values)


def test_store_visibility_tokens(tmp_path):
    vis = VisibilityGrid(np.array([[1, 0, 2]], np.uint8))
    p = tmp_path / "v.asc"
    store_visibility(vis, p)
    body = p.read_text().splitlines()[-1].split()
    assert [float(x) for x in body] == [1.0, 0.0, -9999.0]
    assert load_visibility(p) == vis


def test_store_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        store_grid(Grid(np.zeros((2, 2))), tmp_path / "missing" / "g.asc")


def test_pgm_bytes(tmp_path):
    p = tmp_path / "v.pgm"
    export_pgm(VisibilityGrid(np.array([[1, 0, 2]], np.uint8)), p)
    assert p.read_bytes().endswith(bytes([255, 0, 128]))
    export_pgm(VisibilityGrid(np.ones((2, 2), np.uint8)), p)
    assert p.read_bytes().endswith(bytes([255] * 4))


def test_pgm_empty_path():
    with pytest.raises(OSError):
        export_pgm(VisibilityGrid(np.ones((1, 1), np.uint8)), "")


def test_generate_examples():
    assert np.all(generate(TerrainSpec("flat", 3, 3)).values == 0)
    cone = generate(TerrainSpec("cone_down", 5, 5, slope=1)).values
    assert cone[2, 2] == 0 and cone[0, 0] == -2 and cone[4, 4] == -2
    a = generate(TerrainSpec("random_smooth", 20, 30, seed=7)).values
    b = generate(TerrainSpec("random_smooth", 20, 30, seed=7)).values
    assert np.array_equal(a, b)


def test_grid_rejects_bad_input():
    with pytest.raises(GridFormatError):
        Grid(np.zeros(4))
    with pytest.raises(GridFormatError):
        Grid(np.array([[np.inf]]))
    with pytest.raises(GridFormatError):
        Grid(np.zeros((2, 2)), cell_spacing=0)


def test_viewpoint_validation():
    g = Grid(np.zeros((3, 3))).with_nodata(np.eye(3, dtype=bool))
    with pytest.raises(ValueError):
        Viewpoint(3, 0).validate(g)
    with pytest.raises(ValueError):
        Viewpoint(1, 1).validate(g)
    Viewpoint(0, 1).validate(g)
    assert Viewpoint(0, 1, 2.0).elevation(g) == 2.0
