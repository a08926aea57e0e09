from __future__ import annotations

import bisect

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_case
from viewshed.blockstore import BlockStore
from viewshed.geometry import cell_span
from viewshed.grid import Grid, TerrainSpec, Viewpoint, generate
from viewshed.oracles import vk_viewshed
from viewshed.radial import (
    ActiveStructure,
    InvariantError,
    _enter_sequence,
    band_width_for_budget,
    build_bands,
    min_sector_capacity,
    sector_boundaries,
    sweep_banded,
    sweep_sectored,
)


def test_active_structure_examples():
    a = ActiveStructure([4, 9, 16])
    assert not a.blocked(9, 0.5)
    a.insert(4, 1.0, "x")
    a.insert(16, 0.2, "y")
    assert a.blocked(9, 0.5)
    assert not a.blocked(9, 1.5)
    a.delete(4, "x")
    assert not a.blocked(9, 0.5)
    assert len(a) == 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 30), st.floats(-5, 5),
                          st.integers(0, 3)), max_size=120),
       st.lists(st.tuples(st.integers(0, 31), st.floats(-5, 5)), max_size=40))
def test_active_structure_matches_linear_scan(ops, queries):
    a = ActiveStructure(range(31))
    live: dict[tuple[int, int], float] = {}
    for is_insert, d, key, tag in ops:
        if is_insert and (d, tag) not in live:
            a.insert(d, key, tag)
            live[(d, tag)] = key
        elif not is_insert and (d, tag) in live:
            a.delete(d, tag)
            del live[(d, tag)]
        for qd, qk in queries:
            expect = any(dd < qd and kk >= qk for (dd, _), kk in live.items())
            assert a.blocked(qd, qk) == expect
    assert len(a) == len(live)


def test_band_width_for_budget():
    assert band_width_for_budget(1) == 1
    # (w+1)^2 cells of value and flag, 4 bytes each, within a third of the budget
    assert band_width_for_budget(3 * 2 * 4 * 9) == 2
    assert band_width_for_budget(3 * 2 * 4 * 25 - 1) == 2
    assert band_width_for_budget(3 * 2 * 4 * 25) == 4


def test_build_bands_example():
    g = generate(TerrainSpec("random_smooth", 5, 5, seed=1))
    bands = build_bands(g, Viewpoint(2, 2), 2)
    assert bands.num_bands == 1
    assert len(bands.cells[0]) == 24
    assert bands.cells[0][0] == 2 * 5 + 3


def test_build_bands_partition_and_order(rng):
    for _ in range(20):
        g, vp = random_case(rng, 15, nodata=False)
        w = int(rng.choice([1, 2, 4]))
        bands = build_bands(g, vp, w)
        flat = sorted(c for band in bands.cells for c in band)
        assert flat == [k for k in range(g.size) if k != vp.row * g.ncols + vp.col]
        for band in bands.cells:
            enters = []
            for c in band:
                i, j = divmod(c, g.ncols)
                enters.append(cell_span(j - vp.col, vp.row - i).enter)
            assert enters == sorted(enters)


def test_sector_example():
    g = Grid(np.zeros((9, 9)))
    vp = Viewpoint(4, 4)
    bounds = sector_boundaries(g, vp, 30)
    assert len(bounds) + 1 == 3
    seq = _enter_sequence(g, vp)
    assert len(seq) == 80
    counts = np.bincount([bisect.bisect_right(bounds, a) for a in seq], minlength=3)
    assert counts.sum() == 80 and counts.max() <= 30
    assert sector_boundaries(g, vp, 81) == []


def test_sector_capacity_floor():
    g = Grid(np.zeros((9, 9)))
    k = min_sector_capacity(g, Viewpoint(4, 4))
    assert k == 4
    sector_boundaries(g, Viewpoint(4, 4), k)
    with pytest.raises(ValueError):
        sector_boundaries(g, Viewpoint(4, 4), k - 1)


@pytest.mark.parametrize("kind", ["flat", "cone_down", "cone_up"])
def test_sweeps_on_regular_terrain(kind):
    g = generate(TerrainSpec(kind, 9, 9))
    vp = Viewpoint(4, 4, 0.5)
    ref = vk_viewshed(g, vp)
    assert sweep_banded(g, vp, band_width=2).visibility == ref
    assert sweep_sectored(g, vp, capacity=min_sector_capacity(g, vp)).visibility == ref


def test_sweeps_match_oracle_and_counters(rng):
    for _ in range(40):
        g, vp = random_case(rng, 15)
        ref = vk_viewshed(g, vp)
        layers = vp.max_radius(g)
        for w in (1, 2, 4):
            r = sweep_banded(g, vp, band_width=w)
            assert r.visibility == ref
            assert r.stats.events == 3 * (g.size - 1)
            # a ray crosses at most two cells per layer, plus the pending ENTER and CENTER
            assert r.stats.max_queue <= 4 * max(layers, 1)
            assert r.stats.max_active <= 2 * max(g.nrows, g.ncols)
        for cap in (min_sector_capacity(g, vp), g.size):
            r = sweep_sectored(g, vp, capacity=cap)
            assert r.visibility == ref
            assert r.stats.events == 3 * (g.size - 1)


def test_store_is_transparent(rng):
    g, vp = random_case(rng, 15, nodata=False)
    plain = sweep_banded(g, vp, band_width=2).visibility
    store = BlockStore(g.values.reshape(-1).copy(), 16, 4)
    out = BlockStore.empty(g.size, 16, 4, np.uint8)
    assert sweep_banded(g, vp, band_width=2, store=store, output_store=out).visibility == plain
    assert store.stats.block_loads > 0
    assert np.array_equal(out.data.reshape(g.values.shape), plain.flags)
    store = BlockStore(g.values.reshape(-1).copy(), 16, 4)
    assert sweep_sectored(g, vp, capacity=g.size, store=store).visibility == plain


def test_budget_required():
    g = Grid(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        sweep_banded(g, Viewpoint(1, 1))
    with pytest.raises(ValueError):
        sweep_sectored(g, Viewpoint(1, 1))
    assert issubclass(InvariantError, RuntimeError)
