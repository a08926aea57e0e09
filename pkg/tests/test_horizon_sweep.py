from __future__ import annotations

import csv

import numpy as np
import pytest

from conftest import random_case
from viewshed.blockstore import BlockStore
from viewshed.geometry import LOSModel, ring_offsets, screen_t
from viewshed.grid import Grid, TerrainSpec, Viewpoint, Visibility, generate
from viewshed.horizon_sweep import (
    build_bands_rowmajor,
    collect_bands_rowmajor,
    compute_band_boundaries,
    layer_horizon,
    layer_sizes,
    vis_dac,
    vis_iter,
)
from viewshed.oracles import r3_viewshed


def test_band_boundaries_examples():
    sizes = [8 * l for l in range(1, 9)]
    assert compute_band_boundaries(sizes, 100) == [(1, 4), (5, 6), (7, 7), (8, 8)]
    assert compute_band_boundaries(sizes, sum(sizes)) == [(1, 8)]
    assert compute_band_boundaries(sizes, 1) == [(l, l) for l in range(1, 9)]


def test_build_collect_inverse_and_layers():
    g = Grid(np.arange(9 * 7, dtype=float).reshape(9, 7))
    vp = Viewpoint(3, 5)
    ranges = compute_band_boundaries(layer_sizes(g, vp)[1:], 12)
    bands = build_bands_rowmajor(g, vp, ranges)
    for (lo, hi), cells, elev in zip(bands.ranges, bands.cells, bands.elevations):
        i, j = np.divmod(cells, g.ncols)
        layer = np.maximum(np.abs(i - vp.row), np.abs(j - vp.col))
        assert np.all((layer >= lo) & (layer <= hi))
        assert np.all(np.diff(cells) > 0)
        assert np.array_equal(elev, g.values.reshape(-1)[cells])
    payload = [(c % 2).astype(np.uint8) for c in bands.cells]
    out = collect_bands_rowmajor(g, bands, payload, vp).flags.reshape(-1)
    for cells, fl in zip(bands.cells, payload):
        assert np.array_equal(out[cells], fl)


def test_build_bands_single_pass():
    g = generate(TerrainSpec("random_smooth", 64, 64, seed=2))
    store = BlockStore(g.values.reshape(-1).copy(), 100, 4)
    ranges = compute_band_boundaries(layer_sizes(g, Viewpoint(20, 40))[1:], 500)
    build_bands_rowmajor(g, Viewpoint(20, 40), ranges, store)
    assert store.stats.block_loads == -(-g.size // 100)


@pytest.mark.parametrize("model", list(LOSModel))
def test_flat_layer_horizon(model):
    g = generate(TerrainSpec("flat", 21, 21))
    for l in (1, 4, 10):
        hz = layer_horizon(g, Viewpoint(10, 10), l, model)
        assert len(hz) <= 8 * l + 1
        assert np.all(hz.h == 0) and hz.t[0] == 0 and hz.t[-1] == 4


def test_spike_layer_horizon_is_tent():
    z = np.zeros((9, 9))
    z[1, 6] = 6.0  # layer 3 point at offset (2, 3)
    g = Grid(z)
    hz = layer_horizon(g, Viewpoint(4, 4), 3, LOSModel.LAYERS)
    dx, dy = ring_offsets(3)
    t_ring = np.sort(screen_t(dx, dy))
    k = int(np.searchsorted(t_ring, screen_t(2, 3)))
    peak = 6.0 / 5.0
    x = np.linspace(t_ring[k - 1], t_ring[k + 1], 201)
    want = np.interp(x, t_ring[k - 1:k + 2], [0.0, peak, 0.0])
    assert np.allclose(hz.evaluate(x), want, atol=1e-12)
    assert hz.evaluate([0.1, 3.9]).tolist() == [0.0, 0.0]


def test_equivalence_with_oracle(rng):
    for _ in range(60):
        g, vp = random_case(rng, 21)
        for model in LOSModel:
            ref = r3_viewshed(g, vp, model)
            cap = int(rng.choice([8 * max(g.nrows, g.ncols), g.size]))
            assert vis_iter(g, vp, model, capacity=cap).visibility == ref
            assert vis_dac(g, vp, model, capacity=cap).visibility == ref


def test_flat_final_horizon_is_tiny():
    g = generate(TerrainSpec("flat", 33, 33))
    r = vis_iter(g, Viewpoint(16, 16), LOSModel.GRIDLINES)
    assert r.visibility.count(Visibility.VISIBLE) == 33 * 33
    assert r.stats.cumulative_sizes[-1] <= 4


def _combs(n):
    c = n // 2
    ii, jj = np.indices((n, n))
    d = np.maximum(abs(ii - c), abs(jj - c)).astype(float)
    rng = np.random.default_rng(4)
    return {
        "checker": ((ii + jj) % 2) * d,
        "rows": (ii % 2) * d,
        "diagonal": ((ii - jj) % 3 == 0) * 2 * d,
        "iid": rng.uniform(0, 100, (n, n)),
    }


@pytest.mark.parametrize("model", list(LOSModel))
def test_cumulative_horizon_quadratic(model):
    for z in _combs(65).values():
        s = vis_iter(Grid(z), Viewpoint(32, 32, 1.0), model).stats
        l = np.array(s.layers)
        assert np.all(np.array(s.cumulative_sizes) <= 16 * l**2)


def test_layer_horizon_growth_is_linear():
    for z in _combs(65).values():
        s = vis_iter(Grid(z), Viewpoint(32, 32, 1.0), LOSModel.LAYERS).stats
        l = np.array(s.layers)
        size = np.array(s.layer_sizes)
        assert np.all(size <= 8 * l + 8)
        slope = np.polyfit(l, size, 1)[0]
        assert 4 <= slope <= 12


def test_stats_csv_and_output_store(tmp_path, rng):
    g, vp = random_case(rng, 17, nodata=False)
    out = BlockStore.empty(g.size, 32, 4, np.uint8)
    r = vis_dac(g, vp, LOSModel.LAYERS, store=BlockStore(g.values.reshape(-1).copy(), 32, 4),
                output_store=out)
    assert np.array_equal(out.data.reshape(g.values.shape), r.visibility.flags)
    p = tmp_path / "h.csv"
    r.stats.to_csv(p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["layer", "points", "full_layer", "layer_horizon_vertices",
                       "cumulative_horizon_vertices"]
    assert len(rows) == 1 + vp.max_radius(g)
