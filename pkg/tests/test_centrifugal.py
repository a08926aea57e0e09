from __future__ import annotations

import csv
from itertools import product

import numpy as np
from hypothesis import given, settings, strategies as st

from conftest import random_case
from viewshed.blockstore import BlockStore
from viewshed.centrifugal import (
    centrifugal_sweep,
    disagreement_report,
    export_slots_csv,
    precedence_violations,
    slot_count,
    slot_span,
    visit_order,
)
from viewshed.geometry import ring_offsets
from viewshed.grid import TerrainSpec, Viewpoint, Visibility, generate
from viewshed.oracles import vk_viewshed


def test_slot_span_due_east_wraps():
    assert slot_count(11, 11, 5, 5) == 160
    assert slot_span(5, 0, 160) == [(157, 159), (0, 2)]


def test_narrow_cell_spans_one_slot():
    # at distance 50 a cell subtends about 0.02 rad, a 32-slot ring slot 0.196 rad
    assert slot_span(50, 3, 32) == [(0, 0)]
    assert len(slot_span(50, 0, 32)) == 2


def test_layer_spans_cover_all_slots():
    n = slot_count(41, 41, 20, 20)
    for l in (1, 2, 7, 20):
        seen = np.zeros(n, bool)
        for dx, dy in zip(*ring_offsets(l)):
            for a, b in slot_span(int(dx), int(dy), n):
                seen[a:b + 1] = True
        assert seen.all()


@given(st.integers(1, 12), st.integers(1, 12), st.data())
@settings(max_examples=60, deadline=None)
def test_visit_order_is_permutation_from_viewpoint(nrows, ncols, data):
    vr = data.draw(st.integers(0, nrows - 1))
    vc = data.draw(st.integers(0, ncols - 1))
    order = visit_order(nrows, ncols, vr, vc)
    assert order[0] == vr * ncols + vc
    assert np.array_equal(np.sort(order), np.arange(nrows * ncols))
    assert np.array_equal(order, visit_order(nrows, ncols, vr, vc))


def test_star_shape_sample():
    for vr, vc in [(0, 0), (8, 8), (0, 5), (3, 14), (16, 9), (11, 2)]:
        order = visit_order(17, 17, vr, vc)
        assert precedence_violations(17, 17, vr, vc, order) == 0
    for shape, v in [((9, 23), (4, 20)), ((30, 5), (27, 1))]:
        order = visit_order(*shape, *v)
        assert precedence_violations(*shape, *v, order) == 0


def test_flat_and_cone_patterns():
    # equal keys never pass the strict test once a slot has been raised
    flat = centrifugal_sweep(generate(TerrainSpec("flat", 5, 5)), Viewpoint(2, 2))
    vis = flat.visibility.flags == Visibility.VISIBLE
    plus = np.zeros((5, 5), bool)
    plus[2, 1:4] = plus[1:4, 2] = True
    assert np.array_equal(vis, plus)
    cone = centrifugal_sweep(generate(TerrainSpec("cone_down", 5, 5)), Viewpoint(2, 2))
    box = np.zeros((5, 5), bool)
    box[1:4, 1:4] = True
    assert np.array_equal(cone.visibility.flags == Visibility.VISIBLE, box)


def test_slots_are_monotone():
    g = generate(TerrainSpec("random_smooth", 40, 40, seed=3))
    vp = Viewpoint(12, 30, 2.0)
    a = centrifugal_sweep(g, vp).slots
    # rerunning on a prefix of the visit order can only leave slots lower
    cut = g.values.copy()
    order = visit_order(40, 40, 12, 30)
    cut.reshape(-1)[order[800:]] = cut.min() - 1e4
    b = centrifugal_sweep(type(g)(cut), vp).slots
    assert np.all(b <= a)


def test_wall_matches_reference_up_to_slot_width():
    g = generate(TerrainSpec("wall", 33, 33))
    for vp in (Viewpoint(16, 16), Viewpoint(3, 28, 1.0)):
        res = centrifugal_sweep(g, vp)
        rep = disagreement_report(g, vp, res, vk_viewshed(g, vp))
        assert rep.explained
        assert rep.fraction <= 0.05


def test_store_transparency_and_counters(rng):
    for _ in range(8):
        g, vp = random_case(rng, 30)
        plain = centrifugal_sweep(g, vp)
        store = BlockStore(g.values.reshape(-1).copy(), 16, 8)
        out = BlockStore.empty(g.size, 16, 8, np.uint8)
        res = centrifugal_sweep(g, vp, store=store, output_store=out)
        assert res.visibility == plain.visibility
        assert np.array_equal(out.data.reshape(g.values.shape), plain.visibility.flags)
        assert res.stats.max_raises_per_layer_slot <= 8
        assert res.visibility.flags[vp.row, vp.col] in (Visibility.VISIBLE, Visibility.NODATA)


def test_slots_csv(tmp_path):
    res = centrifugal_sweep(generate(TerrainSpec("cone_up", 9, 9)), Viewpoint(4, 4))
    p = tmp_path / "slots.csv"
    export_slots_csv(res.slots, p)
    rows = list(csv.reader(p.open()))
    assert rows[0] == ["slot", "key"]
    assert len(rows) == 1 + res.stats.slots
    assert np.allclose([float(r[1]) for r in rows[1:]], res.slots)


def test_raises_linear_on_square_grids():
    for n, kind in product((33, 65), ("random_iid", "random_smooth", "cone_up")):
        g = generate(TerrainSpec(kind, n, n, seed=1))
        st_ = centrifugal_sweep(g, Viewpoint(n // 2, n // 2)).stats
        assert st_.slot_raises <= 4 * g.size
        assert st_.max_raises_per_layer_slot <= 4
