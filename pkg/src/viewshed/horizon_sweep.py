"""Layer-by-layer viewsheds on interpolated terrain.

Layers are processed outward. Each layer's points are tested against the
horizon of everything closer, then the layer's own silhouette is merged
into that horizon. Under the GRIDLINES model a layer also contributes the
grid edges that connect it to the previous layer; a point is tested against
those connectors as well, since its line of sight crosses them just before
reaching it.

`vis_iter` grows the horizon one layer at a time. `vis_dac` splits each band
of layers recursively and merges balanced halves. Both read layers from
bands of at most ``K`` points that are built in one row-major pass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blockstore import BlockStore
from .geometry import LOSModel, ring_offsets, screen_t
from .grid import Grid, Viewpoint, Visibility, VisibilityGrid, check_inputs
from .horizon import Horizon, merge, occluded

BYTES_PER_VALUE = 4


# ---------------------------------------------------------------------------
# bands


def layer_sizes(grid: Grid, vp: Viewpoint) -> np.ndarray:
    """In-grid point count of each layer; index 0 is the viewpoint."""
    di = np.abs(np.arange(grid.nrows) - vp.row)
    dj = np.abs(np.arange(grid.ncols) - vp.col)
    lay = np.maximum(di[:, None], dj[None, :]).ravel()
    return np.bincount(lay, minlength=vp.max_radius(grid) + 1)


def compute_band_boundaries(sizes, capacity: int) -> list[tuple[int, int]]:
    """Greedily pack consecutive layers into bands of at most ``capacity`` points.

    ``sizes[l - 1]`` is the size of layer ``l``. Returns inclusive
    ``(first, last)`` layer ranges. A layer larger than ``capacity`` still
    forms a band of its own.
    """
    if capacity < 1:
        raise ValueError("band capacity must be at least 1")
    bands: list[tuple[int, int]] = []
    start, total = 1, 0
    for l, s in enumerate(sizes, start=1):
        s = int(s)
        if total + s > capacity and total > 0:
            bands.append((start, l - 1))
            start, total = l, 0
        total += s
    if start <= len(sizes):
        bands.append((start, len(sizes)))
    return bands


def band_capacity_for_budget(memory_budget: int) -> int:
    """Points per band when a band's elevations and flags use a third of memory."""
    return max(memory_budget // 3 // (2 * BYTES_PER_VALUE), 1)


@dataclass
class LayerBands:
    """Band contents in row-major order.

    ``cells[k]`` lists the flat grid indices of band ``k`` (ascending) and
    ``elevations[k]`` the matching values; a point's position inside a band
    is found by binary search on ``cells[k]``.
    """

    ranges: list[tuple[int, int]]
    cells: list[np.ndarray]
    elevations: list[np.ndarray]
    layer_band: np.ndarray  # band index per layer (index 0 unused)

    skip: int = -1  # flat index left out of a band that covers the whole grid

    def lookup(self, layer: int, flat: np.ndarray) -> tuple[int, np.ndarray]:
        b = int(self.layer_band[layer])
        if self.skip >= 0:
            return b, flat - (flat > self.skip)
        return b, np.searchsorted(self.cells[b], flat)


def build_bands_rowmajor(grid: Grid, vp: Viewpoint, ranges: list[tuple[int, int]],
                         store: BlockStore | None = None) -> LayerBands:
    """One sequential pass over the grid, distributing values into bands."""
    nrows, ncols = grid.values.shape
    m = vp.max_radius(grid)
    layer_band = np.full(m + 1, -1, dtype=np.int64)
    for b, (lo, hi) in enumerate(ranges):
        layer_band[lo : hi + 1] = b
    if store is not None:
        vals = store.read_range(0, nrows * ncols)
    else:
        vals = grid.values.ravel()
    di = np.abs(np.arange(nrows) - vp.row)
    dj = np.abs(np.arange(ncols) - vp.col)
    lay = np.maximum(di[:, None], dj[None, :]).ravel()
    bidx = layer_band[lay]
    bidx[vp.row * ncols + vp.col] = -1
    order = np.argsort(bidx, kind="stable")
    counts = np.bincount(bidx[bidx >= 0], minlength=len(ranges))
    start = int(np.count_nonzero(bidx < 0))
    cells, elevs = [], []
    for b in range(len(ranges)):
        idx = order[start : start + counts[b]]
        start += counts[b]
        cells.append(idx)
        elevs.append(np.asarray(vals[idx]))
    skip = vp.row * ncols + vp.col if len(ranges) == 1 else -1
    return LayerBands(ranges, cells, elevs, layer_band, skip)


def collect_bands_rowmajor(grid: Grid, bands: LayerBands, flags: list[np.ndarray],
                           vp: Viewpoint, store: BlockStore | None = None) -> VisibilityGrid:
    out = VisibilityGrid.like(grid)
    flat = out.flags.reshape(-1)
    for cells, fl in zip(bands.cells, flags):
        flat[cells] = fl
    flat[vp.row * grid.ncols + vp.col] = Visibility.VISIBLE
    if store is not None:
        store.write_range(0, flat)
    return out


# ---------------------------------------------------------------------------
# per-layer geometry


@dataclass
class LayerData:
    """Valid points of one layer in screen order, plus their silhouettes."""

    layer: int
    band: int
    pos: np.ndarray  # positions of the points inside their band
    t: np.ndarray
    h: np.ndarray
    ring: Horizon
    connectors: Horizon | None
    full: bool
    size: int


class _LayerSource:
    def __init__(self, grid: Grid, vp: Viewpoint, bands: LayerBands, model: LOSModel):
        self.grid = grid
        self.vp = vp
        self.bands = bands
        self.model = model
        self.vz = vp.elevation(grid)
        self.scale = 1.0 / grid.cell_spacing
        nod = grid.nodata
        self.nodata_nan = bool(np.isnan(nod))
        self.nodata = np.float32(nod)
        nrows, ncols = grid.values.shape
        self.xmin, self.xmax = -vp.col, ncols - 1 - vp.col
        self.ymin, self.ymax = vp.row - (nrows - 1), vp.row

    def _inside(self, dx, dy):
        return (dx >= self.xmin) & (dx <= self.xmax) & (dy >= self.ymin) & (dy <= self.ymax)

    def _values(self, layer: int, dx: np.ndarray, dy: np.ndarray):
        """Elevations (NaN when absent) and band positions of ring points."""
        inside = self._inside(dx, dy)
        z = np.full(dx.shape, np.nan)
        pos = np.zeros(dx.shape, dtype=np.int64)
        if inside.any():
            flat = (self.vp.row - dy[inside]) * self.grid.ncols + (self.vp.col + dx[inside])
            b, p = self.bands.lookup(layer, flat)
            vals = self.bands.elevations[b][p].astype(np.float64)
            bad = np.isnan(vals) if self.nodata_nan else vals == self.nodata
            vals[bad] = np.nan
            z[inside] = vals
            pos[inside] = p
        return z, pos

    def _project(self, dx, dy, z):
        den = (np.abs(dx) + np.abs(dy)).astype(np.float64)
        return screen_t(dx, dy), (z - self.vz) * self.scale / den

    def layer(self, l: int) -> LayerData:
        cdx, cdy = ring_offsets(l)
        n = cdx.size
        # screen order: due east, then down the east side, along the south,
        # up the west, along the north and back to due east at t = 4
        order = np.concatenate(([0], np.arange(n - 1, 0, -1), [0]))
        dx, dy = cdx[order], cdy[order]
        z, pos = self._values(l, dx, dy)
        t, h = self._project(dx, dy, z)
        t[-1] = 4.0
        valid = ~np.isnan(z)
        keep = np.nonzero(valid)[0]
        link = valid[:-1] & valid[1:]
        lk = np.concatenate(([0], np.cumsum(~link)))
        ring_link = (lk[keep[1:]] - lk[keep[:-1]]) == 0
        ring = Horizon(t[keep], h[keep], ring_link)
        pts = keep[keep < n]
        full = bool(self._inside(dx, dy).all())
        conn = self.connectors(l) if self.model is LOSModel.GRIDLINES else None
        return LayerData(l, int(self.bands.layer_band[l]), pos[pts], t[pts], h[pts],
                         ring, conn, full, int(valid[:-1].sum()))

    def connectors(self, l: int) -> Horizon:
        """Grid edges between layer ``l-1`` and layer ``l`` that are not radial."""
        if l < 2:
            return Horizon.empty()
        a = l - 1
        r = np.concatenate((np.arange(-a, 0), np.arange(1, a + 1)))
        one = np.ones_like(r)
        qx = np.concatenate((a * one, r, -a * one, r))
        qy = np.concatenate((r, a * one, r, -a * one))
        px = np.concatenate((l * one, r, -l * one, r))
        py = np.concatenate((r, l * one, r, -l * one))
        both_x = np.concatenate((qx, px))
        both_y = np.concatenate((qy, py))
        z = np.full(both_x.shape, np.nan)
        inner = np.arange(both_x.size) < qx.size
        zi, _ = self._values(a, qx, qy)
        zo, _ = self._values(l, px, py)
        z[inner], z[~inner] = zi, zo
        t, h = self._project(both_x, both_y, z)
        k = qx.size
        tq, hq, tp, hp = t[:k], h[:k], t[k:], h[k:]
        ok = ~(np.isnan(hq) | np.isnan(hp))
        tq, hq, tp, hp = tq[ok], hq[ok], tp[ok], hp[ok]
        swap = tq > tp
        t0 = np.where(swap, tp, tq)
        t1 = np.where(swap, tq, tp)
        h0 = np.where(swap, hp, hq)
        h1 = np.where(swap, hq, hp)
        order = np.argsort(t0, kind="stable")
        return Horizon.segments(t0[order], h0[order], t1[order], h1[order])


# ---------------------------------------------------------------------------
# drivers


@dataclass
class HorizonStats:
    layers: list[int] = field(default_factory=list)
    layer_sizes: list[int] = field(default_factory=list)
    cumulative_sizes: list[int] = field(default_factory=list)
    full_layer: list[bool] = field(default_factory=list)
    points: list[int] = field(default_factory=list)
    bands: int = 0

    def record(self, layer: LayerData, own: int, total: int | None) -> None:
        self.layers.append(layer.layer)
        self.layer_sizes.append(own)
        self.cumulative_sizes.append(-1 if total is None else total)
        self.full_layer.append(layer.full)
        self.points.append(layer.size)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer", "points", "full_layer", "layer_horizon_vertices",
                        "cumulative_horizon_vertices"])
            for row in zip(self.layers, self.points, self.full_layer, self.layer_sizes,
                           self.cumulative_sizes):
                w.writerow([row[0], row[1], int(row[2]), row[3], row[4]])


@dataclass
class HorizonResult:
    visibility: VisibilityGrid
    stats: HorizonStats


def _setup(grid: Grid, vp: Viewpoint, model, memory_budget, capacity, store):
    check_inputs(grid, vp)
    model = LOSModel(model)
    sizes = layer_sizes(grid, vp)[1:]
    if capacity is None:
        capacity = grid.size if memory_budget is None else band_capacity_for_budget(memory_budget)
    ranges = compute_band_boundaries(sizes, int(capacity))
    bands = build_bands_rowmajor(grid, vp, ranges, store)
    flags = [np.full(c.size, Visibility.VISIBLE, dtype=np.uint8) for c in bands.cells]
    return model, bands, flags, _LayerSource(grid, vp, bands, model)


def _mark(flags, layer: LayerData, hidden: np.ndarray) -> None:
    flags[layer.band][layer.pos[hidden]] = Visibility.INVISIBLE


def _own_horizon(layer: LayerData) -> Horizon:
    if layer.connectors is None or len(layer.connectors) == 0:
        return layer.ring
    return merge(layer.ring, layer.connectors)


def layer_horizon(grid: Grid, vp: Viewpoint, layer: int,
                  model: LOSModel | str = LOSModel.GRIDLINES) -> Horizon:
    """Horizon of one layer on its own: ring edges, plus connectors for GRIDLINES."""
    check_inputs(grid, vp)
    model = LOSModel(model)
    if not 1 <= layer <= vp.max_radius(grid):
        raise ValueError(f"layer {layer} does not meet the grid")
    sizes = layer_sizes(grid, vp)[1:]
    bands = build_bands_rowmajor(grid, vp, compute_band_boundaries(sizes, grid.size), None)
    return _own_horizon(_LayerSource(grid, vp, bands, model).layer(layer))


def _finalize(grid, vp, bands, flags, output_store) -> VisibilityGrid:
    nod_by_band = [np.isnan(e) if np.isnan(grid.nodata) else e == np.float32(grid.nodata)
                   for e in bands.elevations]
    for fl, nd in zip(flags, nod_by_band):
        fl[nd] = Visibility.NODATA
    return collect_bands_rowmajor(grid, bands, flags, vp, output_store)


def vis_iter(grid: Grid, vp: Viewpoint, model: LOSModel | str = LOSModel.GRIDLINES,
             memory_budget: int | None = None, *, capacity: int | None = None,
             store: BlockStore | None = None, output_store: BlockStore | None = None,
             ) -> HorizonResult:
    """Grow the horizon one layer at a time."""
    model, bands, flags, src = _setup(grid, vp, model, memory_budget, capacity, store)
    stats = HorizonStats(bands=len(bands.ranges))
    total = Horizon.empty()
    for l in range(1, vp.max_radius(grid) + 1):
        layer = src.layer(l)
        hidden = occluded(total, layer.t, layer.h)
        if layer.connectors is not None and len(layer.connectors):
            hidden |= occluded(layer.connectors, layer.t, layer.h)
        _mark(flags, layer, hidden)
        own = _own_horizon(layer)
        total = merge(total, own)
        stats.record(layer, len(own), len(total))
    return HorizonResult(_finalize(grid, vp, bands, flags, output_store), stats)


def _split_layer(sizes: dict[int, int], lo: int, hi: int) -> int:
    """Last layer of the first half: the prefix closest to half the points."""
    best, best_gap = lo, None
    half = sum(sizes[l] for l in range(lo, hi + 1)) / 2
    acc = 0
    for l in range(lo, hi):
        acc += sizes[l]
        gap = abs(acc - half)
        if best_gap is None or gap < best_gap:
            best, best_gap = l, gap
    return best


def vis_dac(grid: Grid, vp: Viewpoint, model: LOSModel | str = LOSModel.GRIDLINES,
            memory_budget: int | None = None, *, capacity: int | None = None,
            store: BlockStore | None = None, output_store: BlockStore | None = None,
            ) -> HorizonResult:
    """Per band, build the horizon by recursive halving of its layers."""
    model, bands, flags, src = _setup(grid, vp, model, memory_budget, capacity, store)
    stats = HorizonStats(bands=len(bands.ranges))
    previous = Horizon.empty()

    for lo, hi in bands.ranges:
        layers = {l: src.layer(l) for l in range(lo, hi + 1)}
        sizes = {l: max(layers[l].size, 1) for l in layers}
        for layer in layers.values():
            _mark(flags, layer, occluded(previous, layer.t, layer.h))

        def solve(a: int, b: int) -> Horizon:
            if a == b:
                layer = layers[a]
                if layer.connectors is not None and len(layer.connectors):
                    _mark(flags, layer, occluded(layer.connectors, layer.t, layer.h))
                own = _own_horizon(layer)
                stats.record(layer, len(own), None)
                return own
            mid = _split_layer(sizes, a, b)
            first = solve(a, mid)
            for l in range(mid + 1, b + 1):
                layer = layers[l]
                _mark(flags, layer, occluded(first, layer.t, layer.h))
            second = solve(mid + 1, b)
            return merge(first, second)

        previous = merge(previous, solve(lo, hi))
    order = np.argsort(stats.layers)
    for name in ("layers", "layer_sizes", "cumulative_sizes", "full_layer", "points"):
        setattr(stats, name, [getattr(stats, name)[k] for k in order])
    return HorizonResult(_finalize(grid, vp, bands, flags, output_store), stats)
