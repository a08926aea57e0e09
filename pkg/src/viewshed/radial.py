"""Rotating-ray sweeps over the cell-blocking model.

A ray from the viewpoint turns once counter-clockwise. Each cell produces an
ENTER, CENTER and EXIT event at the azimuths where the ray first touches it,
passes its center and leaves it. Cells cut by the ray are kept in an
`ActiveStructure` keyed by distance; at a CENTER event the point is hidden
iff some closer active cell has an elevation key at least as large.

Two ways of feeding elevations to the sweep are provided. The banded form
cuts the layers into concentric bands of a fixed width and streams each
band's elevations in event order. The sectored form cuts the turn into
angular sectors small enough to sort in memory.
"""

from __future__ import annotations

import heapq
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from .blockstore import BlockStore
from .geometry import (
    CENTER,
    ENTER,
    EXIT,
    FULL_TURN,
    OffsetBounds,
    azimuth_key,
    cell_span,
    elev_key,
    reentry_key,
    ring_next_inside,
    ring_offset_at,
)
from .grid import Grid, Viewpoint, Visibility, VisibilityGrid, check_inputs

BYTES_PER_VALUE = 4
_NEG_INF = float("-inf")


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


class ActiveStructure:
    """Distance-keyed set of elevation keys with subtree maxima.

    The tree shape is fixed by the sorted universe of distances that may
    ever be inserted, so updates and prefix-maximum queries take
    logarithmic time without rebalancing. Several entries may share a
    distance; they are told apart by a caller-supplied tag.
    """

    def __init__(self, universe) -> None:
        self._dists = sorted(set(universe))
        self._rank = {d: r for r, d in enumerate(self._dists)}
        size = 1
        while size < max(len(self._dists), 1):
            size *= 2
        self._size = size
        self._tree = [_NEG_INF] * (2 * size)
        self._leaves: dict[int, dict[object, float]] = {}
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def insert(self, dist2: float, key: float, tag: object = None) -> None:
        r = self._rank[dist2]
        leaf = self._leaves.setdefault(r, {})
        if tag not in leaf:
            self._count += 1
        leaf[tag] = key
        tree = self._tree
        pos = r + self._size
        best = max(leaf.values())
        if best == tree[pos]:
            return
        tree[pos] = best
        pos >>= 1
        while pos:
            v = max(tree[2 * pos], tree[2 * pos + 1])
            if tree[pos] == v:
                break
            tree[pos] = v
            pos >>= 1

    def delete(self, dist2: float, tag: object = None) -> None:
        r = self._rank[dist2]
        leaf = self._leaves.get(r)
        if leaf is None or tag not in leaf:
            raise KeyError((dist2, tag))
        del leaf[tag]
        self._count -= 1
        new = max(leaf.values()) if leaf else _NEG_INF
        if not leaf:
            del self._leaves[r]
        tree = self._tree
        pos = r + self._size
        if tree[pos] == new:
            return
        tree[pos] = new
        pos >>= 1
        while pos:
            v = max(tree[2 * pos], tree[2 * pos + 1])
            if tree[pos] == v:
                break
            tree[pos] = v
            pos >>= 1

    def blocked(self, dist2: float, key: float) -> bool:
        """True iff some entry strictly closer than ``dist2`` has key >= ``key``."""
        tree = self._tree
        lo = self._size
        hi = self._size + bisect_left(self._dists, dist2)
        while lo < hi:
            if lo & 1:
                if tree[lo] >= key:
                    return True
                lo += 1
            if hi & 1:
                hi -= 1
                if tree[hi] >= key:
                    return True
            lo >>= 1
            hi >>= 1
        return False

    def max_closer(self, dist2: float) -> float:
        tree = self._tree
        lo = self._size
        hi = self._size + bisect_left(self._dists, dist2)
        best = _NEG_INF
        while lo < hi:
            if lo & 1:
                best = max(best, tree[lo])
                lo += 1
            if hi & 1:
                hi -= 1
                best = max(best, tree[hi])
            lo >>= 1
            hi >>= 1
        return best


@dataclass
class SweepStats:
    events: int = 0
    enter_events: int = 0
    center_events: int = 0
    exit_events: int = 0
    max_active: int = 0
    max_queue: int = 0
    bands: int = 0
    sectors: int = 0
    band_width: int = 0
    sector_capacity: int = 0


@dataclass
class SweepResult:
    visibility: VisibilityGrid
    stats: SweepStats = field(default_factory=SweepStats)


class _Reader:
    """Scalar access to grid values, through a BlockStore if one is given."""

    def __init__(self, grid: Grid, store: BlockStore | None) -> None:
        self.store = store
        self.values = grid.values.ravel().tolist()
        self.nodata = set(np.nonzero(grid.nodata_mask().ravel())[0].tolist())

    def get(self, flat: int) -> float | None:
        z = self.store.read(flat) if self.store is not None else self.values[flat]
        return None if flat in self.nodata else float(z)

    def row_range(self, start: int, stop: int) -> list[float]:
        if self.store is not None:
            return self.store.read_range(start, stop).tolist()
        return self.values[start:stop]


def _distance_universe(grid: Grid, vp: Viewpoint) -> np.ndarray:
    di = np.arange(grid.nrows) - vp.row
    dj = np.arange(grid.ncols) - vp.col
    d2 = (di[:, None] ** 2 + dj[None, :] ** 2).ravel()
    return np.unique(d2)


def _march(grid: Grid, vp: Viewpoint, layers, which: str, include_reentry: bool = False):
    """Yield ``(layer, ring_pos, dx, dy)`` for cells of ``layers`` in event order.

    ``which`` selects the ENTER or CENTER azimuth as the ordering key; ties
    are broken by distance and then grid index, as in the sweep. With
    ``include_reentry`` the east-row cell of each layer appears a second
    time at its unrolled enter azimuth.
    """
    bounds = OffsetBounds.of(grid.nrows, grid.ncols, vp.row, vp.col)
    use_enter = which == "enter"

    def entry(l: int, k: int, dx: int, dy: int):
        if not use_enter:
            az = azimuth_key(dx, dy)
        elif k == 8 * l:
            az = reentry_key(dx)
        else:
            az = cell_span(dx, dy).enter
        return (az, dx * dx + dy * dy, vp.row - dy, vp.col + dx, l, k)

    stop_of = (lambda l: 8 * l + 1) if include_reentry else (lambda l: 8 * l)
    heap = []
    for l in layers:
        k = ring_next_inside(l, 0, bounds, stop_of(l))
        if k < stop_of(l):
            heap.append(entry(l, k, *ring_offset_at(l, k)))
    heapq.heapify(heap)
    while heap:
        l, k = heapq.heappop(heap)[4:]
        dx, dy = ring_offset_at(l, k)
        yield l, k, dx, dy
        nk = ring_next_inside(l, k + 1, bounds, stop_of(l))
        if nk < stop_of(l):
            heapq.heappush(heap, entry(l, nk, *ring_offset_at(l, nk)))


def _sweep(grid: Grid, vp: Viewpoint, fetch, stats: SweepStats, on_center) -> None:
    """Run the rotating sweep.

    ``fetch(i, j, reentry)`` returns the elevation of a cell when its ENTER
    event is processed (None for nodata). ``on_center(i, j, flag)`` receives
    each point's visibility. Cells east of the viewpoint on its row are
    entered twice: before the sweep starts (negative azimuth) and again at
    the end of the turn; the second copy never exits.
    """
    bounds = OffsetBounds.of(grid.nrows, grid.ncols, vp.row, vp.col)
    vz = vp.elevation(grid)
    s2 = grid.cell_spacing**2
    active = ActiveStructure(_distance_universe(grid, vp).tolist())
    keys: dict[tuple[int, int], float] = {}
    m = vp.max_radius(grid)
    vrow, vcol = vp.row, vp.col

    heap = []
    for l in range(1, m + 1):
        k = ring_next_inside(l, 0, bounds, 8 * l + 1)
        if k <= 8 * l:
            dx, dy = ring_offset_at(l, k)
            az = reentry_key(dx) if k == 8 * l else cell_span(dx, dy).enter
            heap.append((az, ENTER, dx * dx + dy * dy, vrow - dy, vcol + dx, l, k))
    heapq.heapify(heap)
    pop, push = heapq.heappop, heapq.heappush
    events = n_enter = n_center = n_exit = 0
    max_active = max_queue = 0

    while heap:
        if len(heap) > max_queue:
            max_queue = len(heap)
        az, kind, d2, i, j, l, k = pop(heap)
        if kind == ENTER:
            reentry = k == 8 * l
            z = fetch(i, j, reentry)
            tag = (i, j, reentry)
            if z is not None:
                key = elev_key(z - vz, d2 * s2)
                active.insert(d2, key, tag)
                if not reentry:
                    keys[(i, j)] = key
                if len(active) > max_active:
                    max_active = len(active)
            if not reentry:
                n_enter += 1
                events += 1
                dx, dy = j - vcol, vrow - i
                span = cell_span(dx, dy)
                push(heap, (span.center, CENTER, d2, i, j, l, k))
                push(heap, (span.exit, EXIT, d2, i, j, l, k))
            nk = ring_next_inside(l, k + 1, bounds, 8 * l + 1)
            if nk <= 8 * l:
                dx, dy = ring_offset_at(l, nk)
                naz = reentry_key(dx) if nk == 8 * l else cell_span(dx, dy).enter
                push(heap, (naz, ENTER, dx * dx + dy * dy, vrow - dy, vcol + dx, l, nk))
        elif kind == CENTER:
            n_center += 1
            events += 1
            key = keys.get((i, j))
            if key is None:
                on_center(i, j, Visibility.NODATA)
            elif active.blocked(d2, key):
                on_center(i, j, Visibility.INVISIBLE)
            else:
                on_center(i, j, Visibility.VISIBLE)
        else:
            n_exit += 1
            events += 1
            if keys.pop((i, j), None) is not None:
                active.delete(d2, (i, j, False))

    stats.events += events
    stats.enter_events += n_enter
    stats.center_events += n_center
    stats.exit_events += n_exit
    stats.max_active = max(stats.max_active, max_active)
    stats.max_queue = max(stats.max_queue, max_queue)


# ---------------------------------------------------------------------------
# banded


def band_width_for_budget(memory_budget: int) -> int:
    """Largest power of two ``w`` whose (w+1)^2 tile of elevations and flags
    fits in a third of the budget (in bytes); at least 1."""
    w = 1
    while (2 * w + 1) ** 2 * 2 * BYTES_PER_VALUE <= memory_budget // 3:
        w *= 2
    return w


@dataclass
class BandSet:
    """Elevations of each band in the order the sweep will enter them.

    ``cells[k]`` holds the matching flat grid indices; it is only used to
    check that the sweep consumes the bands in the expected order.
    """

    width: int
    elevations: list[list[float | None]]
    cells: list[list[int]]

    @property
    def num_bands(self) -> int:
        return len(self.elevations)


def num_bands(grid: Grid, vp: Viewpoint, width: int) -> int:
    return -(-vp.max_radius(grid) // width)


def build_bands(grid: Grid, vp: Viewpoint, width: int, store: BlockStore | None = None) -> BandSet:
    """Read the grid band by band, emitting elevations in ENTER order."""
    check_inputs(grid, vp)
    if width < 1:
        raise ValueError("band width must be at least 1")
    reader = _Reader(grid, store)
    m = vp.max_radius(grid)
    ncols = grid.ncols
    elevs: list[list[float | None]] = []
    cells: list[list[int]] = []
    for b in range(num_bands(grid, vp, width)):
        layers = range(b * width + 1, min((b + 1) * width, m) + 1)
        ev: list[float | None] = []
        cl: list[int] = []
        for _, _, dx, dy in _march(grid, vp, layers, "enter"):
            flat = (vp.row - dy) * ncols + vp.col + dx
            ev.append(reader.get(flat))
            cl.append(flat)
        elevs.append(ev)
        cells.append(cl)
    return BandSet(width, elevs, cells)


def collect_bands(grid: Grid, vp: Viewpoint, width: int, flags: list[list[int]],
                  store: BlockStore | None = None) -> VisibilityGrid:
    """Scatter per-band flags, listed in CENTER order, back into a grid."""
    out = VisibilityGrid.like(grid)
    out.flags[vp.row, vp.col] = Visibility.VISIBLE
    m = vp.max_radius(grid)
    ncols = grid.ncols
    flat_out = out.flags.reshape(-1)
    if store is not None:
        store.write(vp.row * ncols + vp.col, Visibility.VISIBLE)
    for b, band_flags in enumerate(flags):
        layers = range(b * width + 1, min((b + 1) * width, m) + 1)
        pos = 0
        for _, _, dx, dy in _march(grid, vp, layers, "center"):
            flat = (vp.row - dy) * ncols + vp.col + dx
            flag = band_flags[pos]
            pos += 1
            flat_out[flat] = flag
            if store is not None:
                store.write(flat, flag)
        if pos != len(band_flags):
            raise InvariantError(f"band {b} produced {len(band_flags)} flags for {pos} cells")
    return out


def sweep_banded(grid: Grid, vp: Viewpoint, memory_budget: int | None = None, *,
                 band_width: int | None = None, store: BlockStore | None = None,
                 output_store: BlockStore | None = None) -> SweepResult:
    """Banded radial sweep.

    The band width comes from ``memory_budget`` (bytes) unless given
    directly. Elevations are read once per band in a frontier march, the
    sweep consumes them in the same order, and the per-band flags are then
    scattered back by a second march in CENTER order.
    """
    check_inputs(grid, vp)
    if band_width is None:
        if memory_budget is None:
            raise ValueError("need a memory budget or an explicit band width")
        if memory_budget // 3 < 4 * 2 * BYTES_PER_VALUE:
            raise ValueError("memory budget too small for a single band tile")
        band_width = band_width_for_budget(memory_budget)
    w = int(band_width)
    bands = build_bands(grid, vp, w, store)
    stats = SweepStats(bands=bands.num_bands, band_width=w)
    ptr = [0] * bands.num_bands
    east: dict[tuple[int, int], float | None] = {}
    ncols = grid.ncols
    flags: list[list[int]] = [[] for _ in range(bands.num_bands)]

    def fetch(i: int, j: int, reentry: bool) -> float | None:
        if reentry:
            return east[(i, j)]
        b = (max(abs(i - vp.row), abs(j - vp.col)) - 1) // w
        p = ptr[b]
        if p >= len(bands.cells[b]) or bands.cells[b][p] != i * ncols + j:
            raise InvariantError(f"band {b} consumed out of order at ({i}, {j})")
        ptr[b] = p + 1
        z = bands.elevations[b][p]
        if i == vp.row and j > vp.col:
            east[(i, j)] = z
        return z

    def on_center(i: int, j: int, flag: int) -> None:
        b = (max(abs(i - vp.row), abs(j - vp.col)) - 1) // w
        flags[b].append(int(flag))

    _sweep(grid, vp, fetch, stats, on_center)
    vis = collect_bands(grid, vp, w, flags, output_store)
    return SweepResult(vis, stats)


# ---------------------------------------------------------------------------
# sectored


def _azimuth_key_array(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Vectorised `azimuth_key`; evaluates the same expressions branch by branch."""
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    out = np.empty(np.broadcast(dx, dy).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        conds = [
            (dy >= 0) & (dx > 0) & (dy <= dx),
            (dy >= 0) & (dx > 0),
            (dy == 0) & (dx <= 0),
            (dy > 0) & (-dx <= dy),
            dy > 0,
            (dy < 0) & (dx < 0) & (dy >= dx),
            (dy < 0) & (dx < 0),
            dx <= -dy,
        ]
        vals = [
            dy / dx,
            2.0 - dx / dy,
            np.full_like(dx, 4.0),
            2.0 - dx / dy,
            4.0 - dy / -dx,
            4.0 + dy / dx,
            6.0 - dx / dy,
            6.0 + dx / -dy,
        ]
        out[...] = np.select(conds, vals, 8.0 + dy / dx)
    return out


def cell_enter_array(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """ENTER azimuths of many cells; east-row cells get their seam-side value."""
    corners = [_azimuth_key_array(dx + sx, dy + sy) for sx in (-0.5, 0.5) for sy in (-0.5, 0.5)]
    enter = np.minimum.reduce(corners)
    east = (dy == 0) & (dx > 0)
    enter[east] = _azimuth_key_array(dx[east] - 0.5, np.full(east.sum(), -0.5))
    return enter


def max_layer_size(grid: Grid, vp: Viewpoint) -> int:
    di = np.abs(np.arange(grid.nrows) - vp.row)
    dj = np.abs(np.arange(grid.ncols) - vp.col)
    lay = np.maximum(di[:, None], dj[None, :]).ravel()
    counts = np.bincount(lay)
    return int(counts[1:].max(initial=0))


def _enter_sequence(grid: Grid, vp: Viewpoint) -> list[float]:
    """ENTER azimuths of all cells in sweep order, east-row cells at their
    re-entry azimuth near the end of the turn."""
    m = vp.max_radius(grid)
    azimuths = []
    for l, k, dx, dy in _march(grid, vp, range(1, m + 1), "enter", include_reentry=True):
        if k == 0 and dy == 0 and dx > 0:
            continue
        azimuths.append(reentry_key(dx) if k == 8 * l else cell_span(dx, dy).enter)
    return azimuths


def _groups(azimuths: list[float]):
    start = 0
    while start < len(azimuths):
        stop = start
        while stop < len(azimuths) and azimuths[stop] == azimuths[start]:
            stop += 1
        yield azimuths[start], stop - start
        start = stop


def min_sector_capacity(grid: Grid, vp: Viewpoint) -> int:
    """Smallest capacity for which sectors exist: the largest set of cells
    sharing one ENTER azimuth."""
    return max((size for _, size in _groups(_enter_sequence(grid, vp))), default=1)


def sector_boundaries(grid: Grid, vp: Viewpoint, capacity: int) -> list[float]:
    """Start azimuths of sectors 2.. from an elevation-free frontier march.

    Cells are counted in ENTER order. A new sector opens before any group of
    equal-azimuth cells that would overflow the current one, so the sector
    of a cell is determined by its ENTER azimuth alone.
    """
    check_inputs(grid, vp)
    bounds: list[float] = []
    count = 0
    for az, size in _groups(_enter_sequence(grid, vp)):
        if size > capacity:
            raise ValueError(
                f"sector capacity {capacity} below {size} cells sharing one enter azimuth"
            )
        if count + size > capacity:
            bounds.append(az)
            count = 0
        count += size
    return bounds


def sweep_sectored(grid: Grid, vp: Viewpoint, memory_budget: int | None = None, *,
                   capacity: int | None = None, store: BlockStore | None = None,
                   output_store: BlockStore | None = None) -> SweepResult:
    """Sectored radial sweep.

    Cells are distributed by ENTER azimuth into sectors of at most
    ``capacity`` cells (derived from ``memory_budget`` bytes if not given);
    east-row cells are also copied to the front of the first sector. Each
    sector is sorted in event order and fed to the sweep. Visible points
    are collected, sorted and written out row by row.
    """
    check_inputs(grid, vp)
    if capacity is None:
        if memory_budget is None:
            raise ValueError("need a memory budget or an explicit sector capacity")
        capacity = memory_budget // 3 // (3 * BYTES_PER_VALUE)
    capacity = int(capacity)
    bounds = sector_boundaries(grid, vp, capacity)
    nrows, ncols = grid.values.shape
    n_sec = len(bounds) + 1

    # phase 1: one row-major pass, distributing cells by ENTER azimuth
    ii, jj = np.divmod(np.arange(nrows * ncols), ncols)
    dx = jj - vp.col
    dy = vp.row - ii
    not_v = (dx != 0) | (dy != 0)
    flat = np.nonzero(not_v)[0]
    dx, dy = dx[flat], dy[flat]
    if store is not None:
        vals = np.concatenate([store.read_range(r * ncols, (r + 1) * ncols) for r in range(nrows)])
    else:
        vals = grid.values.ravel()
    enter = cell_enter_array(dx, dy)
    d2 = dx * dx + dy * dy
    sector = np.searchsorted(np.asarray(bounds, dtype=np.float64), enter, side="right")
    east = np.nonzero((dy == 0) & (dx > 0))[0]

    nod = grid.nodata_mask().ravel()
    sec_cells: list[list[int]] = []
    sec_vals: list[list[float | None]] = []
    for s in range(n_sec):
        idx = np.nonzero(sector == s)[0]
        keys = enter[idx]
        if s == 0 and east.size:
            idx = np.concatenate([east, idx])
            keys = np.concatenate([enter[east] - FULL_TURN, keys])
        fl = flat[idx]
        order = np.lexsort((fl % ncols, fl // ncols, d2[idx], keys))
        fl = fl[order].tolist()
        sec_cells.append(fl)
        sec_vals.append([None if nod[f] else float(vals[f]) for f in fl])
        if len(fl) - (east.size if s == 0 else 0) > capacity:
            raise InvariantError(f"sector {s} holds more than {capacity} cells")

    stats = SweepStats(sectors=n_sec, sector_capacity=capacity)
    cur = [0, 0]  # sector, position
    visible: list[int] = []

    def fetch(i: int, j: int, reentry: bool) -> float | None:
        s, p = cur
        while s < n_sec and p >= len(sec_cells[s]):
            s, p = s + 1, 0
        if s >= n_sec or sec_cells[s][p] != i * ncols + j:
            raise InvariantError(f"sector stream out of order at ({i}, {j})")
        cur[0], cur[1] = s, p + 1
        return sec_vals[s][p]

    def on_center(i: int, j: int, flag: int) -> None:
        if flag == Visibility.VISIBLE:
            visible.append(i * ncols + j)

    _sweep(grid, vp, fetch, stats, on_center)

    # phase 3: sort the visible points and write the grid row by row
    visible.sort()
    out = VisibilityGrid.like(grid)
    flags = out.flags.reshape(-1)
    flags[np.asarray(visible, dtype=np.int64)] = Visibility.VISIBLE
    flags[vp.row * ncols + vp.col] = Visibility.VISIBLE
    if output_store is not None:
        for r in range(nrows):
            output_store.write_range(r * ncols, flags[r * ncols : (r + 1) * ncols])
    return SweepResult(out, stats)
