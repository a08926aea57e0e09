"""Centrifugal sweep over a fixed-resolution horizon array.

The grid is covered by a square tile whose side is a power of two, and the
tile is split recursively into quadrants. Quadrants are visited nearest
first, so every point is reached after all points whose cells lie between
it and the viewpoint. A point is visible iff its elevation key beats the
slot of the horizon array at its azimuth; afterwards every slot under the
point's cell is raised to its key.

The angular resolution of the array is finite, so a cell slightly to one
side of a line of sight can hide a point through a shared slot. The result
approximates the cell-blocking model rather than reproducing it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blockstore import BlockStore
from .geometry import elev_key
from .grid import Grid, Viewpoint, Visibility, VisibilityGrid, check_inputs

BYTES_PER_VALUE = 4
SLOTS_PER_RADIUS = 32
TWO_PI = 2.0 * math.pi


def root_tile(nrows: int, ncols: int, vrow: int, vcol: int) -> tuple[int, int, int]:
    """Origin and side of the power-of-two tile the recursion starts from.

    The side is the smallest power of two of at least ``2m + 1``, where
    ``m`` is the largest distance from the viewpoint to a grid edge. The
    tile is anchored at the grid's first row and column, which keeps every
    subtile aligned with the row-major block layout.
    """
    m = max(vrow, nrows - 1 - vrow, vcol, ncols - 1 - vcol)
    side = 1
    while side < 2 * m + 1:
        side *= 2
    return 0, 0, side


def _axis_dist(lo: np.ndarray, size: int, v: int) -> np.ndarray:
    return np.maximum(np.maximum(lo - v, 0), v - (lo + size - 1))


def quadrant_ranks(rows: np.ndarray, cols: np.ndarray, tile_row: np.ndarray,
                   tile_col: np.ndarray, half: int, vrow: int, vcol: int) -> np.ndarray:
    """Visiting rank (0..3) of the quadrant holding each point inside its tile.

    Quadrants are ordered by L-infinity distance to the viewpoint. Ties go
    to the quadrant with the smaller squared Euclidean distance, then to the
    smaller (row, col) origin. The Euclidean step keeps a quadrant from
    being finished before a tied one that lies across its sight lines.
    """
    qa = (rows - tile_row) // half
    qb = (cols - tile_col) // half

    def dists(a, b):
        di = _axis_dist(tile_row + a * half, half, vrow)
        dj = _axis_dist(tile_col + b * half, half, vcol)
        return np.maximum(di, dj), di * di + dj * dj

    own_d, own_e = dists(qa, qb)
    rank = np.zeros(rows.shape, np.int64)
    for a in (0, 1):
        for b in (0, 1):
            d, e = dists(a, b)
            tie = (d == own_d) & (e == own_e)
            before = (d < own_d) | ((d == own_d) & (e < own_e))
            before |= tie & ((a < qa) | ((a == qa) & (b < qb)))
            rank += before
    return rank


def visit_order(nrows: int, ncols: int, vrow: int, vcol: int) -> np.ndarray:
    """Flat indices of all grid points in centrifugal visiting order.

    The order is the depth-first order of the quadrant recursion; it is
    computed level by level as a lexicographic sort on quadrant ranks.
    """
    r0, c0, side = root_tile(nrows, ncols, vrow, vcol)
    rows, cols = np.divmod(np.arange(nrows * ncols, dtype=np.int64), ncols)
    code = np.zeros(rows.size, np.int64)
    size = side
    while size > 1:
        half = size // 2
        tr = r0 + (rows - r0) // size * size
        tc = c0 + (cols - c0) // size * size
        code = code * 4 + quadrant_ranks(rows, cols, tr, tc, half, vrow, vcol)
        size = half
    return np.argsort(code, kind="stable")


def tile_groups(order: np.ndarray, ncols: int, vrow: int, vcol: int, nrows: int,
                tile_side: int) -> list[tuple[int, int, int, int, int, int]]:
    """Split a visiting order into runs that belong to one aligned tile.

    Returns ``(start, stop, row0, col0, row1, col1)`` per run, with the
    tile clipped to the grid (``row1`` and ``col1`` exclusive). Each run is
    contiguous in the order because the recursion finishes a tile before
    leaving it.
    """
    r0, c0, side = root_tile(nrows, ncols, vrow, vcol)
    tile_side = max(1, min(int(tile_side), side))
    rows, cols = np.divmod(order, ncols)
    tr = (rows - r0) // tile_side
    tc = (cols - c0) // tile_side
    tid = tr * (side // tile_side + 1) + tc
    cut = np.flatnonzero(np.diff(tid)) + 1
    starts = np.concatenate(([0], cut))
    stops = np.concatenate((cut, [order.size]))
    out = []
    for s, e in zip(starts.tolist(), stops.tolist()):
        a = r0 + int(tr[s]) * tile_side
        b = c0 + int(tc[s]) * tile_side
        out.append((s, e, max(a, 0), max(b, 0),
                    min(a + tile_side, nrows), min(b + tile_side, ncols)))
    return out


def precedence_pairs(px: int, py: int) -> list[tuple[int, int]]:
    """Offsets of points whose closed cell meets the open segment to ``(px, py)``.

    The viewpoint and the target itself are left out.
    """
    from fractions import Fraction

    out = []
    half = Fraction(1, 2)
    for cx in range(min(0, px) - 1, max(0, px) + 2):
        for cy in range(min(0, py) - 1, max(0, py) + 2):
            if (cx, cy) in ((0, 0), (px, py)):
                continue
            lo, hi = Fraction(0), Fraction(1)
            ok = True
            for p, c in ((px, cx), (py, cy)):
                if p == 0:
                    if abs(c) > half:
                        ok = False
                    continue
                a, b = (c - half) / p, (c + half) / p
                if p < 0:
                    a, b = b, a
                lo, hi = max(lo, a), min(hi, b)
            # open segment: the parameter interval must reach into (0, 1)
            if ok and lo <= hi and hi > 0 and lo < 1:
                out.append((cx, cy))
    return out


def precedence_violations(nrows: int, ncols: int, vrow: int, vcol: int,
                          order: np.ndarray, cache: dict | None = None) -> int:
    """Count points visited before some point whose cell lies on their sight line."""
    pos = np.empty(order.size, np.int64)
    pos[order] = np.arange(order.size)
    cache = {} if cache is None else cache
    bad = 0
    for i in range(nrows):
        for j in range(ncols):
            px, py = j - vcol, vrow - i
            if (px, py) == (0, 0):
                continue
            pairs = cache.get((px, py))
            if pairs is None:
                pairs = cache[(px, py)] = precedence_pairs(px, py)
            me = pos[i * ncols + j]
            for cx, cy in pairs:
                qi, qj = vrow - cy, vcol + cx
                if 0 <= qi < nrows and 0 <= qj < ncols and pos[qi * ncols + qj] > me:
                    bad += 1
    return bad


# ---------------------------------------------------------------------------
# horizon array


def slot_count(nrows: int, ncols: int, vrow: int, vcol: int) -> int:
    m = max(vrow, nrows - 1 - vrow, vcol, ncols - 1 - vcol, 1)
    return SLOTS_PER_RADIUS * m


def _slot_of(angle: np.ndarray | float, nslots: int):
    return np.floor(np.asarray(angle) * (nslots / TWO_PI)).astype(np.int64)


def corner_span_array(dx: np.ndarray, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest corner azimuth (radians) of each cell.

    Cells due east of the viewpoint straddle azimuth 0 and get a negative
    lower end.
    """
    dx = np.asarray(dx, np.float64)
    dy = np.asarray(dy, np.float64)
    lo = np.full(dx.shape, np.inf)
    hi = np.full(dx.shape, -np.inf)
    for sx in (-0.5, 0.5):
        for sy in (-0.5, 0.5):
            a = np.mod(np.arctan2(dy + sy, dx + sx), TWO_PI)
            lo = np.minimum(lo, a)
            hi = np.maximum(hi, a)
    east = (dy == 0) & (dx > 0)
    half = np.arctan2(0.5, dx[east] - 0.5)
    lo[east], hi[east] = -half, half
    return lo, hi


def slot_span(dx: int, dy: int, nslots: int) -> list[tuple[int, int]]:
    """Inclusive slot ranges under a cell's corner-azimuth span.

    A span across azimuth 0 comes back as two ranges, the upper one first.
    """
    if (dx, dy) == (0, 0):
        raise ValueError("the viewpoint cell has no azimuth span")
    lo, hi = corner_span_array(np.array([dx]), np.array([dy]))
    k_lo = int(_slot_of(lo[0], nslots))
    k_hi = min(int(_slot_of(hi[0], nslots)), nslots - 1)
    if k_lo < 0:
        return [(nslots + k_lo, nslots - 1), (0, k_hi)]
    return [(k_lo, k_hi)]


def tile_side_for_capacity(values: int) -> int:
    """Largest power-of-two tile side whose area fits in half of ``values``."""
    side = 1
    while (2 * side) ** 2 <= values // 2:
        side *= 2
    return side


def tile_blocks(nrows: int, ncols: int, side: int, block_size: int) -> int:
    """Most blocks any aligned ``side`` x ``side`` tile touches in a row-major store."""
    worst = 0
    rows = np.arange(nrows, dtype=np.int64)
    tile_of = rows // side
    inner = (rows[1:] % side) != 0  # row r+1 is in the same tile as row r
    for c0 in range(0, ncols, side):
        c1 = min(c0 + side, ncols)
        first = (rows * ncols + c0) // block_size
        last = (rows * ncols + c1 - 1) // block_size
        # ranges grow with the row, so only neighbours can overlap
        count = (last - first + 1).astype(np.int64)
        count[1:] -= np.where(inner, np.maximum(last[:-1] - first[1:] + 1, 0), 0)
        worst = max(worst, int(np.bincount(tile_of, weights=count).max()))
    return worst


def tile_side_for_store(nrows: int, ncols: int, block_size: int, cache_blocks: int) -> int:
    """Largest power-of-two tile side whose blocks fit in half of the cache."""
    side = 1
    limit = max(cache_blocks // 2, 1)
    while (2 * side <= max(nrows, ncols)
           and tile_blocks(nrows, ncols, 2 * side, block_size) <= limit):
        side *= 2
    return side


@dataclass
class CentrifugalStats:
    slots: int = 0
    tile_side: int = 0
    tiles_loaded: int = 0
    slot_raises: int = 0
    slot_touches: int = 0
    max_raises_per_layer_slot: int = 0
    points: int = 0


@dataclass
class CentrifugalResult:
    visibility: VisibilityGrid
    stats: CentrifugalStats
    slots: np.ndarray
    visit_order: np.ndarray | None = None
    # flat index of the cell whose raise decided each hidden point, else -1
    blocker: np.ndarray | None = field(default=None, repr=False)


def centrifugal_sweep(grid: Grid, vp: Viewpoint, memory_budget: int | None = None, *,
                      store: BlockStore | None = None, output_store: BlockStore | None = None,
                      record_visit_order: bool = False, tile_side: int | None = None
                      ) -> CentrifugalResult:
    """Approximate cell-blocking viewshed by a nearest-first quadrant traversal.

    Elevations are bulk-loaded one aligned tile at a time. Without an
    explicit ``tile_side`` the tile is the largest power of two whose blocks
    fit in half of the store's cache, or whose area fits in half of
    ``memory_budget`` bytes; with neither, the whole grid is one tile.
    """
    check_inputs(grid, vp)
    nrows, ncols = grid.values.shape
    vflat = vp.row * ncols + vp.col
    nslots = slot_count(nrows, ncols, vp.row, vp.col)
    if tile_side is None:
        if store is not None:
            tile_side = tile_side_for_store(nrows, ncols, store.block_size, store.cache_blocks)
        elif memory_budget is not None:
            tile_side = tile_side_for_capacity(memory_budget // BYTES_PER_VALUE)
        else:
            tile_side = root_tile(nrows, ncols, vp.row, vp.col)[2]
    order = visit_order(nrows, ncols, vp.row, vp.col)
    groups = tile_groups(order, ncols, vp.row, vp.col, nrows, tile_side)
    stats = CentrifugalStats(slots=nslots, tile_side=int(tile_side), points=int(order.size))

    rows, cols = np.divmod(order, ncols)
    dx = cols - vp.col
    dy = vp.row - rows
    cen = np.mod(np.arctan2(dy, dx).astype(np.float64), TWO_PI)
    cslot = np.minimum(_slot_of(cen, nslots), nslots - 1).tolist()
    lo, hi = corner_span_array(dx, dy)
    klo = _slot_of(lo, nslots).tolist()
    khi = np.minimum(_slot_of(hi, nslots), nslots - 1).tolist()
    layer = np.maximum(np.abs(dx), np.abs(dy)).tolist()
    dist2 = ((dx * dx + dy * dy) * grid.cell_spacing**2).astype(np.float64)
    cells = order.tolist()

    flat_values = grid.values.reshape(-1)
    nodata = np.float32(grid.nodata)
    slots = [-math.inf] * nslots
    raiser = [-1] * nslots
    flags = np.full(order.size, int(Visibility.INVISIBLE), np.uint8)
    blocker = np.full(order.size, -1, np.int64)
    raised_at: list[int] = []
    vz = None

    for start, stop, r0, c0, r1, c1 in groups:
        part = order[start:stop]
        if store is not None:
            tile = np.empty((r1 - r0, c1 - c0), np.float32)
            for r in range(r0, r1):
                tile[r - r0] = store.read_range(r * ncols + c0, r * ncols + c1)
            stats.tiles_loaded += 1
            z = tile[rows[start:stop] - r0, cols[start:stop] - c0].astype(np.float64)
        else:
            z = flat_values[part].astype(np.float64)
        nod = (z == nodata) if not np.isnan(nodata) else np.isnan(z)
        if vz is None:
            # the viewpoint is the first point of the first tile
            vz = float(z[0]) + float(vp.height_offset)
        with np.errstate(divide="ignore", invalid="ignore"):
            keys = ((z - vz) * np.abs(z - vz) / dist2[start:stop]).tolist()
        nod = nod.tolist()
        for p in range(start, stop):
            q = p - start
            f = cells[p]
            if nod[q]:
                flags[p] = Visibility.NODATA
                continue
            if f == vflat:
                flags[p] = Visibility.VISIBLE
                continue
            key = keys[q]
            c = cslot[p]
            if key > slots[c]:
                flags[p] = Visibility.VISIBLE
            else:
                blocker[p] = raiser[c]
            a, b = klo[p], khi[p]
            stats.slot_touches += b - a + 1
            base = layer[p] * nslots
            for k in range(a, b + 1):
                if slots[k] < key:
                    slots[k] = key
                    raiser[k] = f
                    raised_at.append(base + k % nslots)

    stats.slot_raises = len(raised_at)
    if raised_at:
        stats.max_raises_per_layer_slot = int(np.unique(np.asarray(raised_at),
                                                        return_counts=True)[1].max())
    out = np.empty(order.size, np.uint8)
    out[order] = flags
    blk = np.empty(order.size, np.int64)
    blk[order] = blocker
    if output_store is not None:
        output_store.write_range(0, out)
    vis = VisibilityGrid(out.reshape(nrows, ncols), grid.cell_spacing,
                         grid.xllcorner, grid.yllcorner)
    return CentrifugalResult(vis, stats, np.asarray(slots),
                             order if record_visit_order else None, blk)


def export_slots_csv(slots: np.ndarray, path: str | Path) -> None:
    """Write the final horizon array as ``slot,key`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "key"])
        for k, v in enumerate(np.asarray(slots).tolist()):
            w.writerow([k, repr(v)])


@dataclass
class DisagreementReport:
    """How a centrifugal result differs from a cell-blocking reference.

    Hidden-only points are split by where the cell whose raise hid them
    lies: its corner span covers the point's azimuth (``inside_span``), it
    misses the azimuth by at most one slot width (``within_slot``), or it is
    further off (``beyond_slot``). ``visible_only`` counts points the sweep
    sees but the reference does not.
    """

    valid: int
    disagreements: int
    inside_span: int
    within_slot: int
    beyond_slot: int
    visible_only: int

    @property
    def fraction(self) -> float:
        return self.disagreements / self.valid if self.valid else 0.0

    @property
    def explained(self) -> bool:
        return self.beyond_slot == 0 and self.visible_only == 0


def _angle_gap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(np.mod(a - b + math.pi, TWO_PI) - math.pi)


def disagreement_report(grid: Grid, vp: Viewpoint, result: CentrifugalResult,
                        reference: VisibilityGrid) -> DisagreementReport:
    ncols = grid.ncols
    mine = result.visibility.flags.reshape(-1) == Visibility.VISIBLE
    ref = reference.flags.reshape(-1) == Visibility.VISIBLE
    valid = int(np.count_nonzero(result.visibility.flags != Visibility.NODATA))
    hidden = np.flatnonzero(ref & ~mine)
    q = result.blocker[hidden]
    pr, pc = np.divmod(hidden, ncols)
    qr, qc = np.divmod(q, ncols)
    alpha = np.mod(np.arctan2(vp.row - pr, pc - vp.col).astype(np.float64), TWO_PI)
    lo, hi = corner_span_array(qc - vp.col, vp.row - qr)
    inside = ((lo <= alpha) & (alpha <= hi)) | ((lo <= alpha - TWO_PI) & (alpha - TWO_PI <= hi))
    gap = np.minimum(_angle_gap(alpha, lo), _angle_gap(alpha, hi))
    width = TWO_PI / result.stats.slots
    near = ~inside & (gap <= width)
    far = ~inside & ~near
    return DisagreementReport(valid, int(np.count_nonzero(mine != ref)),
                              int(inside.sum()), int(near.sum()), int(far.sum()),
                              int(np.count_nonzero(mine & ~ref)))
