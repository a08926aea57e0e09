"""Viewpoint-relative coordinates, comparison keys and layer rings.

Offsets are measured in cells: ``dx`` grows eastward with the column index
and ``dy`` grows northward, i.e. ``dy = vrow - i``. Layer ``l`` is the square
ring of points at L-infinity distance ``l`` from the viewpoint.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

FULL_TURN = 8.0  # azimuth keys live in [0, FULL_TURN)

# event kinds, in processing order for equal azimuths
EXIT = 0
CENTER = 1
ENTER = 2


def to_offset(i: int, j: int, vrow: int, vcol: int) -> tuple[int, int]:
    return j - vcol, vrow - i


def to_index(dx: int, dy: int, vrow: int, vcol: int) -> tuple[int, int]:
    return vrow - dy, vcol + dx


def layer_of(dx: int, dy: int) -> int:
    return max(abs(dx), abs(dy))


def elev_key(dz: float, dist2: float) -> float:
    """Signed squared tangent of the elevation angle.

    Monotone in the angle itself, so the sweeps can compare keys without
    taking square roots or arctangents.
    """
    return dz * abs(dz) / dist2


def elev_key_array(dz: np.ndarray, dist2: np.ndarray) -> np.ndarray:
    return dz * np.abs(dz) / dist2


def azimuth_key(dx: float, dy: float) -> float:
    """Counter-clockwise pseudo-angle from due east, in [0, 8).

    Each octant contributes one unit. Inside an octant the value is the
    tangent (or cotangent) relative to the nearest axis, which is monotone
    in the true angle and exact for small rationals.
    """
    if dy >= 0:
        if dx > 0:
            return dy / dx if dy <= dx else 2.0 - dx / dy
        if dy == 0:
            return 4.0
        return 2.0 - dx / dy if -dx <= dy else 4.0 - dy / -dx
    if dx < 0:
        return 4.0 + dy / dx if dy >= dx else 6.0 - dx / dy
    return 6.0 + dx / -dy if dx <= -dy else 8.0 + dy / dx


def key_to_radians(key: float) -> float:
    """Convert an azimuth key back to an angle in radians."""
    octant = min(int(key), 7)
    frac = key - octant
    if octant % 2 == 0:
        inner = math.atan(frac)
    else:
        inner = math.pi / 4 - math.atan(1.0 - frac)
    return octant * math.pi / 4 + inner


def azimuth_radians(dx: float, dy: float) -> float:
    a = math.atan2(dy, dx)
    return a + 2 * math.pi if a < 0 else a


@dataclass(frozen=True)
class CellSpan:
    """Azimuth keys at which the sweep ray meets a cell.

    For cells on the viewpoint's row east of it the span straddles the seam;
    ``enter`` is then negative (the winding is unrolled by one full turn).
    """

    enter: float
    center: float
    exit: float


def reentry_key(dx: int) -> float:
    """Enter azimuth, without unrolling, of the cell due east at distance ``dx``."""
    return azimuth_key(dx - 0.5, -0.5)


def cell_span(dx: int, dy: int) -> CellSpan:
    if dy == 0 and dx > 0:
        return CellSpan(reentry_key(dx) - FULL_TURN, 0.0, azimuth_key(dx - 0.5, 0.5))
    keys = (
        azimuth_key(dx - 0.5, dy - 0.5),
        azimuth_key(dx + 0.5, dy - 0.5),
        azimuth_key(dx - 0.5, dy + 0.5),
        azimuth_key(dx + 0.5, dy + 0.5),
    )
    return CellSpan(min(keys), azimuth_key(dx, dy), max(keys))


def corner_radians(dx: int, dy: int) -> tuple[float, float]:
    """Smallest and largest corner azimuth in radians (seam-unrolled)."""
    if dy == 0 and dx > 0:
        half = math.atan2(0.5, dx - 0.5)
        return -half, half
    angles = [azimuth_radians(dx + sx, dy + sy) for sx in (-0.5, 0.5) for sy in (-0.5, 0.5)]
    return min(angles), max(angles)


# ---------------------------------------------------------------------------
# layer rings


def ring_size(layer: int) -> int:
    return 1 if layer == 0 else 8 * layer


def ring_offsets(layer: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets of a layer in counter-clockwise order starting due east.

    The east side below the viewpoint row comes last, so the sequence ends at
    ``(layer, -1)``.
    """
    if layer == 0:
        return np.zeros(1, np.int64), np.zeros(1, np.int64)
    l = layer
    k = np.arange(8 * l, dtype=np.int64)
    dx = np.empty_like(k)
    dy = np.empty_like(k)
    s = k < l
    dx[s], dy[s] = l, k[s]
    s = (k >= l) & (k < 3 * l)
    dx[s], dy[s] = l - (k[s] - l), l
    s = (k >= 3 * l) & (k < 5 * l)
    dx[s], dy[s] = -l, l - (k[s] - 3 * l)
    s = (k >= 5 * l) & (k < 7 * l)
    dx[s], dy[s] = -l + (k[s] - 5 * l), -l
    s = k >= 7 * l
    dx[s], dy[s] = l, -l + (k[s] - 7 * l)
    return dx, dy


def ring_offset_at(layer: int, k: int) -> tuple[int, int]:
    """Scalar version of `ring_offsets` for ring position ``k`` (mod 8*layer)."""
    l = layer
    k %= 8 * l
    if k < l:
        return l, k
    if k < 3 * l:
        return l - (k - l), l
    if k < 5 * l:
        return -l, l - (k - 3 * l)
    if k < 7 * l:
        return -l + (k - 5 * l), -l
    return l, -l + (k - 7 * l)


@dataclass(frozen=True)
class OffsetBounds:
    """Inclusive offset ranges that stay inside the grid."""

    xmin: int
    xmax: int
    ymin: int
    ymax: int

    @classmethod
    def of(cls, nrows: int, ncols: int, vrow: int, vcol: int) -> OffsetBounds:
        return cls(-vcol, ncols - 1 - vcol, vrow - (nrows - 1), vrow)

    def contains(self, dx: int, dy: int) -> bool:
        return self.xmin <= dx <= self.xmax and self.ymin <= dy <= self.ymax


def ring_next_inside(layer: int, k: int, bounds: OffsetBounds, stop: int) -> int:
    """First ring position ``>= k`` and ``< stop`` that lies inside the grid.

    Positions may run past ``8*layer`` to revisit the start of the ring.
    Returns ``stop`` if there is none. Each side is handled in constant time.
    """
    l = layer
    n = 8 * l
    while k < stop:
        base = (k // n) * n
        r = k - base
        if r < l:
            side_end = l
            if not (bounds.xmin <= l <= bounds.xmax):
                k = base + side_end
                continue
            lo = max(bounds.ymin, 0)
            hi = min(bounds.ymax, l - 1)
            cand = max(r, lo)  # dy == r on this side
            if cand <= hi:
                return min(base + cand, stop)
            k = base + side_end
        elif r < 3 * l:
            side_end = 3 * l
            if not (bounds.ymin <= l <= bounds.ymax):
                k = base + side_end
                continue
            # dx = 2l - r, decreasing from l to -l+1
            hi_dx = min(bounds.xmax, l)
            lo_dx = max(bounds.xmin, -l + 1)
            cand = max(r, 2 * l - hi_dx)
            if lo_dx <= hi_dx and cand <= 2 * l - lo_dx:
                return min(base + cand, stop)
            k = base + side_end
        elif r < 5 * l:
            side_end = 5 * l
            if not (bounds.xmin <= -l <= bounds.xmax):
                k = base + side_end
                continue
            # dy = 4l - r, decreasing from l to -l+1
            hi_dy = min(bounds.ymax, l)
            lo_dy = max(bounds.ymin, -l + 1)
            cand = max(r, 4 * l - hi_dy)
            if lo_dy <= hi_dy and cand <= 4 * l - lo_dy:
                return min(base + cand, stop)
            k = base + side_end
        elif r < 7 * l:
            side_end = 7 * l
            if not (bounds.ymin <= -l <= bounds.ymax):
                k = base + side_end
                continue
            # dx = r - 6l, increasing from -l to l-1
            lo_dx = max(bounds.xmin, -l)
            hi_dx = min(bounds.xmax, l - 1)
            cand = max(r, lo_dx + 6 * l)
            if lo_dx <= hi_dx and cand <= hi_dx + 6 * l:
                return min(base + cand, stop)
            k = base + side_end
        else:
            side_end = 8 * l
            if not (bounds.xmin <= l <= bounds.xmax):
                k = base + side_end
                continue
            # dy = r - 8l, increasing from -l to -1
            lo_dy = max(bounds.ymin, -l)
            hi_dy = min(bounds.ymax, -1)
            cand = max(r, lo_dy + 8 * l)
            if lo_dy <= hi_dy and cand <= hi_dy + 8 * l:
                return min(base + cand, stop)
            k = base + side_end
    return stop


# ---------------------------------------------------------------------------
# screen projection


def screen_t(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Horizontal screen coordinate in [0, 4] of points around the viewpoint.

    East maps to 0, south to 1, west to 2, north to 3. Points due east get 0;
    callers that need the closing copy at 4 add it themselves. The value is a
    ratio of small integers, so collinear points project to identical floats.
    """
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    den = np.abs(dx) + np.abs(dy)
    south = dy <= 0
    return np.where(south, 1.0 - dx / den, 3.0 + dx / den)


def screen_point(dx: float, dy: float, dz: float) -> tuple[float, float]:
    """Project a relative point (``dz`` measured from the eye) to ``(t, h)``."""
    den = abs(dx) + abs(dy)
    if den == 0:
        raise ValueError("the viewpoint itself has no projection")
    t = 1.0 - dx / den if dy <= 0 else 3.0 + dx / den
    return t, dz / den


def tile_dist(tile: tuple[int, int, int, int], vrow: int, vcol: int) -> int:
    """L-infinity distance from the viewpoint to the nearest point of a tile.

    ``tile`` is ``(row0, col0, nrows, ncols)``. Zero if the tile holds the
    viewpoint.
    """
    r0, c0, h, w = tile
    di = max(r0 - vrow, 0, vrow - (r0 + h - 1))
    dj = max(c0 - vcol, 0, vcol - (c0 + w - 1))
    return max(di, dj)


class LOSModel(str, enum.Enum):
    """How terrain between grid points is reconstructed for line-of-sight tests.

    LAYERS interpolates only along the square rings around the viewpoint;
    GRIDLINES interpolates along every horizontal and vertical grid line.
    """

    LAYERS = "layers"
    GRIDLINES = "gridlines"
