"""Brute-force visibility references.

Two models are covered:

* cell blocking: a grid point is hidden when the open segment from the
  viewpoint to it passes through the open interior of some other valid cell
  whose elevation key is at least its own;
* interpolated terrain: the segment is tested against linearly interpolated
  elevations wherever it crosses a grid line (or a layer ring), and a
  crossing hides the target only if it is strictly higher.

Every function here exists in a slow scalar form that uses exact rational
arithmetic and a whole-grid numpy form. The numpy forms fall back to the
scalar ones for near-ties.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .geometry import LOSModel, elev_key, elev_key_array
from .grid import Grid, Viewpoint, Visibility, VisibilityGrid, check_inputs

_NEAR_TIE = 1e-9


def _open_interval(lo: Fraction, hi: Fraction, d: int) -> tuple[Fraction, Fraction] | None:
    """Parameter range of ``s`` with ``lo < s*d < hi``; None if empty."""
    if d == 0:
        return (Fraction(-10**9), Fraction(10**9)) if lo < 0 < hi else None
    a, b = lo / d, hi / d
    return (a, b) if d > 0 else (b, a)


def segment_meets_cell(px: int, py: int, cx: int, cy: int) -> bool:
    """Does the open segment (0,0)-(px,py) meet the open unit cell at (cx,cy)?"""
    half = Fraction(1, 2)
    ix = _open_interval(cx - half, cx + half, px)
    iy = _open_interval(cy - half, cy + half, py)
    if ix is None or iy is None:
        return False
    lo = max(ix[0], iy[0], Fraction(0))
    hi = min(ix[1], iy[1], Fraction(1))
    return lo < hi


def _rel_elevations(grid: Grid, vp: Viewpoint) -> tuple[np.ndarray, np.ndarray]:
    vz = vp.elevation(grid)
    return grid.values.astype(np.float64) - vz, grid.nodata_mask()


def vk_point_visible(grid: Grid, vp: Viewpoint, i: int, j: int) -> bool:
    """Cell-blocking visibility of one point, by testing every candidate cell."""
    if (i, j) == (vp.row, vp.col):
        return True
    zrel, nod = _rel_elevations(grid, vp)
    px, py = j - vp.col, vp.row - i
    s2 = grid.cell_spacing**2
    target = elev_key(zrel[i, j], (px * px + py * py) * s2)
    for cx in range(min(0, px), max(0, px) + 1):
        for cy in range(min(0, py), max(0, py) + 1):
            if (cx, cy) in ((0, 0), (px, py)):
                continue
            qi, qj = vp.row - cy, vp.col + cx
            if nod[qi, qj] or not segment_meets_cell(px, py, cx, cy):
                continue
            if elev_key(zrel[qi, qj], (cx * cx + cy * cy) * s2) >= target:
                return False
    return True


def _finish(grid: Grid, vp: Viewpoint, visible: np.ndarray) -> VisibilityGrid:
    out = VisibilityGrid.like(grid)
    nod = grid.nodata_mask()
    out.flags[visible & ~nod] = Visibility.VISIBLE
    out.flags[vp.row, vp.col] = Visibility.VISIBLE
    return out


def _targets(grid: Grid, vp: Viewpoint):
    rows, cols = np.indices(grid.values.shape)
    px = (cols - vp.col).ravel().astype(np.int64)
    py = (vp.row - rows).ravel().astype(np.int64)
    return px, py


def vk_viewshed(grid: Grid, vp: Viewpoint) -> VisibilityGrid:
    """Cell-blocking viewshed of the whole grid.

    Targets are processed together, one strip of the major axis at a time.
    Inside a strip the segment spans less than one cell along the minor axis,
    so at most two cells per strip can be crossed.
    """
    check_inputs(grid, vp)
    zrel, nod = _rel_elevations(grid, vp)
    nrows, ncols = grid.values.shape
    px, py = _targets(grid, vp)
    s2 = grid.cell_spacing**2
    keys = elev_key_array(zrel.ravel(), np.maximum(px * px + py * py, 1) * s2)
    keys[nod.ravel()] = -np.inf
    nodflat = nod.ravel()

    xmajor = np.abs(px) >= np.abs(py)
    amaj = np.where(xmajor, np.abs(px), np.abs(py))
    smaj = np.where(xmajor, np.sign(px), np.sign(py))
    bmin = np.where(xmajor, py, px)  # signed minor offset of the target
    blocker = np.full(px.size, -np.inf)

    for c in range(0, int(amaj.max(initial=0)) + 1):
        sel = np.nonzero(amaj >= max(c, 1))[0]
        if sel.size == 0:
            break
        a = amaj[sel]
        b = bmin[sel]
        lo2 = np.maximum(2 * c - 1, 0)
        hi2 = np.minimum(2 * c + 1, 2 * a)
        y_lo = b * lo2
        y_hi = b * hi2
        ymin = np.minimum(y_lo, y_hi)
        ymax = np.maximum(y_lo, y_hi)
        r_lo = (ymin - a) // (2 * a) + 1
        r_hi = -((-(ymax + a)) // (2 * a)) - 1
        for off in (0, 1):
            r = r_lo + off
            ok = r <= r_hi
            ok &= ~((c == 0) & (r == 0))
            ok &= ~((c == a) & (r == b))
            if not ok.any():
                continue
            idx = sel[ok]
            rr = r[ok]
            s = smaj[idx]
            cx = np.where(xmajor[idx], s * c, rr)
            cy = np.where(xmajor[idx], rr, s * c)
            flat = (vp.row - cy) * ncols + (vp.col + cx)
            np.maximum.at(blocker, idx, keys[flat])
    visible = (blocker < keys) | (amaj == 0)
    visible &= ~nodflat
    return _finish(grid, vp, visible.reshape(nrows, ncols))


def vk_viewshed_bruteforce(grid: Grid, vp: Viewpoint) -> VisibilityGrid:
    check_inputs(grid, vp)
    vis = np.zeros(grid.values.shape, dtype=bool)
    for i in range(grid.nrows):
        for j in range(grid.ncols):
            vis[i, j] = vk_point_visible(grid, vp, i, j)
    return _finish(grid, vp, vis)


# ---------------------------------------------------------------------------
# interpolated terrain


def _crossings(px: int, py: int, model: LOSModel):
    """Yield ``(s, (x0, y0), (x1, y1), f)`` for each grid-line crossing.

    ``s`` is the fraction of the way to the target and the interpolated
    elevation is ``(1-f)*z(x0,y0) + f*z(x1,y1)``; exact hits on a grid point
    have both endpoints equal.
    """
    use_x = model is LOSModel.GRIDLINES or abs(px) >= abs(py)
    use_y = model is LOSModel.GRIDLINES or abs(py) >= abs(px)
    if use_x and px != 0:
        sx = 1 if px > 0 else -1
        for c in range(1, abs(px)):
            s = Fraction(c, abs(px))
            y = py * s
            y0 = math.floor(y)
            yield s, (sx * c, y0), (sx * c, y0 + (y != y0)), y - y0
    if use_y and py != 0:
        sy = 1 if py > 0 else -1
        for r in range(1, abs(py)):
            s = Fraction(r, abs(py))
            x = px * s
            x0 = math.floor(x)
            yield s, (x0, sy * r), (x0 + (x != x0), sy * r), x - x0


def r3_point_visible(grid: Grid, vp: Viewpoint, i: int, j: int,
                     model: LOSModel = LOSModel.GRIDLINES, strict: bool = True) -> bool:
    """Interpolated-terrain visibility of one point, in exact arithmetic.

    A crossing is transparent when either interpolation endpoint is nodata.
    With ``strict`` a crossing must be strictly higher to hide the target.
    """
    if (i, j) == (vp.row, vp.col):
        return True
    model = LOSModel(model)
    nod = grid.nodata_mask()
    vz = Fraction(float(grid.values[vp.row, vp.col])) + Fraction(float(vp.height_offset))
    px, py = j - vp.col, vp.row - i
    zp = Fraction(float(grid.values[i, j])) - vz

    def z_at(x: int, y: int) -> Fraction | None:
        qi, qj = vp.row - y, vp.col + x
        if nod[qi, qj]:
            return None
        return Fraction(float(grid.values[qi, qj]))

    for s, a, b, f in _crossings(px, py, model):
        za, zb = z_at(*a), z_at(*b)
        if za is None or zb is None:
            continue
        zc = (1 - f) * za + f * zb - vz
        margin = zc - s * zp
        if margin > 0 or (not strict and margin == 0):
            return False
    return True


def r3_viewshed(grid: Grid, vp: Viewpoint, model: LOSModel = LOSModel.GRIDLINES,
                strict: bool = True) -> VisibilityGrid:
    """Interpolated-terrain viewshed of the whole grid."""
    check_inputs(grid, vp)
    model = LOSModel(model)
    nrows, ncols = grid.values.shape
    vz = vp.elevation(grid)
    z = grid.values.astype(np.float64).ravel()
    nod = grid.nodata_mask().ravel()
    px, py = _targets(grid, vp)
    zrel_p = z - vz
    hidden = np.zeros(px.size, dtype=bool)
    near = np.zeros(px.size, dtype=bool)

    def crossing_batch(sel, s, x0, y0, x1, y1, f):
        f0 = (vp.row - y0) * ncols + (vp.col + x0)
        f1 = (vp.row - y1) * ncols + (vp.col + x1)
        ok = ~(nod[f0] | nod[f1])
        sel, s, f, f0, f1 = sel[ok], s[ok], f[ok], f0[ok], f1[ok]
        z0, z1 = z[f0], z[f1]
        zc = z0 + f * (z1 - z0) - vz
        rhs = s * zrel_p[sel]
        margin = zc - rhs
        tol = _NEAR_TIE * (np.abs(zc) + np.abs(rhs) + np.abs(z0) + np.abs(z1) + abs(vz)) + 1e-300
        hidden[sel[margin > tol]] = True
        near[sel[np.abs(margin) <= tol]] = True

    ax, ay = np.abs(px), np.abs(py)
    use_x = np.ones(px.size, bool) if model is LOSModel.GRIDLINES else ax >= ay
    use_y = np.ones(px.size, bool) if model is LOSModel.GRIDLINES else ay >= ax
    for c in range(1, int(ax.max(initial=0))):
        sel = np.nonzero((ax > c) & use_x)[0]
        if sel.size == 0:
            break
        num = py[sel] * c
        den = ax[sel]
        y0 = num // den
        rem = num - y0 * den
        x = np.sign(px[sel]) * c
        crossing_batch(sel, c / den, x, y0, x, y0 + (rem != 0), rem / den)
    for r in range(1, int(ay.max(initial=0))):
        sel = np.nonzero((ay > r) & use_y)[0]
        if sel.size == 0:
            break
        num = px[sel] * r
        den = ay[sel]
        x0 = num // den
        rem = num - x0 * den
        y = np.sign(py[sel]) * r
        crossing_batch(sel, r / den, x0, y, x0 + (rem != 0), y, rem / den)

    visible = ~hidden & ~nod
    for k in np.nonzero(near & visible)[0]:
        i, j = divmod(int(k), ncols)
        visible[k] = r3_point_visible(grid, vp, i, j, model, strict)
    return _finish(grid, vp, visible.reshape(nrows, ncols))


def r3_viewshed_bruteforce(grid: Grid, vp: Viewpoint, model: LOSModel = LOSModel.GRIDLINES,
                           strict: bool = True) -> VisibilityGrid:
    check_inputs(grid, vp)
    vis = np.zeros(grid.values.shape, dtype=bool)
    for i in range(grid.nrows):
        for j in range(grid.ncols):
            vis[i, j] = r3_point_visible(grid, vp, i, j, model, strict)
    return _finish(grid, vp, vis)
