"""Horizons: piecewise-linear upper envelopes on the viewpoint's screen.

A horizon is a sequence of vertices ``(t, h)`` with non-decreasing ``t`` and
a flag per consecutive pair saying whether the segment between them is
present. Where no segment is present the horizon is minus infinity. A jump
is stored as two or three vertices with equal ``t``: the left limit, an
optional isolated peak, and the right limit. The value at a jump is the
largest of them, so a horizon is upper semicontinuous and a lone vertex
still blocks the single direction it lies in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NEG_INF = -np.inf
COLLINEAR_TOL = 1e-12
TIE_TOL = 1e-10
TIE_FLOOR = 1e-13  # share of the horizon's largest magnitude treated as rounding noise


@dataclass
class Horizon:
    t: np.ndarray
    h: np.ndarray
    link: np.ndarray  # link[k]: segment between vertex k and k+1 is present

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        self.link = np.asarray(self.link, dtype=bool)
        if self.link.size != max(self.t.size - 1, 0):
            raise ValueError("need one link flag per consecutive vertex pair")
        self._gmax: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.t.size)

    @classmethod
    def empty(cls) -> Horizon:
        return cls(np.empty(0), np.empty(0), np.empty(0, bool))

    @classmethod
    def polyline(cls, t, h) -> Horizon:
        t = np.asarray(t, dtype=np.float64)
        return cls(t, h, np.ones(max(t.size - 1, 0), bool))

    @classmethod
    def segments(cls, t0, h0, t1, h1) -> Horizon:
        """Disjoint segments, given sorted by ``t0`` with ``t1[k] <= t0[k+1]``."""
        n = len(t0)
        t = np.empty(2 * n)
        h = np.empty(2 * n)
        t[0::2], t[1::2] = t0, t1
        h[0::2], h[1::2] = h0, h1
        link = np.zeros(max(2 * n - 1, 0), bool)
        link[0::2] = True
        return cls(t, h, link)

    def group_max(self) -> np.ndarray:
        """For each vertex, the largest ``h`` among vertices with the same ``t``."""
        if self._gmax is None:
            if self.t.size == 0:
                self._gmax = np.empty(0)
            else:
                starts = np.flatnonzero(np.diff(self.t, prepend=-np.inf) > 0)
                gm = np.maximum.reduceat(self.h, starts)
                sizes = np.diff(starts, append=self.t.size)
                self._gmax = np.repeat(gm, sizes)
        return self._gmax

    def limits(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Point value, left limit and right limit at each (sorted or not) ``x``."""
        x = np.asarray(x, dtype=np.float64)
        n = self.t.size
        pv = np.full(x.shape, NEG_INF)
        lv = np.full(x.shape, NEG_INF)
        rv = np.full(x.shape, NEG_INF)
        if n == 0:
            return pv, lv, rv
        t, h, link = self.t, self.h, self.link
        lo, on = _locate(t, x)
        if on.any():
            io = np.nonzero(on)[0]
            pv[io] = self.group_max()[lo[io]]
            a = lo[io]
            ok = a > 0
            ok[ok] = link[a[ok] - 1]
            lv[io[ok]] = h[a[ok]]
            b = np.searchsorted(t, x[io], "right") - 1
            ok = b < n - 1
            ok[ok] = link[b[ok]]
            rv[io[ok]] = h[b[ok]]
        mid = ~on & (lo > 0) & (lo < n)
        if mid.any():
            im = np.nonzero(mid)[0]
            k = lo[im] - 1
            ok = link[k]
            im, k = im[ok], k[ok]
            t0, t1 = t[k], t[k + 1]
            val = h[k] + (x[im] - t0) / (t1 - t0) * (h[k + 1] - h[k])
            pv[im] = lv[im] = rv[im] = val
        return pv, lv, rv

    def evaluate(self, x) -> np.ndarray:
        """Horizon height at each ``x``, minus infinity in gaps."""
        return self.limits(np.asarray(x, dtype=np.float64))[0]

    def evaluate_seam(self, x) -> np.ndarray:
        """Like `evaluate`, but directions at 0 also see the copy at 4."""
        x = np.asarray(x, dtype=np.float64)
        out = self.evaluate(x)
        seam = x == 0.0
        if seam.any():
            out[seam] = np.maximum(out[seam], self.evaluate(np.full(seam.sum(), 4.0)))
        return out

    def is_canonical(self) -> bool:
        if self.t.size and np.any(np.diff(self.t) < 0):
            return False
        if self.link.size and np.any(self.link & (np.diff(self.t) == 0)):
            return False
        return True


def _locate(t: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left insertion points of ``x`` in ``t`` and whether ``x`` hits a vertex."""
    lo = np.searchsorted(t, x, "left")
    on = lo < t.size
    on[on] = t[lo[on]] == x[on]
    return lo, on


def _assemble(xs, lv, pv, rv, present, ct, ch, has_cross) -> Horizon:
    """Turn per-breakpoint limits and per-interval crossings into a horizon.

    Each breakpoint contributes, in order, a left-limit vertex, a merged
    vertex (when both limits agree with the point value), an isolated peak
    and a right-limit vertex; the interval after it may add a crossing.
    """
    n = xs.size
    lfin = np.isfinite(lv)
    rfin = np.isfinite(rv)
    merged = lfin & rfin & (lv == rv) & (pv == lv)
    peak = np.isfinite(pv) & (pv > np.maximum(lv, rv))
    inter = np.append(present, False)
    cross = np.append(has_cross, False)

    T = np.repeat(xs, 5).reshape(n, 5)
    T[:-1, 4] = ct
    H = np.stack([lv, lv, pv, rv, np.append(ch, 0.0)], axis=1)
    E = np.stack([lfin & ~merged, merged, peak, rfin & ~merged, cross], axis=1)
    R = np.stack([np.zeros(n, bool), merged & inter, np.zeros(n, bool), inter,
                  np.ones(n, bool)], axis=1)
    sel = E.ravel()
    t = T.ravel()[sel]
    h = H.ravel()[sel]
    link = R.ravel()[sel][:-1]
    return _drop_collinear(Horizon(t, h, link))


def _drop_collinear(hz: Horizon) -> Horizon:
    """Remove vertices interior to a straight stretch.

    Only every other candidate of a run is removed per pass, so each removal
    is checked against the neighbours that actually remain.
    """
    while True:
        t, h, link = hz.t, hz.h, hz.link
        if t.size < 3:
            return hz
        t0, t1, t2 = t[:-2], t[1:-1], t[2:]
        h0, h1, h2 = h[:-2], h[1:-1], h[2:]
        cand = link[:-1] & link[1:] & (t0 < t1) & (t1 < t2)
        cross = (t1 - t0) * (h2 - h0) - (t2 - t0) * (h1 - h0)
        scale = (t2 - t0) * (np.abs(h0) + np.abs(h1) + np.abs(h2) + 1e-300)
        cand &= np.abs(cross) <= COLLINEAR_TOL * scale
        if not cand.any():
            return hz
        idx = np.arange(cand.size)
        run_start = np.maximum.accumulate(np.where(~cand, idx + 1, 0))
        drop = cand & ((idx - run_start) % 2 == 0)
        keep = np.flatnonzero(np.concatenate(([True], ~drop, [True])))
        a, b = keep[:-1], keep[1:]
        new_link = np.where(b == a + 1, link[np.minimum(a, link.size - 1)], True)
        hz = Horizon(t[keep], h[keep], new_link)


def merge(f: Horizon, g: Horizon) -> Horizon:
    """Upper envelope of two horizons."""
    if len(f) == 0 and len(g) == 0:
        return Horizon.empty()
    xs = np.union1d(f.t, g.t)
    pf, lf, rf = f.limits(xs)
    pg, lg, rg = g.limits(xs)
    lv = np.maximum(lf, lg)
    rv = np.maximum(rf, rg)
    pv = np.maximum(pf, pg)
    fpres = np.isfinite(rf[:-1])
    gpres = np.isfinite(rg[:-1])
    present = fpres | gpres
    both = fpres & gpres
    with np.errstate(invalid="ignore"):
        d0 = rf[:-1] - rg[:-1]
        d1 = lf[1:] - lg[1:]
        has_cross = both & (((d0 > 0) & (d1 < 0)) | ((d0 < 0) & (d1 > 0)))
    ct = np.zeros(xs.size - 1)
    ch = np.zeros(xs.size - 1)
    if has_cross.any():
        k = np.nonzero(has_cross)[0]
        s = d0[k] / (d0[k] - d1[k])
        x0, x1 = xs[k], xs[k + 1]
        tc = x0 + s * (x1 - x0)
        hc = rf[k] + s * (lf[k + 1] - rf[k])
        inside = (tc > x0) & (tc < x1)
        has_cross[k[~inside]] = False
        ct[k], ch[k] = tc, hc
    return _assemble(xs, lv, pv, rv, present, ct, ch, has_cross)


def normalize(hz: Horizon) -> Horizon:
    return merge(hz, Horizon.empty())


def merge_all(horizons: list[Horizon]) -> Horizon:
    """Balanced pairwise merging."""
    items = [h for h in horizons if len(h)]
    if not items:
        return Horizon.empty()
    while len(items) > 1:
        nxt = [merge(items[k], items[k + 1]) for k in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return normalize(items[0])


def upper_envelope(t0, h0, t1, h1) -> Horizon:
    """Upper envelope of arbitrary segments ``(t0,h0)-(t1,h1)`` with t0 < t1."""
    parts = [Horizon.polyline([a, b], [c, d]) for a, c, b, d in zip(t0, h0, t1, h1)]
    return merge_all(parts)


def _local_scale(hz: Horizon, x: np.ndarray) -> np.ndarray:
    """Magnitude of the horizon vertices that determine its value at ``x``."""
    out = np.zeros(x.shape)
    n = len(hz)
    if n == 0:
        return out
    ah = np.abs(hz.h)
    lo, on = _locate(hz.t, x)
    hi = np.searchsorted(hz.t, x[on], "right")
    out[on] = np.maximum(ah[lo[on]], ah[hi - 1])
    mid = ~on & (lo > 0) & (lo < n)
    out[mid] = np.maximum(ah[lo[mid] - 1], ah[lo[mid]])
    return out


def occluded(hz: Horizon, t: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Which points ``(t, h)`` lie strictly below the horizon.

    Heights within `TIE_TOL` of the horizon, relative to the magnitudes
    involved, count as ties and stay visible. Interpolated crossings carry
    rounding from the segments that produced them, so a small floor
    proportional to the whole horizon is added.
    """
    t = np.asarray(t, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    top = hz.evaluate_seam(t)
    scale = np.maximum(np.abs(h), _local_scale(hz, t))
    seam = t == 0.0
    if seam.any():
        scale[seam] = np.maximum(scale[seam], _local_scale(hz, np.full(seam.sum(), 4.0)))
    floor = TIE_FLOOR * float(np.abs(hz.h).max()) if len(hz) else 0.0
    return top > h + TIE_TOL * scale + floor


def segment_count(hz: Horizon) -> int:
    return int(hz.link.sum())
