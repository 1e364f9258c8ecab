"""Raycast kernels. Numba-compiled when available, with a pure-Python fallback."""

import math

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range

_BIG = 1.0e30


@njit(cache=True, parallel=True)
def raycast_batch_kernel(occ, gox, goy, goz, cell, box_lo, box_hi, has_occ,
                         origins, dirs, max_range, out):
    """First-hit distance per ray against grid occupancy plus the z<0 bedrock rule.

    Rays outside the occupied-cell AABB are resolved analytically, so empty or
    mostly-empty terrains cost O(1) per ray. Each ray writes only its own slot,
    so the parallel loop is bit-deterministic.
    """
    nx, ny, nz = occ.shape
    bx0 = gox + box_lo[0] * cell
    by0 = goy + box_lo[1] * cell
    bz0 = goz + box_lo[2] * cell
    bx1 = gox + (box_hi[0] + 1) * cell
    by1 = goy + (box_hi[1] + 1) * cell
    bz1 = goz + (box_hi[2] + 1) * cell
    n = origins.shape[0]
    for i in prange(n):
        ox = origins[i, 0]
        oy = origins[i, 1]
        oz = origins[i, 2]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        if oz < 0.0:
            out[i] = 0.0
            continue
        t_bed = _BIG
        if dz < 0.0:
            t_bed = -oz / dz
        limit = max_range if max_range < t_bed else t_bed
        hit = _BIG
        if has_occ:
            # slab test against the occupied AABB
            t0 = 0.0
            t1 = limit
            ok = True
            for ax in range(3):
                if ax == 0:
                    o, d, lo, hi = ox, dx, bx0, bx1
                elif ax == 1:
                    o, d, lo, hi = oy, dy, by0, by1
                else:
                    o, d, lo, hi = oz, dz, bz0, bz1
                if d != 0.0:
                    ta = (lo - o) / d
                    tb = (hi - o) / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > t0:
                        t0 = ta
                    if tb < t1:
                        t1 = tb
                elif o < lo or o > hi:
                    ok = False
                    break
            if ok and t0 <= t1:
                # start the grid march just inside the box
                te = t0 + 1e-9
                px = (ox + dx * te - gox) / cell
                py = (oy + dy * te - goy) / cell
                pz = (oz + dz * te - goz) / cell
                ix = int(math.floor(px))
                iy = int(math.floor(py))
                iz = int(math.floor(pz))
                if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz and occ[ix, iy, iz]:
                    hit = t0
                else:
                    sx = 1 if dx >= 0.0 else -1
                    sy = 1 if dy >= 0.0 else -1
                    sz = 1 if dz >= 0.0 else -1
                    tdx = abs(cell / dx) if dx != 0.0 else _BIG
                    tdy = abs(cell / dy) if dy != 0.0 else _BIG
                    tdz = abs(cell / dz) if dz != 0.0 else _BIG
                    tmx = ((ix + (1 if sx > 0 else 0)) * cell + gox - ox) / dx if dx != 0.0 else _BIG
                    tmy = ((iy + (1 if sy > 0 else 0)) * cell + goy - oy) / dy if dy != 0.0 else _BIG
                    tmz = ((iz + (1 if sz > 0 else 0)) * cell + goz - oz) / dz if dz != 0.0 else _BIG
                    max_iter = nx + ny + nz + 3
                    for _ in range(max_iter):
                        if tmx < tmy:
                            if tmx < tmz:
                                t_entry = tmx
                                ix += sx
                                tmx += tdx
                            else:
                                t_entry = tmz
                                iz += sz
                                tmz += tdz
                        elif tmy < tmz:
                            t_entry = tmy
                            iy += sy
                            tmy += tdy
                        else:
                            t_entry = tmz
                            iz += sz
                            tmz += tdz
                        if t_entry > t1:
                            break
                        if 0 <= ix < nx and 0 <= iy < ny and 0 <= iz < nz:
                            if occ[ix, iy, iz]:
                                hit = t_entry
                                break
        best = hit if hit < t_bed else t_bed
        out[i] = best if best < max_range else max_range


def occupied_aabb(occ):
    """Inclusive cell-index bounds of occupied cells, or None when empty."""
    idx = np.nonzero(occ)
    if idx[0].size == 0:
        return None
    lo = np.array([a.min() for a in idx], dtype=np.int64)
    hi = np.array([a.max() for a in idx], dtype=np.int64)
    return lo, hi
