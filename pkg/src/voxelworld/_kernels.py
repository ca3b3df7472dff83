"""Compiled inner loops: grid marching, shadow rays and per-hit shading.

Every kernel is ``nogil`` so worker threads run them concurrently.  Arrays
are indexed ``[l, m, n]``; occupant id ``-1`` means a free cell.
"""
import math

import numpy as np
from numba import njit

# offsets d with 0 < |d|^2 <= 9; the normal is minus the sum of occupied offsets
_r = np.arange(-3, 4)
_d = np.stack(np.meshgrid(_r, _r, _r, indexing="ij"), -1).reshape(-1, 3)
_sq = (_d * _d).sum(1)
STENCIL = np.ascontiguousarray(_d[(_sq > 0) & (_sq <= 9)].astype(np.int64))
del _r, _d, _sq


@njit(cache=True, nogil=True)
def march(o, d, lo, cell, dims, t_lo, t_hi, cells, times):
    """Amanatides-Woo stepping; fills ``cells``/``times`` and returns the count.

    Ties between axes step x, then y, then z.
    """
    t0 = t_lo
    t1 = t_hi
    for a in range(3):
        lo_a = lo[a]
        hi_a = lo[a] + dims[a] * cell
        if d[a] == 0.0:
            if o[a] < lo_a or o[a] >= hi_a:
                return 0
        else:
            ta = (lo_a - o[a]) / d[a]
            tb = (hi_a - o[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if not t0 < t1:
        return 0
    ix = np.empty(3, np.int64)
    step = np.zeros(3, np.int64)
    tnext = np.empty(3)
    for a in range(3):
        q = (o[a] + d[a] * t0 - lo[a]) / cell
        i = math.floor(q)
        if d[a] < 0.0 and i == q:
            i -= 1
        i = min(max(i, 0), dims[a] - 1)
        ix[a] = i
        if d[a] > 0.0:
            step[a] = 1
            tnext[a] = (lo[a] + (i + 1) * cell - o[a]) / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            tnext[a] = (lo[a] + i * cell - o[a]) / d[a]
        else:
            tnext[a] = np.inf
    k = 0
    t_cur = t0
    cap = cells.shape[0]
    while k < cap:
        a = 0
        if tnext[1] < tnext[a]:
            a = 1
        if tnext[2] < tnext[a]:
            a = 2
        tn = tnext[a]
        cells[k, 0] = ix[0]
        cells[k, 1] = ix[1]
        cells[k, 2] = ix[2]
        times[k, 0] = t_cur
        times[k, 1] = max(min(tn, t1), t_cur)
        k += 1
        if tn >= t1:
            break
        ix[a] += step[a]
        if ix[a] < 0 or ix[a] >= dims[a]:
            break
        edge = ix[a] + 1 if step[a] > 0 else ix[a]
        tnext[a] = (lo[a] + edge * cell - o[a]) / d[a]
        t_cur = max(tn, t_cur)
    return k


@njit(cache=True, nogil=True)
def first_occupied(cells, count, occ, off, skip, mask, use_mask):
    """Index of the first marched cell with an occupant, or -1."""
    for k in range(count):
        l = cells[k, 0]
        m = cells[k, 1]
        n = cells[k, 2]
        if use_mask and not mask[l, m, n]:
            continue
        wl = l + off[0]
        wm = m + off[1]
        wn = n + off[2]
        if wl == skip[0] and wm == skip[1] and wn == skip[2]:
            continue
        if occ[wl, wm, wn] >= 0:
            return k
    return -1


@njit(cache=True, nogil=True)
def optical_depth(cells, times, count, absorb, t0, t1):
    s = 0.0
    for k in range(count):
        a = max(times[k, 0], t0)
        b = min(times[k, 1], t1)
        if b > a:
            s += absorb[cells[k, 0], cells[k, 1], cells[k, 2]] * (b - a)
    return s


@njit(cache=True, nogil=True)
def _buffers(dims):
    cap = dims[0] + dims[1] + dims[2] + 3
    return np.empty((cap, 3), np.int64), np.empty((cap, 2))


@njit(cache=True, nogil=True)
def normal_at(occ, l, m, n, fx, fy, fz):
    nx, ny, nz = occ.shape
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for s in range(STENCIL.shape[0]):
        a = l + STENCIL[s, 0]
        b = m + STENCIL[s, 1]
        c = n + STENCIL[s, 2]
        if 0 <= a < nx and 0 <= b < ny and 0 <= c < nz and occ[a, b, c] >= 0:
            gx -= STENCIL[s, 0]
            gy -= STENCIL[s, 1]
            gz -= STENCIL[s, 2]
    norm = math.sqrt(gx * gx + gy * gy + gz * gz)
    if norm == 0.0:
        return fx, fy, fz
    return gx / norm, gy / norm, gz / norm


@njit(cache=True, nogil=True)
def shadow(occ, absorb, lo, cell, l, m, n, light, attenuated, cells, times):
    o = np.empty(3)
    o[0] = lo[0] + (l + 0.5) * cell
    o[1] = lo[1] + (m + 0.5) * cell
    o[2] = lo[2] + (n + 0.5) * cell
    v = light[:3] - o
    dist = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if dist == 0.0:
        return 1.0
    v /= dist
    dims = np.array(occ.shape, np.int64)
    count = march(o, v, lo, cell, dims, 0.0, dist, cells, times)
    for k in range(count):
        a = cells[k, 0]
        b = cells[k, 1]
        c = cells[k, 2]
        if (a != l or b != m or c != n) and occ[a, b, c] >= 0:
            return 0.0
    if attenuated:
        return math.exp(-optical_depth(cells, times, count, absorb, 0.0, dist))
    return 1.0


@njit(cache=True, nogil=True)
def direct(occ, absorb, lo, cell, l, m, n, nx, ny, nz, cr, cg, cb, lights, attenuated,
           cells, times):
    """Unclamped sum of Lambert terms over unshadowed lights."""
    r = 0.0
    g = 0.0
    b = 0.0
    px = lo[0] + (l + 0.5) * cell
    py = lo[1] + (m + 0.5) * cell
    pz = lo[2] + (n + 0.5) * cell
    for j in range(lights.shape[0]):
        vx = lights[j, 0] - px
        vy = lights[j, 1] - py
        vz = lights[j, 2] - pz
        dist = math.sqrt(vx * vx + vy * vy + vz * vz)
        if dist == 0.0:
            continue
        cos = (nx * vx + ny * vy + nz * vz) / dist
        if cos <= 0.0 or lights[j, 6] == 0.0:
            continue
        s = shadow(occ, absorb, lo, cell, l, m, n, lights[j], attenuated, cells, times)
        w = s * lights[j, 6] * cos
        r += w * lights[j, 3] * cr
        g += w * lights[j, 4] * cg
        b += w * lights[j, 5] * cb
    return r, g, b


@njit(cache=True, nogil=True)
def clamp01(x):
    return min(max(x, 0.0), 1.0)


@njit(cache=True, nogil=True)
def flat_color(occ, mat, mtab, absorb, lo, cell, lights, amb, attenuated, l, m, n,
               dx, dy, dz, cells, times):
    """Ambient plus direct light, clamped; no secondary rays."""
    mi = mat[l, m, n]
    cr = mtab[mi, 0]
    cg = mtab[mi, 1]
    cb = mtab[mi, 2]
    nx, ny, nz = normal_at(occ, l, m, n, -dx, -dy, -dz)
    r, g, b = direct(occ, absorb, lo, cell, l, m, n, nx, ny, nz, cr, cg, cb, lights,
                     attenuated, cells, times)
    return (clamp01(amb[0] * cr + r), clamp01(amb[1] * cg + g), clamp01(amb[2] * cb + b))


@njit(cache=True, nogil=True)
def refract(dx, dy, dz, nx, ny, nz, index):
    """Snell refraction of unit ``d`` at a surface with outward normal ``n``.

    Returns (ok, tx, ty, tz); ok is False on total internal reflection.
    """
    cosi = -(dx * nx + dy * ny + dz * nz)
    n1 = 1.0
    n2 = index
    if cosi < 0.0:
        cosi = -cosi
        n1, n2 = n2, n1
        nx, ny, nz = -nx, -ny, -nz
    eta = n1 / n2
    k = 1.0 - eta * eta * (1.0 - cosi * cosi)
    if k < 0.0:
        return False, 0.0, 0.0, 0.0
    c = eta * cosi - math.sqrt(k)
    tx = eta * dx + c * nx
    ty = eta * dy + c * ny
    tz = eta * dz + c * nz
    norm = math.sqrt(tx * tx + ty * ty + tz * tz)
    return True, tx / norm, ty / norm, tz / norm


@njit(cache=True, nogil=True)
def _secondary(occ, mat, mtab, absorb, lo, cell, lights, amb, attenuated, l, m, n,
               dx, dy, dz, cells, times):
    o = np.empty(3)
    o[0] = lo[0] + (l + 0.5) * cell
    o[1] = lo[1] + (m + 0.5) * cell
    o[2] = lo[2] + (n + 0.5) * cell
    d = np.empty(3)
    d[0] = dx
    d[1] = dy
    d[2] = dz
    dims = np.array(occ.shape, np.int64)
    count = march(o, d, lo, cell, dims, 0.0, np.inf, cells, times)
    off = np.zeros(3, np.int64)
    skip = np.array((l, m, n), np.int64)
    k = first_occupied(cells, count, occ, off, skip, np.ones((1, 1, 1), np.bool_), False)
    if k < 0:
        return False, 0.0, 0.0, 0.0
    hl = cells[k, 0]
    hm = cells[k, 1]
    hn = cells[k, 2]
    r, g, b = flat_color(occ, mat, mtab, absorb, lo, cell, lights, amb, attenuated,
                         hl, hm, hn, dx, dy, dz, cells, times)
    return True, r, g, b


@njit(cache=True, nogil=True)
def shade_cell(occ, mat, mtab, absorb, lo, cell, lights, amb, attenuated, l, m, n,
               dx, dy, dz, depth):
    dims = np.array(occ.shape, np.int64)
    cells, times = _buffers(dims)
    mi = mat[l, m, n]
    refl = mtab[mi, 4]
    frac = mtab[mi, 5]
    r, g, b = flat_color(occ, mat, mtab, absorb, lo, cell, lights, amb, attenuated,
                         l, m, n, dx, dy, dz, cells, times)
    if depth >= 1 or (refl <= 0.0 and frac <= 0.0):
        return r, g, b
    nx, ny, nz = normal_at(occ, l, m, n, -dx, -dy, -dz)
    if refl > 0.0:
        dn = dx * nx + dy * ny + dz * nz
        rx = dx - 2.0 * dn * nx
        ry = dy - 2.0 * dn * ny
        rz = dz - 2.0 * dn * nz
        norm = math.sqrt(rx * rx + ry * ry + rz * rz)
        ok, sr, sg, sb = _secondary(occ, mat, mtab, absorb, lo, cell, lights, amb,
                                    attenuated, l, m, n, rx / norm, ry / norm, rz / norm,
                                    cells, times)
        if ok:
            r = clamp01(r + refl * sr)
            g = clamp01(g + refl * sg)
            b = clamp01(b + refl * sb)
    if frac > 0.0:
        ok, tx, ty, tz = refract(dx, dy, dz, nx, ny, nz, mtab[mi, 6])
        if ok:
            ok, sr, sg, sb = _secondary(occ, mat, mtab, absorb, lo, cell, lights, amb,
                                        attenuated, l, m, n, tx, ty, tz, cells, times)
            if ok:
                r = clamp01(r + frac * sr)
                g = clamp01(g + frac * sg)
                b = clamp01(b + frac * sb)
    return r, g, b


@njit(cache=True, nogil=True)
def trace_primary(origins, dirs, lo, cell, dims, occ, off, mask, out_cells):
    """First member occupant per ray inside a view box; -1 rows for misses."""
    cells, times = _buffers(dims)
    skip = np.full(3, -1, np.int64)
    for i in range(origins.shape[0]):
        count = march(origins[i], dirs[i], lo, cell, dims, 0.0, np.inf, cells, times)
        k = first_occupied(cells, count, occ, off, skip, mask, True)
        if k < 0:
            out_cells[i, 0] = -1
            out_cells[i, 1] = -1
            out_cells[i, 2] = -1
        else:
            out_cells[i, 0] = cells[k, 0]
            out_cells[i, 1] = cells[k, 1]
            out_cells[i, 2] = cells[k, 2]


@njit(cache=True, nogil=True)
def shade_batch(hits, dirs, occ, mat, mtab, absorb, lo, cell, lights, amb, attenuated,
                depth, out):
    for i in range(hits.shape[0]):
        r, g, b = shade_cell(occ, mat, mtab, absorb, lo, cell, lights, amb, attenuated,
                             hits[i, 0], hits[i, 1], hits[i, 2],
                             dirs[i, 0], dirs[i, 1], dirs[i, 2], depth)
        out[i, 0] = r
        out[i, 1] = g
        out[i, 2] = b
