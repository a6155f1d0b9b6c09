"""Compiled inner loops: obstacle sweeps, line-mean tests, Monge-Ampere
densities, and mesh-transfer operators for 2-d and 4-d boxes.

Conventions shared by all kernels:
  * arrays are C-contiguous float64 boxes, ``mask`` is uint8 with
    0 = outside, 1 = interior, 2 = boundary band;
  * only interior cells are ever written; band/outside values pass through;
  * a "line" is a pair of integer offsets (o1, o2 = i*o1) and the associated
    four-point mean (v(c+o1) + v(c-o1) + v(c+o2) + v(c-o2)) / 4; a line is
    usable at a cell when all four points are in the box with mask >= 1.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# --------------------------------------------------------------------------
# line direction sets
# --------------------------------------------------------------------------


def line_directions_2d(width: int = 1) -> np.ndarray:
    """Offset pairs for C^1: (nlines, 2, 2). width 1 gives the coordinate
    stencil; width 2 adds the diagonal one."""
    dirs = [((1, 0), (0, 1))]
    if width >= 2:
        dirs.append(((1, 1), (-1, 1)))
    return np.array(dirs, dtype=np.int64)


def line_directions_4d(width: int = 2) -> np.ndarray:
    """Primitive complex-line directions d = (a, b) in Z[i]^2 with
    |d|^2 <= width, one representative per complex line (the shortest).
    Offsets per line: o1 = d and o2 = i*d. Returns (nlines, 2, 4) int64.
    width 2 -> 6 lines, width 3 -> 14, width 5 -> 22."""
    seen: dict = {}
    for p in range(-3, 4):
        for q in range(-3, 4):
            for u in range(-3, 4):
                for v in range(-3, 4):
                    n2 = p * p + q * q + u * u + v * v
                    if n2 == 0 or n2 > width:
                        continue
                    a = complex(p, q)
                    b = complex(u, v)
                    if abs(b) < 1e-12:
                        key = ("inf",)
                    else:
                        t = a / b
                        key = (round(t.real, 9), round(t.imag, 9))
                    cur = seen.get(key)
                    if cur is None or n2 < cur[0]:
                        seen[key] = (n2, (p, q, u, v))
    offs = []
    for _, (p, q, u, v) in seen.values():
        offs.append(((p, q, u, v), (-q, p, -v, u)))
    offs.sort()
    return np.array(offs, dtype=np.int64)


def axis_diagonal_lines_4d() -> np.ndarray:
    """The minimal 4-line set: coordinate axes plus z1 = +/- z2 diagonals."""
    dirs = [
        ((1, 0, 0, 0), (0, 1, 0, 0)),
        ((0, 0, 1, 0), (0, 0, 0, 1)),
        ((1, 0, 1, 0), (0, 1, 0, 1)),
        ((1, 0, -1, 0), (0, 1, 0, -1)),
    ]
    return np.array(dirs, dtype=np.int64)


@njit(cache=True)
def build_bits_2d(mask, dirs, bits):
    """Per-cell direction-usability table: bit d set when line d has all
    four stencil points on mask >= 1; bit 15 marks interior cells. Zero
    means "not interior" so hot kernels test a single load per cell."""
    n0, n1 = mask.shape
    nd = dirs.shape[0]
    for i in range(n0):
        for j in range(n1):
            if mask[i, j] != 1:
                bits[i, j] = 0
                continue
            b = 1 << 15
            for d in range(nd):
                a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                if mask[i + a0, j + a1] == 0 or mask[i - a0, j - a1] == 0:
                    continue
                if mask[i + b0, j + b1] == 0 or mask[i - b0, j - b1] == 0:
                    continue
                b |= 1 << d
            bits[i, j] = b


@njit(cache=True)
def build_bits_4d(mask, dirs, bits):
    n0, n1, n2c, n3 = mask.shape
    nd = dirs.shape[0]
    for i in range(n0):
        for j in range(n1):
            for k in range(n2c):
                for l in range(n3):
                    if mask[i, j, k, l] != 1:
                        bits[i, j, k, l] = 0
                        continue
                    b = 1 << 15
                    for d in range(nd):
                        a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                        a2 = dirs[d, 0, 2]; a3 = dirs[d, 0, 3]
                        b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                        b2 = dirs[d, 1, 2]; b3 = dirs[d, 1, 3]
                        if (mask[i + a0, j + a1, k + a2, l + a3] == 0
                                or mask[i - a0, j - a1, k - a2, l - a3] == 0):
                            continue
                        if (mask[i + b0, j + b1, k + b2, l + b3] == 0
                                or mask[i - b0, j - b1, k - b2, l - b3] == 0):
                            continue
                        b |= 1 << d
                    bits[i, j, k, l] = b


# --------------------------------------------------------------------------
# obstacle sweeps (Jacobi snapshot updates)
# --------------------------------------------------------------------------


@njit(cache=True, fastmath=True)
def sweep_2d(v, g, bits, dirs, out, om):
    n0, n1 = v.shape
    nd = dirs.shape[0]
    ch = 0.0
    for i in range(n0):
        for j in range(n1):
            b = bits[i, j]
            if b == 0:
                out[i, j] = v[i, j]
                continue
            m = 1e300
            for d in range(nd):
                if (b >> d) & 1 == 0:
                    continue
                a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                s = 0.25 * (v[i + a0, j + a1] + v[i - a0, j - a1]
                            + v[i + b0, j + b1] + v[i - b0, j - b1])
                if s < m:
                    m = s
            val = g[i, j]
            if m < val:
                val = m
            val = v[i, j] + om * (val - v[i, j])
            out[i, j] = val
            c = abs(val - v[i, j])
            if c > ch:
                ch = c
    return ch

@njit(cache=True, fastmath=True)
def sweep_4d(v, g, bits, dirs, out, om):
    n0, n1, n2c, n3 = v.shape
    nd = dirs.shape[0]
    ch = 0.0
    for i in range(n0):
        for j in range(n1):
            for k in range(n2c):
                for l in range(n3):
                    b = bits[i, j, k, l]
                    if b == 0:
                        out[i, j, k, l] = v[i, j, k, l]
                        continue
                    m = 1e300
                    for d in range(nd):
                        if (b >> d) & 1 == 0:
                            continue
                        a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                        a2 = dirs[d, 0, 2]; a3 = dirs[d, 0, 3]
                        b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                        b2 = dirs[d, 1, 2]; b3 = dirs[d, 1, 3]
                        s = 0.25 * (v[i + a0, j + a1, k + a2, l + a3]
                                    + v[i - a0, j - a1, k - a2, l - a3]
                                    + v[i + b0, j + b1, k + b2, l + b3]
                                    + v[i - b0, j - b1, k - b2, l - b3])
                        if s < m:
                            m = s
                    val = g[i, j, k, l]
                    if m < val:
                        val = m
                    val = v[i, j, k, l] + om * (val - v[i, j, k, l])
                    out[i, j, k, l] = val
                    c = abs(val - v[i, j, k, l])
                    if c > ch:
                        ch = c
    return ch

@njit(cache=True, fastmath=True)
def gs_2d(v, g, bits, dirs, om, fwd):
    """In-place projected Gauss-Seidel sweep: each interior cell is moved
    toward min(g, best line mean) using already-updated neighbours; fwd
    selects lexicographic or reversed cell order."""
    n0, n1 = v.shape
    nd = dirs.shape[0]
    ch = 0.0
    for i0 in range(n0):
        i = i0 if fwd == 1 else n0 - 1 - i0
        for j0 in range(n1):
            j = j0 if fwd == 1 else n1 - 1 - j0
            b = bits[i, j]
            if b == 0:
                continue
            m = 1e300
            for d in range(nd):
                if (b >> d) & 1 == 0:
                    continue
                a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                s = 0.25 * (v[i + a0, j + a1] + v[i - a0, j - a1]
                            + v[i + b0, j + b1] + v[i - b0, j - b1])
                if s < m:
                    m = s
            val = g[i, j]
            if m < val:
                val = m
            val = v[i, j] + om * (val - v[i, j])
            c = abs(val - v[i, j])
            if c > ch:
                ch = c
            v[i, j] = val
    return ch

@njit(cache=True, fastmath=True)
def gs_2d_shift(v, g, tau, bits, dirs, om, fwd):
    n0, n1 = v.shape
    nd = dirs.shape[0]
    ch = 0.0
    for i0 in range(n0):
        i = i0 if fwd == 1 else n0 - 1 - i0
        for j0 in range(n1):
            j = j0 if fwd == 1 else n1 - 1 - j0
            b = bits[i, j]
            if b == 0:
                continue
            m = 1e300
            for d in range(nd):
                if (b >> d) & 1 == 0:
                    continue
                a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                s = 0.25 * (v[i + a0, j + a1] + v[i - a0, j - a1]
                            + v[i + b0, j + b1] + v[i - b0, j - b1])
                if s < m:
                    m = s
            val = g[i, j]
            if m < val:
                val = m
            val -= tau[i, j]
            val = v[i, j] + om * (val - v[i, j])
            c = abs(val - v[i, j])
            if c > ch:
                ch = c
            v[i, j] = val
    return ch

@njit(cache=True, fastmath=True)
def gs_4d(v, g, bits, dirs, om, fwd):
    n0, n1, n2c, n3 = v.shape
    nd = dirs.shape[0]
    ch = 0.0
    for i0 in range(n0):
        i = i0 if fwd == 1 else n0 - 1 - i0
        for j0 in range(n1):
            j = j0 if fwd == 1 else n1 - 1 - j0
            for k0 in range(n2c):
                k = k0 if fwd == 1 else n2c - 1 - k0
                for l0 in range(n3):
                    l = l0 if fwd == 1 else n3 - 1 - l0
                    b = bits[i, j, k, l]
                    if b == 0:
                        continue
                    m = 1e300
                    for d in range(nd):
                        if (b >> d) & 1 == 0:
                            continue
                        a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                        a2 = dirs[d, 0, 2]; a3 = dirs[d, 0, 3]
                        b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                        b2 = dirs[d, 1, 2]; b3 = dirs[d, 1, 3]
                        s = 0.25 * (v[i + a0, j + a1, k + a2, l + a3]
                                    + v[i - a0, j - a1, k - a2, l - a3]
                                    + v[i + b0, j + b1, k + b2, l + b3]
                                    + v[i - b0, j - b1, k - b2, l - b3])
                        if s < m:
                            m = s
                    val = g[i, j, k, l]
                    if m < val:
                        val = m
                    val = v[i, j, k, l] + om * (val - v[i, j, k, l])
                    c = abs(val - v[i, j, k, l])
                    if c > ch:
                        ch = c
                    v[i, j, k, l] = val
    return ch

@njit(cache=True, fastmath=True)
def gs_4d_shift(v, g, tau, bits, dirs, om, fwd):
    n0, n1, n2c, n3 = v.shape
    nd = dirs.shape[0]
    ch = 0.0
    for i0 in range(n0):
        i = i0 if fwd == 1 else n0 - 1 - i0
        for j0 in range(n1):
            j = j0 if fwd == 1 else n1 - 1 - j0
            for k0 in range(n2c):
                k = k0 if fwd == 1 else n2c - 1 - k0
                for l0 in range(n3):
                    l = l0 if fwd == 1 else n3 - 1 - l0
                    b = bits[i, j, k, l]
                    if b == 0:
                        continue
                    m = 1e300
                    for d in range(nd):
                        if (b >> d) & 1 == 0:
                            continue
                        a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                        a2 = dirs[d, 0, 2]; a3 = dirs[d, 0, 3]
                        b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                        b2 = dirs[d, 1, 2]; b3 = dirs[d, 1, 3]
                        s = 0.25 * (v[i + a0, j + a1, k + a2, l + a3]
                                    + v[i - a0, j - a1, k - a2, l - a3]
                                    + v[i + b0, j + b1, k + b2, l + b3]
                                    + v[i - b0, j - b1, k - b2, l - b3])
                        if s < m:
                            m = s
                    val = g[i, j, k, l]
                    if m < val:
                        val = m
                    val -= tau[i, j, k, l]
                    val = v[i, j, k, l] + om * (val - v[i, j, k, l])
                    c = abs(val - v[i, j, k, l])
                    if c > ch:
                        ch = c
                    v[i, j, k, l] = val
    return ch

# --------------------------------------------------------------------------
# residual / violation maps
# --------------------------------------------------------------------------


@njit(cache=True, fastmath=True)
def residual_2d(v, g, bits, dirs, out, act):
    """out = min(g - v, min line mean - v) on interior, 0 elsewhere;
    act = 1 where the obstacle branch is the smaller one (active set)."""
    n0, n1 = v.shape
    nd = dirs.shape[0]
    for i in range(n0):
        for j in range(n1):
            b = bits[i, j]
            if b == 0:
                out[i, j] = 0.0
                act[i, j] = 0
                continue
            m = 1e300
            for d in range(nd):
                if (b >> d) & 1 == 0:
                    continue
                a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                s = 0.25 * (v[i + a0, j + a1] + v[i - a0, j - a1]
                            + v[i + b0, j + b1] + v[i - b0, j - b1])
                if s < m:
                    m = s
            r = g[i, j] - v[i, j]
            a = 1
            if m < 1e299:
                mm = m - v[i, j]
                if mm < r:
                    r = mm
                    a = 0
            out[i, j] = r
            act[i, j] = a
    return 0

@njit(cache=True, fastmath=True)
def residual_4d(v, g, bits, dirs, out, act):
    n0, n1, n2c, n3 = v.shape
    nd = dirs.shape[0]
    for i in range(n0):
        for j in range(n1):
            for k in range(n2c):
                for l in range(n3):
                    b = bits[i, j, k, l]
                    if b == 0:
                        out[i, j, k, l] = 0.0
                        act[i, j, k, l] = 0
                        continue
                    m = 1e300
                    for d in range(nd):
                        if (b >> d) & 1 == 0:
                            continue
                        a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                        a2 = dirs[d, 0, 2]; a3 = dirs[d, 0, 3]
                        b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                        b2 = dirs[d, 1, 2]; b3 = dirs[d, 1, 3]
                        s = 0.25 * (v[i + a0, j + a1, k + a2, l + a3]
                                    + v[i - a0, j - a1, k - a2, l - a3]
                                    + v[i + b0, j + b1, k + b2, l + b3]
                                    + v[i - b0, j - b1, k - b2, l - b3])
                        if s < m:
                            m = s
                    r = g[i, j, k, l] - v[i, j, k, l]
                    a = 1
                    if m < 1e299:
                        mm = m - v[i, j, k, l]
                        if mm < r:
                            r = mm
                            a = 0
                    out[i, j, k, l] = r
                    act[i, j, k, l] = a
    return 0

@njit(cache=True, fastmath=True)
def violation_2d(v, mask, dirs, tol):
    """Worst excess of a cell value over its line means, on interior cells.
    Returns (max violation, cells above tol, flat index of the worst cell);
    no per-cell array is materialised."""
    n0, n1 = v.shape
    nd = dirs.shape[0]
    worst = 0.0
    count = 0
    where = -1
    for i in range(n0):
        for j in range(n1):
            if mask[i, j] != 1:
                continue
            best = -1e300
            for d in range(nd):
                a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                ip = i + a0; jp = j + a1
                im = i - a0; jm = j - a1
                iq = i + b0; jq = j + b1
                ir = i - b0; jr = j - b1
                if mask[ip, jp] == 0 or mask[im, jm] == 0:
                    continue
                if mask[iq, jq] == 0 or mask[ir, jr] == 0:
                    continue
                s = 0.25 * (v[ip, jp] + v[im, jm] + v[iq, jq] + v[ir, jr])
                dv = v[i, j] - s
                if dv > best:
                    best = dv
            if best < -1e299:
                best = 0.0
            if best > tol:
                count += 1
            if best > worst:
                worst = best
                where = i * n1 + j
    return worst, count, where


@njit(cache=True, fastmath=True)
def violation_4d(v, mask, dirs, tol):
    n0, n1, n2c, n3 = v.shape
    nd = dirs.shape[0]
    worst = 0.0
    count = 0
    where = -1
    for i in range(n0):
        for j in range(n1):
            for k in range(n2c):
                for l in range(n3):
                    if mask[i, j, k, l] != 1:
                        continue
                    best = -1e300
                    for d in range(nd):
                        a0 = dirs[d, 0, 0]; a1 = dirs[d, 0, 1]
                        a2 = dirs[d, 0, 2]; a3 = dirs[d, 0, 3]
                        b0 = dirs[d, 1, 0]; b1 = dirs[d, 1, 1]
                        b2 = dirs[d, 1, 2]; b3 = dirs[d, 1, 3]
                        ip = i + a0; jp = j + a1; kp = k + a2; lp = l + a3
                        im = i - a0; jm = j - a1; km = k - a2; lm = l - a3
                        iq = i + b0; jq = j + b1; kq = k + b2; lq = l + b3
                        ir = i - b0; jr = j - b1; kr = k - b2; lr = l - b3
                        if mask[ip, jp, kp, lp] == 0 or mask[im, jm, km, lm] == 0:
                            continue
                        if mask[iq, jq, kq, lq] == 0 or mask[ir, jr, kr, lr] == 0:
                            continue
                        s = 0.25 * (v[ip, jp, kp, lp] + v[im, jm, km, lm]
                                    + v[iq, jq, kq, lq] + v[ir, jr, kr, lr])
                        dv = v[i, j, k, l] - s
                        if dv > best:
                            best = dv
                    if best < -1e299:
                        best = 0.0
                    if best > tol:
                        count += 1
                    if best > worst:
                        worst = best
                        where = ((i * n1 + j) * n2c + k) * n3 + l
    return worst, count, where


# --------------------------------------------------------------------------
# measure densities (with respect to Lebesgue measure on R^{2n})
# --------------------------------------------------------------------------


@njit(cache=True, fastmath=True)
def lap_density_2d(v, mask, h, out):
    """Five-point Laplacian of v on interior cells (density of the n = 1
    operator), signed; 0 elsewhere."""
    n0, n1 = v.shape
    h2 = h * h
    for i in range(n0):
        for j in range(n1):
            if mask[i, j] != 1 or i == 0 or j == 0 or i == n0 - 1 or j == n1 - 1:
                out[i, j] = 0.0
                continue
            out[i, j] = (v[i + 1, j] + v[i - 1, j] + v[i, j + 1] + v[i, j - 1]
                         - 4.0 * v[i, j]) / h2
    return 0


@njit(cache=True, fastmath=True)
def lap_density_4d(v, mask, h, out):
    """4 * (real Laplacian on R^4), the density of the mixed operator of v
    against the squared-norm potential; signed, interior cells only."""
    n0, n1, n2c, n3 = v.shape
    h2 = h * h
    for i in range(n0):
        for j in range(n1):
            for k in range(n2c):
                for l in range(n3):
                    if (mask[i, j, k, l] != 1 or i == 0 or j == 0 or k == 0
                            or l == 0 or i == n0 - 1 or j == n1 - 1
                            or k == n2c - 1 or l == n3 - 1):
                        out[i, j, k, l] = 0.0
                        continue
                    lap = (v[i + 1, j, k, l] + v[i - 1, j, k, l]
                           + v[i, j + 1, k, l] + v[i, j - 1, k, l]
                           + v[i, j, k + 1, l] + v[i, j, k - 1, l]
                           + v[i, j, k, l + 1] + v[i, j, k, l - 1]
                           - 8.0 * v[i, j, k, l]) / h2
                    out[i, j, k, l] = 4.0 * lap
    return 0


@njit(cache=True, fastmath=True)
def det_density_4d(v, mask, h, out):
    """Density 32 * det of the discrete complex Hessian; signed.

    Every Hessian entry is a composition of the same central first
    differences (spacing-2 second differences on the diagonal, 4-point
    crosses off it), so the entries share one transfer function and the
    determinant keeps the rank-one cancellations of the continuum object.
    A plain 5-point diagonal paired with cross stencils smears gradient
    kinks differently entry-by-entry and inflates the determinant near
    edges of contact sets."""
    n0, n1, n2c, n3 = v.shape
    q = 4.0 * h * h
    for i in range(n0):
        for j in range(n1):
            for k in range(n2c):
                for l in range(n3):
                    if (mask[i, j, k, l] != 1 or i < 2 or j < 2 or k < 2
                            or l < 2 or i > n0 - 3 or j > n1 - 3
                            or k > n2c - 3 or l > n3 - 3):
                        out[i, j, k, l] = 0.0
                        continue
                    c2 = 2.0 * v[i, j, k, l]
                    d0 = (v[i + 2, j, k, l] - c2 + v[i - 2, j, k, l]) / q
                    d1 = (v[i, j + 2, k, l] - c2 + v[i, j - 2, k, l]) / q
                    d2 = (v[i, j, k + 2, l] - c2 + v[i, j, k - 2, l]) / q
                    d3 = (v[i, j, k, l + 2] - c2 + v[i, j, k, l - 2]) / q
                    h11 = 0.25 * (d0 + d1)
                    h22 = 0.25 * (d2 + d3)
                    d02 = (v[i + 1, j, k + 1, l] - v[i + 1, j, k - 1, l]
                           - v[i - 1, j, k + 1, l] + v[i - 1, j, k - 1, l]) / q
                    d13 = (v[i, j + 1, k, l + 1] - v[i, j + 1, k, l - 1]
                           - v[i, j - 1, k, l + 1] + v[i, j - 1, k, l - 1]) / q
                    re12 = 0.25 * (d02 + d13)
                    d03 = (v[i + 1, j, k, l + 1] - v[i + 1, j, k, l - 1]
                           - v[i - 1, j, k, l + 1] + v[i - 1, j, k, l - 1]) / q
                    d12 = (v[i, j + 1, k + 1, l] - v[i, j + 1, k - 1, l]
                           - v[i, j - 1, k + 1, l] + v[i, j - 1, k - 1, l]) / q
                    im12 = 0.25 * (d03 - d12)
                    out[i, j, k, l] = 32.0 * (h11 * h22 - re12 * re12 - im12 * im12)
    return 0


@njit(cache=True, fastmath=True)
def mixed_density_4d(u, w, mask, h, out):
    """Density 32 * mixed determinant of the complex Hessians of u and w:
    MD(A, B) = (A11*B22 + A22*B11)/2 - Re(A12 * conj(B12)). Signed.
    mixed_density(u, u) equals det_density(u); the map is bilinear.
    Entries use the same composed central differences as det_density_4d."""
    n0, n1, n2c, n3 = u.shape
    q = 4.0 * h * h
    for i in range(n0):
        for j in range(n1):
            for k in range(n2c):
                for l in range(n3):
                    if (mask[i, j, k, l] != 1 or i < 2 or j < 2 or k < 2
                            or l < 2 or i > n0 - 3 or j > n1 - 3
                            or k > n2c - 3 or l > n3 - 3):
                        out[i, j, k, l] = 0.0
                        continue
                    c2 = 2.0 * u[i, j, k, l]
                    a11 = 0.25 * ((u[i + 2, j, k, l] - c2 + u[i - 2, j, k, l])
                                  + (u[i, j + 2, k, l] - c2 + u[i, j - 2, k, l])) / q
                    a22 = 0.25 * ((u[i, j, k + 2, l] - c2 + u[i, j, k - 2, l])
                                  + (u[i, j, k, l + 2] - c2 + u[i, j, k, l - 2])) / q
                    are = 0.25 * ((u[i + 1, j, k + 1, l] - u[i + 1, j, k - 1, l]
                                   - u[i - 1, j, k + 1, l] + u[i - 1, j, k - 1, l])
                                  + (u[i, j + 1, k, l + 1] - u[i, j + 1, k, l - 1]
                                     - u[i, j - 1, k, l + 1] + u[i, j - 1, k, l - 1])) / q
                    aim = 0.25 * ((u[i + 1, j, k, l + 1] - u[i + 1, j, k, l - 1]
                                   - u[i - 1, j, k, l + 1] + u[i - 1, j, k, l - 1])
                                  - (u[i, j + 1, k + 1, l] - u[i, j + 1, k - 1, l]
                                     - u[i, j - 1, k + 1, l] + u[i, j - 1, k - 1, l])) / q
                    c2 = 2.0 * w[i, j, k, l]
                    b11 = 0.25 * ((w[i + 2, j, k, l] - c2 + w[i - 2, j, k, l])
                                  + (w[i, j + 2, k, l] - c2 + w[i, j - 2, k, l])) / q
                    b22 = 0.25 * ((w[i, j, k + 2, l] - c2 + w[i, j, k - 2, l])
                                  + (w[i, j, k, l + 2] - c2 + w[i, j, k, l - 2])) / q
                    bre = 0.25 * ((w[i + 1, j, k + 1, l] - w[i + 1, j, k - 1, l]
                                   - w[i - 1, j, k + 1, l] + w[i - 1, j, k - 1, l])
                                  + (w[i, j + 1, k, l + 1] - w[i, j + 1, k, l - 1]
                                     - w[i, j - 1, k, l + 1] + w[i, j - 1, k, l - 1])) / q
                    bim = 0.25 * ((w[i + 1, j, k, l + 1] - w[i + 1, j, k, l - 1]
                                   - w[i - 1, j, k, l + 1] + w[i - 1, j, k, l - 1])
                                  - (w[i, j + 1, k + 1, l] - w[i, j + 1, k - 1, l]
                                     - w[i, j - 1, k + 1, l] + w[i, j - 1, k - 1, l])) / q
                    md = 0.5 * (a11 * b22 + a22 * b11) - (are * bre + aim * bim)
                    out[i, j, k, l] = 32.0 * md
    return 0


# --------------------------------------------------------------------------
# mesh transfer (factor-2, band-offset-aware, cubic boxes)
# --------------------------------------------------------------------------


def coarse_pair_maps(side_f: int, side_c: int, band_width: int = 2):
    """Fine index pairs feeding each coarse cell: coarse I averages fine
    cells 2I - band_width and 2I - band_width + 1 (clipped to the box)."""
    idx = np.arange(side_c, dtype=np.int64)
    p0 = np.clip(2 * idx - band_width, 0, side_f - 1)
    p1 = np.clip(2 * idx - band_width + 1, 0, side_f - 1)
    return p0, p1


def fine_interp_maps(side_f: int, side_c: int, band_width: int = 2):
    """Per-axis multilinear prolongation stencil: fine i reads coarse
    lo[i], hi[i] with weights wlo[i], 1 - wlo[i]."""
    idx = np.arange(side_f, dtype=np.int64)
    s = (idx + band_width) // 2
    odd = idx % 2 == 1
    lo = np.where(odd, s, s - 1)
    hi = np.where(odd, s + 1, s)
    wlo = np.where(odd, 0.75, 0.25)
    lo = np.clip(lo, 0, side_c - 1)
    hi = np.clip(hi, 0, side_c - 1)
    return lo, hi, wlo


@njit(cache=True, fastmath=True)
def restrict_mean_2d(fine, coarse, p0, p1):
    nc0, nc1 = coarse.shape
    for i in range(nc0):
        i0 = p0[i]; i1 = p1[i]
        for j in range(nc1):
            j0 = p0[j]; j1 = p1[j]
            coarse[i, j] = 0.25 * (fine[i0, j0] + fine[i0, j1]
                                   + fine[i1, j0] + fine[i1, j1])
    return 0


@njit(cache=True, fastmath=True)
def restrict_min_2d(fine, coarse, p0, p1):
    nc0, nc1 = coarse.shape
    for i in range(nc0):
        i0 = p0[i]; i1 = p1[i]
        for j in range(nc1):
            j0 = p0[j]; j1 = p1[j]
            m = fine[i0, j0]
            if fine[i0, j1] < m:
                m = fine[i0, j1]
            if fine[i1, j0] < m:
                m = fine[i1, j0]
            if fine[i1, j1] < m:
                m = fine[i1, j1]
            coarse[i, j] = m
    return 0


@njit(cache=True, fastmath=True)
def restrict_mean_4d(fine, coarse, p0, p1):
    nc0, nc1, nc2, nc3 = coarse.shape
    for i in range(nc0):
        i0 = p0[i]; i1 = p1[i]
        for j in range(nc1):
            j0 = p0[j]; j1 = p1[j]
            for k in range(nc2):
                k0 = p0[k]; k1 = p1[k]
                for l in range(nc3):
                    l0 = p0[l]; l1 = p1[l]
                    s = 0.0
                    for ii in (i0, i1):
                        for jj in (j0, j1):
                            for kk in (k0, k1):
                                for ll in (l0, l1):
                                    s += fine[ii, jj, kk, ll]
                    coarse[i, j, k, l] = s / 16.0
    return 0


@njit(cache=True, fastmath=True)
def restrict_min_4d(fine, coarse, p0, p1):
    nc0, nc1, nc2, nc3 = coarse.shape
    for i in range(nc0):
        i0 = p0[i]; i1 = p1[i]
        for j in range(nc1):
            j0 = p0[j]; j1 = p1[j]
            for k in range(nc2):
                k0 = p0[k]; k1 = p1[k]
                for l in range(nc3):
                    l0 = p0[l]; l1 = p1[l]
                    m = 1e300
                    for ii in (i0, i1):
                        for jj in (j0, j1):
                            for kk in (k0, k1):
                                for ll in (l0, l1):
                                    if fine[ii, jj, kk, ll] < m:
                                        m = fine[ii, jj, kk, ll]
                    coarse[i, j, k, l] = m
    return 0


@njit(cache=True, fastmath=True)
def prolong_add_2d(coarse, fine, mask, lo, hi, wlo):
    """fine += multilinear interpolation of coarse, interior cells only."""
    n0, n1 = fine.shape
    for i in range(n0):
        li = lo[i]; hi_i = hi[i]; wi = wlo[i]
        for j in range(n1):
            if mask[i, j] != 1:
                continue
            lj = lo[j]; hj = hi[j]; wj = wlo[j]
            val = (wi * (wj * coarse[li, lj] + (1 - wj) * coarse[li, hj])
                   + (1 - wi) * (wj * coarse[hi_i, lj] + (1 - wj) * coarse[hi_i, hj]))
            fine[i, j] += val
    return 0


@njit(cache=True, fastmath=True)
def prolong_add_4d(coarse, fine, mask, lo, hi, wlo):
    n0, n1, n2c, n3 = fine.shape
    for i in range(n0):
        li = lo[i]; hii = hi[i]; wi = wlo[i]
        for j in range(n1):
            lj = lo[j]; hj = hi[j]; wj = wlo[j]
            for k in range(n2c):
                lk = lo[k]; hk = hi[k]; wk = wlo[k]
                for l in range(n3):
                    if mask[i, j, k, l] != 1:
                        continue
                    ll = lo[l]; hl = hi[l]; wl = wlo[l]
                    v00 = wk * (wl * coarse[li, lj, lk, ll]
                                + (1 - wl) * coarse[li, lj, lk, hl]) \
                        + (1 - wk) * (wl * coarse[li, lj, hk, ll]
                                      + (1 - wl) * coarse[li, lj, hk, hl])
                    v01 = wk * (wl * coarse[li, hj, lk, ll]
                                + (1 - wl) * coarse[li, hj, lk, hl]) \
                        + (1 - wk) * (wl * coarse[li, hj, hk, ll]
                                      + (1 - wl) * coarse[li, hj, hk, hl])
                    v10 = wk * (wl * coarse[hii, lj, lk, ll]
                                + (1 - wl) * coarse[hii, lj, lk, hl]) \
                        + (1 - wk) * (wl * coarse[hii, lj, hk, ll]
                                      + (1 - wl) * coarse[hii, lj, hk, hl])
                    v11 = wk * (wl * coarse[hii, hj, lk, ll]
                                + (1 - wl) * coarse[hii, hj, lk, hl]) \
                        + (1 - wk) * (wl * coarse[hii, hj, hk, ll]
                                      + (1 - wl) * coarse[hii, hj, hk, hl])
                    fine[i, j, k, l] += wi * (wj * v00 + (1 - wj) * v01) \
                        + (1 - wi) * (wj * v10 + (1 - wj) * v11)
    return 0
