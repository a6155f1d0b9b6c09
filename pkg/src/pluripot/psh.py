"""Discrete plurisubharmonicity: the line-mean test and upper envelopes.

A grid function is accepted as psh when, at every interior cell and for
every usable lattice complex line, its value does not exceed the four-point
line mean by more than the tolerance. The psh envelope of an obstacle g is
the largest grid function v <= g passing the test with zero tolerance; it
is the fixed point of the update v <- min(g, min over lines of the
four-point mean), computed here by a projected full-approximation multigrid
scheme with Gauss-Seidel smoothing, accelerated by Anderson mixing of the
cycle map and certified by a final plain Jacobi sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels as K
from .errors import ConvergenceError, ValidationError
from .fields import ScalarField
from .grids import BAND_WIDTH, Grid, make_grid

TOL_STOP = 1e-8
MAX_SWEEPS = 1_000_000


# --------------------------------------------------------------------------
# direction sets
# --------------------------------------------------------------------------


def direction_set(dim_complex: int, directions=None) -> np.ndarray:
    """Resolve a direction-set request to an offset array.

    None picks the defaults (1 line in C^1, the 6 shortest lines in C^2);
    an int is a squared-length cutoff for lattice lines; the string
    "axes+diagonals" is the minimal 4-line set in C^2; an array passes
    through unchanged.
    """
    if isinstance(directions, np.ndarray):
        want = 2 * dim_complex
        if directions.ndim != 3 or directions.shape[1] != 2 or directions.shape[2] != want:
            raise ValidationError("direction array must have shape (lines, 2, %d)" % want)
        return directions.astype(np.int64)
    if dim_complex == 1:
        width = 1 if directions is None else int(directions)
        return K.line_directions_2d(width)
    if isinstance(directions, str):
        if directions == "axes+diagonals":
            return K.axis_diagonal_lines_4d()
        raise ValidationError(f"unknown direction set {directions!r}")
    width = 2 if directions is None else int(directions)
    if width < 1:
        raise ValidationError("direction width must be >= 1")
    return K.line_directions_4d(width)


def _dim_funcs(dim: int):
    if dim == 2:
        return (K.sweep_2d, K.gs_2d, K.gs_2d_shift, K.residual_2d,
                K.violation_2d, K.restrict_mean_2d, K.restrict_min_2d,
                K.prolong_add_2d)
    return (K.sweep_4d, K.gs_4d, K.gs_4d_shift, K.residual_4d,
            K.violation_4d, K.restrict_mean_4d, K.restrict_min_4d,
            K.prolong_add_4d)


# --------------------------------------------------------------------------
# psh test
# --------------------------------------------------------------------------


@dataclass
class PshReport:
    max_violation: float
    violating_cells: int
    tolerance: float
    line_count: int
    worst_cell: tuple | None = None

    @property
    def is_psh(self) -> bool:
        return self.max_violation <= self.tolerance

    def descriptor(self) -> dict:
        return {
            "max_violation": self.max_violation,
            "violating_cells": self.violating_cells,
            "tolerance": self.tolerance,
            "lines": self.line_count,
            "is_psh": self.is_psh,
        }


def check_psh(field: ScalarField, tolerance: float = 1e-7, directions=None) -> PshReport:
    """Line-mean test over interior cells. Lines through clamped log poles
    are skipped (the clamp is data, not function values)."""
    grid = field.grid
    dirs = direction_set(grid.domain.dim_complex, directions)
    mask = grid.mask
    if field.pole is not None:
        mask = mask.copy()
        mask[field.pole] = 0
    violation = _dim_funcs(len(grid.shape))[4]
    worst, nbad, flat = violation(field.values, mask, dirs, tolerance)
    worst_cell = None
    if nbad:
        worst_cell = tuple(int(i) for i in np.unravel_index(int(flat), grid.shape))
    return PshReport(float(worst), int(nbad), tolerance, dirs.shape[0], worst_cell)


# --------------------------------------------------------------------------
# envelope solver
# --------------------------------------------------------------------------


@dataclass
class EnvelopeResult:
    field: ScalarField
    sweeps: int
    cycles: int
    final_change: float
    converged: bool
    psh_report: PshReport = dc_field(default=None)
    obstacle_gap: float = 0.0

    def descriptor(self) -> dict:
        return {
            "sweeps": self.sweeps,
            "cycles": self.cycles,
            "final_change": self.final_change,
            "converged": self.converged,
            "obstacle_gap": self.obstacle_gap,
            "psh": None if self.psh_report is None else self.psh_report.descriptor(),
        }


class _Hierarchy:
    """Grids at resolutions res, res/2, ... >= 8, sharing one domain."""

    def __init__(self, grid: Grid):
        self.grids = [grid]
        res = grid.resolution
        while res % 2 == 0 and res // 2 >= 8:
            res //= 2
            self.grids.append(make_grid(grid.domain, res))
        self.pair_maps = []
        self.interp_maps = []
        for f, c in zip(self.grids[:-1], self.grids[1:]):
            side_f, side_c = f.shape[0], c.shape[0]
            self.pair_maps.append(K.coarse_pair_maps(side_f, side_c, BAND_WIDTH))
            self.interp_maps.append(K.fine_interp_maps(side_f, side_c, BAND_WIDTH))

    def __len__(self):
        return len(self.grids)


class _Solver:
    def __init__(self, grid: Grid, dirs: np.ndarray, tol_stop: float,
                 max_sweeps: int, use_multigrid: bool):
        if dirs.shape[0] > 15:
            raise ValidationError(
                "envelope solver supports at most 15 line directions")
        self.dirs = dirs
        self.tol_stop = tol_stop
        self.max_sweeps = max_sweeps
        self.sweeps = 0
        self.cycles = 0
        dim = len(grid.shape)
        (self.sweep, self.gs, self.gs_shift, self.residual, _,
         self.r_mean, self.r_min, self.p_add) = _dim_funcs(dim)
        build_bits = K.build_bits_2d if dim == 2 else K.build_bits_4d
        self.nu_pre = 3
        self.nu_post = 1
        if use_multigrid:
            self.h = _Hierarchy(grid)
            self.bits = []
            for gr in self.h.grids:
                b = np.empty(gr.shape, dtype=np.uint16)
                build_bits(gr.mask, dirs, b)
                self.bits.append(b)
        else:
            self.h = None
            self.grid = grid
            b = np.empty(grid.shape, dtype=np.uint16)
            build_bits(grid.mask, dirs, b)
            self.bits = [b]

    def _charge(self, n: int = 1, change: float = np.inf):
        self.sweeps += n
        if self.sweeps > self.max_sweeps:
            raise ConvergenceError(
                f"envelope did not converge within {self.max_sweeps} sweeps",
                residual=change, sweeps=self.sweeps,
            )

    def _certify(self, v, g, bits):
        """One plain Jacobi sweep; its max change bounds the distance of v
        from the fixed point, so it doubles as the convergence certificate."""
        out = np.empty_like(v)
        ch = self.sweep(v, g, bits, self.dirs, out, 1.0)
        self._charge(change=ch)
        return out, float(ch)

    def _smooth(self, v, g, tau, bits, n):
        """n in-place Gauss-Seidel sweeps; returns the last sweep's change."""
        ch = np.inf
        for _ in range(n):
            if tau is None:
                ch = self.gs(v, g, bits, self.dirs, 1.0, 1)
            else:
                ch = self.gs_shift(v, g, tau, bits, self.dirs, 1.0, 1)
            self._charge(change=ch)
        return float(ch)

    def _vcycle(self, k, v, g, tau, mask):
        grids = self.h.grids
        bits = self.bits[k]
        if k == len(grids) - 1:
            ch = np.inf
            for _ in range(15):
                ch = self._smooth(v, g, tau, bits, 4)
                if ch < 1e-13:
                    break
            return v, ch
        self._smooth(v, g, tau, bits, self.nu_pre)
        p0, p1 = self.h.pair_maps[k]
        cshape = grids[k + 1].shape
        # defect d = tau - N(v) on the inactive set, in this level's grid
        # units; the coarse force gets it scaled by (h_c/h_f)^2 because the
        # line-mean defect of the correction scales with h^2.
        d = np.empty_like(v)
        act = np.empty(v.shape, dtype=np.uint8)
        self.residual(v, g, bits, self.dirs, d, act)
        np.negative(d, out=d)
        if tau is not None:
            d += tau
        d[act == 1] = 0.0
        del act
        rd = np.empty(cshape)
        self.r_mean(d, rd, p0, p1)
        del d
        rv = np.empty(cshape)
        self.r_mean(v, rv, p0, p1)
        gap = g - v
        gc = np.empty(cshape)
        self.r_min(gap, gc, p0, p1)
        del gap
        gc += rv
        mask_c = grids[k + 1].mask
        tau_c = np.empty(cshape)
        act_tmp = np.empty(cshape, dtype=np.uint8)
        self.residual(rv, gc, self.bits[k + 1], self.dirs, tau_c, act_tmp)
        del act_tmp
        tau_c += 4.0 * rd
        del rd
        vc, _ = self._vcycle(k + 1, rv.copy(), gc, tau_c, mask_c)
        vc -= rv
        del rv
        lo, hi, wlo = self.h.interp_maps[k]
        self.p_add(vc, v, mask, lo, hi, wlo)
        del vc
        if tau is None:
            np.minimum(v, g, out=v)
        ch = self._smooth(v, g, tau, bits, self.nu_post)
        return v, ch

    def _cycle_to_target(self, k, v, g, mask, target, limit=None):
        """Run V-cycles at level k until a plain full-weight sweep moves no
        cell by the target, returning that certified state.

        The cycle map stalls on two modes once the iterate is near the fixed
        point: a sign-flipping pair fed by free-boundary ties and a slowly
        damped smooth mode in the uncontacted region. Anderson mixing over
        the interior values extrapolates through both; the history is
        dropped whenever a step overshoots."""
        depth = 2 if v.ndim == 4 else 3
        ix = np.flatnonzero(mask.ravel() == 1)
        if v.size < 2 ** 31:
            ix = ix.astype(np.int32)
        # the envelope never drops below the obstacle's minimum over live
        # cells (means of values above it stay above it); clamping the mixed
        # state there keeps extrapolation from settling on a lower fixed
        # point of the sweep map
        gmin = np.inf
        for i in range(mask.shape[0]):
            live = mask[i] >= 1
            if live.any():
                gmin = min(gmin, float(g[i][live].min()))
        hist_x: list = []
        hist_f: list = []
        best = np.inf
        passes = 0
        while True:
            x = v.ravel()[ix].copy()
            v, proxy = self._vcycle(k, v, g, None, mask)
            self.cycles += 1
            passes += 1
            # the post-smoothing change is a free progress proxy; pay for the
            # certifying sweep only when it suggests the target is close (or
            # periodically, so a bad proxy cannot stall the stop test)
            if proxy < 20.0 * target or passes % 8 == 0 or (
                    limit is not None and passes >= limit):
                v, ch = self._certify(v, g, self.bits[k])
                if ch < target or (limit is not None and passes >= limit):
                    return v, ch
            if proxy > 10.0 * best:
                hist_x.clear()
                hist_f.clear()
            best = min(best, proxy)
            hist_x.append(x)
            hist_f.append(v.ravel()[ix] - x)
            if len(hist_x) > depth + 1:
                hist_x.pop(0)
                hist_f.pop(0)
            if len(hist_x) >= 2:
                mixed = _anderson_step(hist_x, hist_f)
                np.maximum(mixed, gmin, out=mixed)
                v.ravel()[ix] = mixed
                np.minimum(v, g, out=v)

    def solve(self, g: np.ndarray):
        if self.h is None:
            v = g.copy()
            ch = np.inf
            while ch >= self.tol_stop:
                v, ch = self._certify(v, g, self.bits[0])
            return v, ch
        grids = self.h.grids
        # an already-psh obstacle is its own envelope: one certifying sweep
        v0, ch0 = self._certify(g.copy(), g, self.bits[0])
        if ch0 < self.tol_stop:
            return v0, ch0
        del v0
        # obstacle chain for the full-multigrid initial pass
        gs = [g]
        for k in range(len(grids) - 1):
            p0, p1 = self.h.pair_maps[k]
            gc = np.empty(grids[k + 1].shape)
            self.r_mean(gs[k], gc, p0, p1)
            gs.append(gc)
        v = None
        for k in range(len(grids) - 1, -1, -1):
            gk = gs[k]
            mask = grids[k].mask
            if v is None:
                v = gk.copy()
            else:
                vf = gk.copy()
                vf[mask == 1] = 0.0
                lo, hi, wlo = self.h.interp_maps[k]
                self.p_add(v, vf, mask, lo, hi, wlo)
                np.minimum(vf, gk, out=vf)
                v = vf
            if k == len(grids) - 1:
                ch = np.inf
                spent = 0
                while ch >= min(self.tol_stop, 1e-10) and spent < 4000:
                    ch = self._smooth(v, gk, None, self.bits[k], 1)
                    spent += 1
                continue
            target = self.tol_stop if k == 0 else max(self.tol_stop, 1e-9)
            limit = None if k == 0 else 30
            v, ch = self._cycle_to_target(k, v, gk, mask, target, limit)
        return v, ch


def _anderson_step(hist_x: list, hist_f: list) -> np.ndarray:
    """Anderson-mixing extrapolation from fixed-point iterate history.

    Given iterates x_j and residuals f_j = G(x_j) - x_j, returns the mixed
    state sum_j w_j (x_j + f_j) whose weights minimise |sum_j w_j f_j| with
    sum w_j = 1. Built from pairwise dot products only, so the history
    vectors are never stacked into a dense matrix."""
    m = len(hist_x) - 1
    dots = np.empty((m + 1, m + 1))
    for a in range(m + 1):
        for b in range(a, m + 1):
            dots[a, b] = dots[b, a] = float(np.dot(hist_f[a], hist_f[b]))
    gram = np.empty((m, m))
    rhs = np.empty(m)
    for a in range(m):
        rhs[a] = dots[m, m] - dots[a, m]
        for b in range(a, m):
            gram[a, b] = gram[b, a] = (dots[a, b] - dots[a, m]
                                       - dots[b, m] + dots[m, m])
    gram[np.diag_indices_from(gram)] += 1e-12 * np.trace(gram) + 1e-300
    try:
        gamma = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        gamma = np.zeros(m)
    out = hist_x[m] + hist_f[m]
    out *= 1.0 - gamma.sum()
    for a in range(m):
        out += gamma[a] * hist_x[a]
        out += gamma[a] * hist_f[a]
    return out


def psh_envelope(obstacle: ScalarField, tol_stop: float = TOL_STOP,
                 max_sweeps: int = MAX_SWEEPS, directions=None,
                 use_multigrid: bool = True) -> EnvelopeResult:
    """Largest grid function below the obstacle passing the line-mean test.

    Interior cells relax toward min(obstacle, best line mean); band cells
    hold the obstacle's boundary data throughout. Stops when a full plain
    Jacobi sweep changes no cell by tol_stop or more; that certifying sweep
    is always the last operation applied."""
    if obstacle.pole is not None and obstacle.pole_count() > 0:
        raise ValidationError("envelope obstacle must be finite on interior cells")
    grid = obstacle.grid
    dirs = direction_set(grid.domain.dim_complex, directions)
    solver = _Solver(grid, dirs, tol_stop, max_sweeps, use_multigrid)
    # the solver never writes into the obstacle array, so no defensive copy
    g = np.ascontiguousarray(obstacle.values, dtype=float)
    v, ch = solver.solve(g)
    out = ScalarField(grid, v, None, f"env({obstacle.name})")
    # v <= g is maintained exactly; report the largest interior slack of the
    # certified state, slab by slab to avoid a full-box temporary
    gap = 0.0
    for i in range(grid.shape[0]):
        sel = grid.mask[i] == 1
        if sel.any():
            gap = max(gap, float((v[i][sel] - g[i][sel]).max()))
    report = check_psh(out, tolerance=10 * tol_stop, directions=dirs)
    return EnvelopeResult(out, solver.sweeps, solver.cycles, ch,
                          ch < tol_stop, report, gap)
