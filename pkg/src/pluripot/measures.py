"""Monge-Ampère mass of grid functions: densities, singular parts, pairings.

A measure lives on a grid box as a cellwise mass array plus exactly known
singular pieces: sphere shells (mass spread uniformly over a centred sphere)
and a point atom. Smooth routes differentiate a grid function; the model
route reads the mass off a piecewise radial profile in closed form, which is
what makes independent cross-checks of the discrete operators possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import _kernels as K
from .errors import HypothesisError, ValidationError
from .fields import ScalarField
from .grids import Grid, RegionMask
from .models import ModelFunction, as_model, radial_profile

# fraction of the total mass the negative-density clamp may remove before
# the measure is flagged as unreliable
CLAMP_WARN_FRACTION = 0.05


@dataclass
class Shell:
    """Mass spread uniformly over the sphere |z - center| = radius."""

    radius: float
    mass: float
    center: tuple = (0j,)

    def descriptor(self) -> dict:
        return {
            "radius": self.radius,
            "mass": self.mass,
            "center": [[c.real, c.imag] for c in self.center],
        }


def _as_center(center, dim: int) -> tuple:
    if center is None:
        return (0j,) * dim
    if np.isscalar(center) or isinstance(center, complex):
        center = (complex(center),) * 1 if dim == 1 else (complex(center),) * dim
    return tuple(complex(c) for c in center)


def _slab_coords(grid: Grid, i: int):
    """Complex coordinates of box slab i (first axis fixed), broadcastable
    to the slab shape."""
    if grid.domain.dim_complex == 1:
        return (grid.axis_centers(0)[i] + 1j * grid.axis_centers(1),)
    z1 = grid.axis_centers(0)[i] + 1j * grid.axis_centers(1)[:, None, None]
    z2 = (grid.axis_centers(2)[None, :, None]
          + 1j * grid.axis_centers(3)[None, None, :])
    return z1, z2


def sphere_points(radius: float, center, dim: int, count: int = 32):
    """A roughly uniform sample of the sphere |z - center| = radius,
    returned as per-coordinate complex arrays."""
    center = _as_center(center, dim)
    if dim == 1:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return (center[0] + radius * np.exp(1j * th),)
    m = max(2, int(round(count ** (1 / 3))))
    s = (np.arange(m) + 0.5) / m
    th1 = 2 * np.pi * (np.arange(m) + 0.5) / m
    th2 = 2 * np.pi * (np.arange(m) + 0.5) / m
    r1 = radius * np.sqrt(1.0 - s)[:, None, None]
    r2 = radius * np.sqrt(s)[:, None, None]
    z1 = center[0] + (r1 * np.exp(1j * th1)[None, :, None]).ravel()
    z2 = center[1] + (r2 * np.exp(1j * th2)[None, None, :]).ravel()
    return z1, z2


def sphere_mean(phi, radius: float, center=None, dim: int = 1,
                points: int = 64) -> float:
    """Mean of phi over the sphere |z - center| = radius.

    In C^1 this is a periodic trapezoid rule; in C^2 the sphere is sampled
    in coordinates (s, t1, t2) -> (sqrt(1-s) e^{i t1}, sqrt(s) e^{i t2}) in
    which the uniform sphere measure is the uniform cube measure."""
    model = as_model(phi)
    center = _as_center(center, dim)
    if dim == 1:
        th = 2 * np.pi * (np.arange(points) + 0.5) / points
        z = center[0] + radius * np.exp(1j * th)
        return float(np.mean(model(z)))
    s = ((np.arange(points) + 0.5) / points)[:, None, None]
    th1 = (2 * np.pi * (np.arange(points) + 0.5) / points)[None, :, None]
    th2 = (2 * np.pi * (np.arange(points) + 0.5) / points)[None, None, :]
    z1 = center[0] + radius * np.sqrt(1.0 - s) * np.exp(1j * th1)
    z2 = center[1] + radius * np.sqrt(s) * np.exp(1j * th2)
    vals = model(z1, z2)
    if np.shape(vals) != (points, points, points):
        vals = np.broadcast_to(vals, (points, points, points))
    return float(np.mean(vals))


class MAMeasure:
    """A positive measure on the grid: cellwise mass plus explicit shells
    and a point atom. The cellwise part carries everything a discrete
    operator produced; shells and atoms are exact and appear only on
    measures built from closed-form profiles."""

    def __init__(self, grid: Grid, cell_mass: np.ndarray | None = None,
                 shells=(), atom: float = 0.0, center=None, label: str = "",
                 clamped_cells: int = 0, clamped_mass: float = 0.0):
        self.grid = grid
        if cell_mass is None:
            cell_mass = np.zeros(grid.shape)
        self.cell_mass = cell_mass
        self.shells = sorted(shells, key=lambda s: s.radius)
        self.atom = float(atom)
        self.center = _as_center(center if center is not None else grid.domain.center,
                                 grid.domain.dim_complex)
        self.label = label
        self.clamped_cells = int(clamped_cells)
        self.clamped_mass = float(clamped_mass)

    # -- bookkeeping -------------------------------------------------------

    @property
    def clamp_fraction(self) -> float:
        kept = self.total_mass()
        lost = self.clamped_mass
        return lost / (kept + lost) if kept + lost > 0 else 0.0

    @property
    def clamp_suspect(self) -> bool:
        return self.clamp_fraction > CLAMP_WARN_FRACTION

    def descriptor(self) -> dict:
        return {
            "label": self.label,
            "total_mass": self.total_mass(),
            "cell_mass": float(self.cell_mass.sum()),
            "atom": self.atom,
            "shells": [s.descriptor() for s in self.shells],
            "clamped_cells": self.clamped_cells,
            "clamped_mass": self.clamped_mass,
            "clamp_suspect": self.clamp_suspect,
            "grid": self.grid.descriptor(),
        }

    # -- mass --------------------------------------------------------------

    def total_mass(self, region: RegionMask | None = None) -> float:
        if region is None:
            return float(self.cell_mass.sum()) + self.atom + sum(
                s.mass for s in self.shells)
        total = float(self.cell_mass[region.member].sum())
        if self.atom and self._point_in_region(self.center, region):
            total += self.atom
        for s in self.shells:
            if self._sphere_in_region(s, region):
                total += s.mass
        return total

    def restrict(self, region: RegionMask, closure: bool = False) -> "MAMeasure":
        """The measure's restriction to a region: cell masses keep only
        member cells; a shell survives when its sphere lies in the region
        (with closure=True, within one cell of it — the grid-scale closed
        set); the atom survives when its cell is a member."""
        target = region
        if closure:
            target = RegionMask(region.grid, region.dilate(1), False, None,
                                region.label)
        cm = np.zeros_like(self.cell_mass)
        for i in range(cm.shape[0]):
            sel = region.member[i]
            if sel.any():
                cm[i][sel] = self.cell_mass[i][sel]
        shells = [s for s in self.shells if self._sphere_in_region(s, target)]
        atom = self.atom if (self.atom and
                             self._point_in_region(self.center, target)) else 0.0
        return MAMeasure(self.grid, cm, shells, atom, self.center,
                         label=f"{self.label}|{region.label or 'region'}")

    def mass_in_ball(self, radius: float, center=None, closed: bool = True) -> float:
        """Mass of the (closed) coordinate ball around the measure centre;
        cells count by midpoint, shells and the atom exactly."""
        center = _as_center(center if center is not None else self.center,
                            self.grid.domain.dim_complex)
        r2 = self.grid.radius2(center)
        total = float(self.cell_mass[r2 <= radius * radius].sum())
        if all(abs(a - b) < 1e-12 for a, b in zip(center, self.center)):
            if self.atom:
                total += self.atom
            eps = 1e-12
            for s in self.shells:
                if (s.radius <= radius + eps) if closed else (s.radius < radius - eps):
                    total += s.mass
        else:
            for s in self.shells:
                pts = sphere_points(s.radius, s.center, len(center))
                d2 = sum(np.abs(p - c) ** 2 for p, c in zip(pts, center))
                if d2.max() <= radius * radius:
                    total += s.mass
            if self.atom:
                d2 = sum(abs(a - b) ** 2 for a, b in zip(self.center, center))
                if d2 <= radius * radius:
                    total += self.atom
        return total

    def _cells_of_points(self, coords):
        grid = self.grid
        idx = []
        ok = np.ones(coords[0].shape, dtype=bool)
        for d in range(len(grid.shape) // 2):
            for part, axis in ((coords[d].real, 2 * d), (coords[d].imag, 2 * d + 1)):
                i = np.floor((part - grid.lo[axis]) / grid.h).astype(int)
                ok &= (i >= 0) & (i < grid.shape[axis])
                idx.append(np.clip(i, 0, grid.shape[axis] - 1))
        return tuple(idx), ok

    def _point_in_region(self, center, region: RegionMask) -> bool:
        idx, ok = self._cells_of_points(tuple(np.array([c]) for c in center))
        return bool(ok[0]) and bool(region.member[tuple(i[0] for i in idx)])

    def _sphere_in_region(self, shell: Shell, region: RegionMask) -> bool:
        pts = sphere_points(shell.radius, shell.center, self.grid.domain.dim_complex)
        idx, ok = self._cells_of_points(pts)
        return bool(ok.all()) and bool(region.member[idx].all())

    # -- integration -------------------------------------------------------

    def pair(self, phi, weight: np.ndarray | None = None) -> float:
        """Integral of phi (times an optional cellwise weight) against the
        measure. Cell masses pair with the midpoint value, shells by sphere
        quadrature, the atom pointwise; the weight is read at the cell
        containing each quadrature point."""
        model = as_model(phi)
        dim = self.grid.domain.dim_complex
        total = 0.0
        for i in range(self.grid.shape[0]):
            slab = self.cell_mass[i]
            if not slab.any():
                continue
            vals = np.asarray(model(*_slab_coords(self.grid, i)), dtype=float)
            if vals.shape != slab.shape:
                vals = np.broadcast_to(vals, slab.shape)
            if weight is not None:
                vals = vals * weight[i]
            total += float(np.dot(slab.ravel(), vals.ravel()))
        for s in self.shells:
            if weight is None:
                total += s.mass * sphere_mean(model, s.radius, s.center, dim)
            else:
                pts = sphere_points(s.radius, s.center, dim)
                idx, ok = self._cells_of_points(pts)
                pv = np.asarray(model(*pts), dtype=float) * weight[idx]
                total += s.mass * float(pv[ok].mean())
        if self.atom:
            av = float(np.asarray(
                model(*(np.array([c]) for c in self.center)), dtype=float).ravel()[0])
            if weight is not None:
                idx, ok = self._cells_of_points(
                    tuple(np.array([c]) for c in self.center))
                av *= float(weight[idx][0]) if ok[0] else 0.0
            total += self.atom * av
        return total

    # -- radial structure ---------------------------------------------------

    def radial_bins(self, width: float | None = None):
        """Cellwise mass binned by distance from the measure centre.
        Returns (edges, masses); shells and the atom are not included."""
        grid = self.grid
        if width is None:
            width = grid.h
        r2 = grid.radius2(self.center)
        rmax = float(np.sqrt(r2.max()))
        nbins = int(np.floor(rmax / width)) + 1
        idx = np.minimum((np.sqrt(r2) / width).astype(int), nbins - 1)
        masses = np.bincount(idx.ravel(), weights=self.cell_mass.ravel(),
                             minlength=nbins)
        edges = width * np.arange(nbins + 1)
        return edges, masses

    def to_csv(self, path: str):
        """Write interior cell masses (same layout as ScalarField.to_csv);
        shells and the atom belong in the JSON descriptor."""
        ScalarField(self.grid, self.cell_mass, None, self.label).to_csv(path)


# --------------------------------------------------------------------------
# smooth (finite-difference) routes
# --------------------------------------------------------------------------


def _mollified(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    for ax in range(values.ndim):
        uniform_filter1d(out, size=3, axis=ax, mode="nearest", output=out)
    return out


def _clamp_negative(dens: np.ndarray):
    """Zero out negative density cells. Returns (cells, lost density sum);
    the mass lost is what decides whether the measure is trustworthy, since
    harmless O(h^2) sign noise can touch many cells."""
    neg = dens < 0.0
    n = int(neg.sum())
    if not n:
        return 0, 0.0
    lost = -float(dens[neg].sum())
    dens[neg] = 0.0
    return n, lost


def ma_smooth(field: ScalarField, mollify: bool | None = None) -> MAMeasure:
    """Monge-Ampère measure of a finite grid function by central differences.

    In C^1 this is the five-point Laplacian. In C^2 the function passes once
    through a width-3 mean filter (the determinant is quadratic in second
    differences, and corner kinks otherwise scatter mass at O(1) error) and
    the clamped Hessian determinant is integrated cellwise. Negative density
    cells are clamped to zero and counted."""
    if field.pole is not None and field.pole_count() > 0:
        raise ValidationError(
            "cellwise Monge-Ampère needs a finite field; build the measure "
            "from the model instead")
    grid = field.grid
    dim = grid.domain.dim_complex
    if mollify is None:
        mollify = dim == 2
    vals = _mollified(field.values) if mollify else field.values
    dens = np.empty_like(vals)
    if dim == 1:
        K.lap_density_2d(vals, grid.mask, grid.h, dens)
    else:
        K.det_density_4d(vals, grid.mask, grid.h, dens)
    nclamp, lost = _clamp_negative(dens)
    dens *= grid.cell_volume()
    return MAMeasure(grid, dens, label=f"ma({field.name})",
                     clamped_cells=nclamp, clamped_mass=lost * grid.cell_volume())


def mixed_ma(u: ScalarField, w: ScalarField, mollify: bool | None = None) -> MAMeasure:
    """Mixed Monge-Ampère measure dd^c u ^ dd^c w of two C^2-domain grid
    functions; bilinear and symmetric, clamped to nonnegative density."""
    grid = u.grid
    if grid.domain.dim_complex != 2:
        raise ValidationError("mixed products need two complex variables")
    if not grid.compatible(w.grid):
        raise ValidationError("mixed product factors live on different grids")
    for f in (u, w):
        if f.pole is not None and f.pole_count() > 0:
            raise ValidationError("mixed products need finite factors")
    if mollify is None:
        mollify = True
    uu = _mollified(u.values) if mollify else u.values
    ww = _mollified(w.values) if mollify else w.values
    dens = np.empty_like(uu)
    K.mixed_density_4d(uu, ww, grid.mask, grid.h, dens)
    nclamp, lost = _clamp_negative(dens)
    dens *= grid.cell_volume()
    return MAMeasure(grid, dens, label=f"ma({u.name},{w.name})",
                     clamped_cells=nclamp, clamped_mass=lost * grid.cell_volume())


def mixed_with_squared_norm(u: ScalarField) -> MAMeasure:
    """dd^c u ^ dd^c |z|^2 in C^2. The density is four times the real
    Laplacian of u, so the operator is linear and needs no mollification:
    windowed integrals telescope exactly across kinks."""
    grid = u.grid
    if grid.domain.dim_complex != 2:
        raise ValidationError("the squared-norm pairing needs two complex variables")
    if u.pole is not None and u.pole_count() > 0:
        raise ValidationError("the squared-norm pairing needs a finite field")
    dens = np.empty_like(u.values)
    K.lap_density_4d(u.values, grid.mask, grid.h, dens)
    nclamp, lost = _clamp_negative(dens)
    dens *= grid.cell_volume()
    return MAMeasure(grid, dens, label=f"ma({u.name},|z|^2)",
                     clamped_cells=nclamp, clamped_mass=lost * grid.cell_volume())


# --------------------------------------------------------------------------
# closed-form route for piecewise radial models
# --------------------------------------------------------------------------


def _ac_density(piece, r2: np.ndarray, dim: int) -> np.ndarray:
    alpha, _, gamma = piece
    if dim == 1:
        return np.full_like(r2, 4.0 * gamma)
    if gamma == 0.0:
        return np.zeros_like(r2)
    return 16.0 * gamma * (alpha + 2.0 * gamma * r2) / r2


def ma_model(model, grid: Grid) -> MAMeasure:
    """Exact Monge-Ampère measure of a piecewise radial model.

    For g(t) convex increasing in t = ln|z - c|, the mass of the closed
    ball of radius rho is (2 pi g'(ln rho))^n: slope jumps put shells on
    the kink spheres, the slope at -infinity puts an atom at the centre,
    and exponential pieces spread density in between. Cells hold the
    density sampled at their midpoint."""
    model = as_model(model)
    dim = grid.domain.dim_complex
    prof = radial_profile(model, dim)
    if prof is None:
        raise ValidationError(
            f"model {model.text!r} has no closed-form radial measure; "
            "sample it and use the cellwise route")
    if not prof.is_convex_increasing():
        raise HypothesisError(
            f"model {model.text!r} is not plurisubharmonic: its radial "
            "profile is not convex increasing")
    center = _as_center(prof.center, dim)
    tau = 2.0 * np.pi
    shells = []
    for t in prof.breaks:
        up = prof.slope(t, "+") ** dim - prof.slope(t, "-") ** dim
        mass = tau ** dim * up
        if mass > 1e-14:
            shells.append(Shell(float(np.exp(t)), float(mass), center))
    alpha0 = prof.slope_at_minus_inf()
    atom = (tau * alpha0) ** dim if alpha0 > 0 else 0.0

    cell_mass = np.zeros(grid.shape)
    vol = grid.cell_volume()
    if any(g != 0.0 for _, _, g in prof.pieces):
        r2 = grid.radius2(center)
        with np.errstate(divide="ignore"):
            t = 0.5 * np.log(r2)
        idx = np.searchsorted(np.asarray(prof.breaks), t, side="right")
        for i, piece in enumerate(prof.pieces):
            sel = (idx == i) & (grid.mask == 1)
            if sel.any():
                cell_mass[sel] = _ac_density(piece, r2[sel], dim) * vol
    return MAMeasure(grid, cell_mass, shells, atom, center,
                     label=f"ma[{model.text}]")


# --------------------------------------------------------------------------
# singular-part detection and measure distance
# --------------------------------------------------------------------------


@dataclass
class RadialDecomposition:
    shells: list
    atom: float
    edges: np.ndarray
    ac_bins: np.ndarray

    def descriptor(self) -> dict:
        return {
            "shells": [s.descriptor() for s in self.shells],
            "atom": self.atom,
            "ac_mass": float(self.ac_bins.sum()),
        }


def _local_background(masses: np.ndarray, half: int = 8, guard: int = 2):
    """Per-bin median of the surrounding bins, excluding a guard window."""
    n = masses.size
    bg = np.empty(n)
    spread = np.empty(n)
    for k in range(n):
        lo, hi = max(0, k - half), min(n, k + half + 1)
        sel = np.r_[masses[lo:max(lo, k - guard)], masses[min(hi, k + guard + 1):hi]]
        if sel.size == 0:
            sel = masses[lo:hi]
        bg[k] = np.median(sel)
        spread[k] = np.median(np.abs(sel - bg[k]))
    return bg, spread


def detect_singular(measure: MAMeasure, min_mass: float | None = None,
                    atom_radius: float | None = None) -> RadialDecomposition:
    """Split the cellwise mass into sphere shells, a centre atom, and a
    radially binned remainder.

    Bins whose mass stands clearly above the local median background are
    clustered into shells; a cluster hugging the centre is read as an atom.
    Explicit shells and atom already on the measure are merged in."""
    edges, masses = measure.radial_bins()
    total = float(masses.sum())
    if min_mass is None:
        min_mass = max(1e-9, 0.01 * (total + measure.atom
                                     + sum(s.mass for s in measure.shells)))
    if atom_radius is None:
        atom_radius = 3.0 * measure.grid.h
    bg, spread = _local_background(masses)
    excess = masses - bg
    flagged = excess > np.maximum(6.0 * spread, 0.25 * min_mass)
    shells = []
    atom = 0.0
    ac = masses.copy()
    centers = 0.5 * (edges[:-1] + edges[1:])
    k = 0
    n = masses.size
    while k < n:
        if not flagged[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and (flagged[j + 1] or (j + 2 < n and flagged[j + 2])):
            j += 1
        lo, hi = max(0, k - 1), min(n - 1, j + 1)
        left = bg[lo]
        right = bg[hi]
        w = np.linspace(left, right, hi - lo + 1)
        exc = np.maximum(masses[lo:hi + 1] - w, 0.0)
        mass = float(exc.sum())
        if mass >= min_mass:
            radius = float(np.dot(centers[lo:hi + 1], exc) / mass)
            ac[lo:hi + 1] = w
            if radius < atom_radius:
                atom += mass
            else:
                shells.append(Shell(radius, mass, measure.center))
        k = j + 1
    shells.extend(measure.shells)
    atom += measure.atom
    shells.sort(key=lambda s: s.radius)
    return RadialDecomposition(shells, atom, edges, ac)


def tv_distance(mu: MAMeasure, nu: MAMeasure, radius_tol: float | None = None,
                min_mass: float | None = None) -> float:
    """Total-variation distance between two centred measures, resolved
    radially: detected/declared shells pair up by radius and contribute the
    mass difference, unpaired shells their full mass, atoms their
    difference, and the remaining cellwise parts a binwise L1 distance."""
    dim = mu.grid.domain.dim_complex
    if dim != nu.grid.domain.dim_complex:
        raise ValidationError("measures live in different dimensions")
    if any(abs(a - b) > 1e-9 for a, b in zip(mu.center, nu.center)):
        raise ValidationError("radial distance needs a common centre")
    h = max(mu.grid.h, nu.grid.h)
    if radius_tol is None:
        radius_tol = 3.0 * h
    da = detect_singular(mu, min_mass)
    db = detect_singular(nu, min_mass)
    total = abs(da.atom - db.atom)
    used = [False] * len(db.shells)
    for sa in da.shells:
        best, bestd = -1, radius_tol
        for i, sb in enumerate(db.shells):
            if not used[i] and abs(sb.radius - sa.radius) <= bestd:
                best, bestd = i, abs(sb.radius - sa.radius)
        if best >= 0:
            used[best] = True
            total += abs(sa.mass - db.shells[best].mass)
        else:
            total += sa.mass
    total += sum(s.mass for i, s in enumerate(db.shells) if not used[i])
    # common rebinning of the cellwise remainders
    width = h
    rmax = max(da.edges[-1], db.edges[-1])
    nbins = int(np.ceil(rmax / width)) + 1
    binned = np.zeros((2, nbins))
    for row, dec in enumerate((da, db)):
        ctr = 0.5 * (dec.edges[:-1] + dec.edges[1:])
        idx = np.minimum((ctr / width).astype(int), nbins - 1)
        np.add.at(binned[row], idx, dec.ac_bins)
    total += float(np.abs(binned[0] - binned[1]).sum())
    return total


# --------------------------------------------------------------------------
# test functions for weak-convergence pairings
# --------------------------------------------------------------------------


def _bump(radius: float, center, dim: int) -> ModelFunction:
    center = _as_center(center, dim)

    def fn(*zs):
        s2 = sum(np.abs(z - c) ** 2 for z, c in zip(zs, center)) / radius ** 2
        out = np.zeros(np.shape(s2))
        inside = s2 < 1.0
        if np.any(inside):
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - np.asarray(s2)[inside]))
        return out

    cs = ",".join(f"{c.real:g}{c.imag:+g}i" for c in center)
    fn.label = f"bump(r={radius:g};c={cs})"
    return as_model(fn)


def test_function_bank(dim: int) -> list:
    """Smooth compactly supported test functions inside the unit ball:
    eight centred bumps of increasing support and four off-centre ones."""
    bank = [_bump(r, None, dim)
            for r in (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9)]
    offsets = [(0.3 + 0j, 0.45), (-0.25 + 0.2j, 0.4),
               (0.1 - 0.35j, 0.5), (-0.15 - 0.15j, 0.6)]
    for c, r in offsets:
        if dim == 1:
            bank.append(_bump(r, c, 1))
        else:
            bank.append(_bump(r, (c, 0.5 * c), 2))
    return bank
