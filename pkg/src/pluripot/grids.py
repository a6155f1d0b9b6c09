"""Domains in C^n as uniform real 2n-dimensional cell grids.

A grid covers the bounding box of the domain plus a band margin. Every cell
is classified once: 0 = outside, 1 = interior (cell center in the open
domain), 2 = boundary band (non-interior cell within ``band_width`` cells,
Chebyshev distance, of an interior cell). Fields carry values on interior
cells and boundary data on band cells; stencils only ever read cells with
mask >= 1.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ValidationError

BAND_WIDTH = 2
MIN_RESOLUTION = 8
# box cells per grid; ~1.6 GB of float64 at the default cap
DEFAULT_CELL_CAP = 210_000_000


def _cell_cap() -> int:
    cap = os.environ.get("PLURIPOT_MAX_CELLS")
    if cap:
        return int(float(cap))
    mb = os.environ.get("PLURIPOT_MEMORY_CAP_MB")
    if mb:
        # budget three float64 box arrays per grid
        return int(float(mb) * 1e6 / (8 * 3))
    return DEFAULT_CELL_CAP


@dataclass(frozen=True)
class Domain:
    kind: str                 # "ball" | "polydisc"
    dim_complex: int          # n in {1, 2}
    radius: float
    center: tuple             # n complex numbers

    @property
    def dim_real(self) -> int:
        return 2 * self.dim_complex

    def volume(self) -> float:
        """Lebesgue volume of the domain in R^{2n}."""
        r = self.radius
        if self.kind == "ball":
            return np.pi * r * r if self.dim_complex == 1 else (np.pi**2 / 2) * r**4
        # polydisc: product of discs
        return (np.pi * r * r) ** self.dim_complex

    def contains(self, *coords, closed: bool = False):
        """Membership test on real coordinate arrays (x1, y1[, x2, y2])."""
        c = self.center
        if self.kind == "ball":
            q = (coords[0] - c[0].real) ** 2 + (coords[1] - c[0].imag) ** 2
            if self.dim_complex == 2:
                q = q + (coords[2] - c[1].real) ** 2 + (coords[3] - c[1].imag) ** 2
            r2 = self.radius * self.radius
            return q <= r2 if closed else q < r2
        m = np.sqrt((coords[0] - c[0].real) ** 2 + (coords[1] - c[0].imag) ** 2)
        if self.dim_complex == 2:
            m2 = np.sqrt((coords[2] - c[1].real) ** 2 + (coords[3] - c[1].imag) ** 2)
            m = np.maximum(m, m2)
        return m <= self.radius if closed else m < self.radius

    def boundary_distance(self, *coords):
        """Signed distance-like gauge: positive inside, 0 on the boundary."""
        c = self.center
        if self.kind == "ball":
            q = (coords[0] - c[0].real) ** 2 + (coords[1] - c[0].imag) ** 2
            if self.dim_complex == 2:
                q = q + (coords[2] - c[1].real) ** 2 + (coords[3] - c[1].imag) ** 2
            return self.radius - np.sqrt(q)
        m = np.sqrt((coords[0] - c[0].real) ** 2 + (coords[1] - c[0].imag) ** 2)
        if self.dim_complex == 2:
            m2 = np.sqrt((coords[2] - c[1].real) ** 2 + (coords[3] - c[1].imag) ** 2)
            m = np.maximum(m, m2)
        return self.radius - m

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "dim_complex": self.dim_complex,
            "radius": self.radius,
            "center": [[z.real, z.imag] for z in self.center],
        }


def make_domain(kind: str, dim_complex: int, radius: float, center=0) -> Domain:
    if kind not in ("ball", "polydisc"):
        raise ValidationError(f"unsupported domain kind {kind!r}")
    if dim_complex not in (1, 2):
        raise ValidationError(f"unsupported dimension {dim_complex} (need 1 or 2)")
    if not (radius > 0):
        raise ValidationError(f"radius must be positive, got {radius}")
    if np.isscalar(center) or isinstance(center, complex):
        center = (complex(center),) * dim_complex
    else:
        center = tuple(complex(c) for c in center)
    if len(center) != dim_complex:
        raise ValidationError("center length must match dim_complex")
    return Domain(kind, dim_complex, float(radius), center)


class Grid:
    """Immutable uniform grid over a domain's bounding box plus band margin."""

    def __init__(self, domain: Domain, resolution: int):
        self.domain = domain
        self.resolution = int(resolution)
        self.h = 1.0 / self.resolution
        n = domain.dim_complex
        m = int(np.ceil(domain.radius * self.resolution - 1e-9))
        self.cells_per_radius = m
        self.band_width = BAND_WIDTH
        side = 2 * m + 2 * self.band_width
        self.shape = (side,) * (2 * n)
        cr = []
        for k in range(n):
            cr.extend([domain.center[k].real, domain.center[k].imag])
        self.lo = tuple(c - (m + self.band_width) * self.h for c in cr)
        ncells = side ** (2 * n)
        if ncells > _cell_cap():
            raise ValidationError(
                f"memory budget exceeded: {ncells} cells over cap {_cell_cap()}"
            )
        self.mask = self._classify()
        # stencil kernels index neighbours without bound checks, which is
        # sound only while no interior cell touches the box edge
        for ax in range(self.mask.ndim):
            if (np.take(self.mask, 0, ax) == 1).any() or (
                    np.take(self.mask, -1, ax) == 1).any():
                raise ValidationError("interior cell on the box edge")
        self.interior_count = int((self.mask == 1).sum())
        self.band_count = int((self.mask == 2).sum())

    # --- geometry -------------------------------------------------------
    def axis_centers(self, d: int) -> np.ndarray:
        return self.lo[d] + (np.arange(self.shape[d]) + 0.5) * self.h

    def _classify(self) -> np.ndarray:
        dom = self.domain
        dim = dom.dim_real
        if dim == 2:
            x, y = np.meshgrid(self.axis_centers(0), self.axis_centers(1), indexing="ij")
            interior = dom.contains(x, y)
        else:
            interior = np.empty(self.shape, dtype=bool)
            x1 = self.axis_centers(0)
            y1 = self.axis_centers(1)[:, None, None]
            x2 = self.axis_centers(2)[None, :, None]
            y2 = self.axis_centers(3)[None, None, :]
            for i in range(self.shape[0]):
                interior[i] = dom.contains(x1[i], y1, x2, y2)
        struct = np.ones((3,) * dim, dtype=bool)
        near = ndimage.binary_dilation(interior, structure=struct, iterations=self.band_width)
        mask = np.zeros(self.shape, dtype=np.uint8)
        mask[near] = 2
        mask[interior] = 1
        return mask

    def cell_volume(self) -> float:
        return self.h ** self.domain.dim_real

    def radius2(self, center=None) -> np.ndarray:
        """Squared distance of every cell center from ``center`` (domain
        center by default). Full box array; prefer slabs for 4-d grids."""
        if center is None:
            center = self.domain.center
        cr = []
        for z in center:
            cr.extend([complex(z).real, complex(z).imag])
        axes = [self.axis_centers(d) - cr[d] for d in range(len(self.shape))]
        out = axes[0][(...,) + (None,) * (len(axes) - 1)] ** 2
        for d in range(1, len(axes)):
            sh = [None] * len(axes)
            sh[d] = slice(None)
            out = out + (axes[d] ** 2)[tuple(sh)]
        return out

    def complex_coords(self):
        """Meshgrids of the n complex coordinates (full box; 2-d grids only
        should call this eagerly, 4-d callers should iterate slabs)."""
        ax = [self.axis_centers(d) for d in range(len(self.shape))]
        grids = np.meshgrid(*ax, indexing="ij")
        zs = []
        for k in range(self.domain.dim_complex):
            zs.append(grids[2 * k] + 1j * grids[2 * k + 1])
        return zs

    def evaluate(self, fn) -> np.ndarray:
        """Evaluate fn(z1[, z2]) on every cell center, slab by slab."""
        out = np.empty(self.shape, dtype=float)
        if self.domain.dim_complex == 1:
            z1 = self.complex_coords()[0]
            out[...] = fn(z1)
            return out
        y1 = self.axis_centers(1)
        x2 = self.axis_centers(2)
        y2 = self.axis_centers(3)
        z2 = (x2[:, None] + 1j * y2[None, :])[None, :, :]
        for i, x1 in enumerate(self.axis_centers(0)):
            z1 = (x1 + 1j * y1)[:, None, None]
            out[i] = fn(z1, z2)
        return out

    def descriptor(self) -> dict:
        return {
            "domain": self.domain.descriptor(),
            "resolution": self.resolution,
            "spacing": self.h,
            "shape": list(self.shape),
            "interior_cells": self.interior_count,
            "band_cells": self.band_count,
        }

    def compatible(self, other: "Grid") -> bool:
        return (
            self.shape == other.shape
            and self.resolution == other.resolution
            and self.domain == other.domain
        )


def make_grid(domain: Domain, resolution: int) -> Grid:
    if resolution < MIN_RESOLUTION:
        raise ValidationError(
            f"resolution too small: {resolution} < {MIN_RESOLUTION}"
        )
    return Grid(domain, resolution)


@dataclass
class RegionMask:
    grid: Grid
    member: np.ndarray            # bool box array, subset of interior
    compactly_contained: bool = field(default=False)
    predicate: object = None      # optional re-samplable predicate fn(z1[,z2])
    label: str = ""

    @property
    def count(self) -> int:
        return int(self.member.sum())

    def volume(self) -> float:
        return self.count * self.grid.cell_volume()

    def is_empty(self) -> bool:
        return not self.member.any()

    def intersect(self, other: "RegionMask") -> "RegionMask":
        if other.grid is not self.grid and not self.grid.compatible(other.grid):
            raise ValidationError("region masks live on different grids")
        return _finish_mask(self.grid, self.member & other.member, None,
                            label=f"{self.label}&{other.label}")

    def dilate(self, cells: int) -> np.ndarray:
        """Member set dilated by ``cells`` (Chebyshev), clipped to interior."""
        if cells <= 0 or self.is_empty():
            return self.member.copy()
        # separable box maximum = Chebyshev-ball dilation, cost independent
        # of the radius (binary_dilation iterates a full 3^d structure)
        out = ndimage.maximum_filter(self.member.view(np.uint8),
                                     size=2 * cells + 1, mode="constant")
        out = out.astype(bool)
        out &= self.grid.mask == 1
        return out

    def erode(self, cells: int) -> "RegionMask":
        if cells <= 0:
            return self
        struct = np.ones((3,) * self.member.ndim, dtype=bool)
        m = ndimage.binary_erosion(self.member, structure=struct, iterations=cells)
        return _finish_mask(self.grid, m, self.predicate, label=f"{self.label}-erode{cells}")

    def coarsen(self, coarse: Grid) -> "RegionMask":
        """Rebuild on a coarser grid: re-apply the predicate when known,
        otherwise block-OR the member cells."""
        if self.predicate is not None:
            return region_from_predicate(coarse, self.predicate, label=self.label)
        factor = self.grid.resolution // coarse.resolution
        if factor * coarse.resolution != self.grid.resolution:
            raise ValidationError("coarse resolution must divide fine resolution")
        off = (factor - 1) * self.grid.band_width
        member = np.zeros(coarse.shape, dtype=bool)
        idx = [np.minimum((np.arange(s) + off) // factor, cs - 1)
               for s, cs in zip(self.grid.shape, coarse.shape)]
        fine_idx = np.nonzero(self.member)
        coords = tuple(idx[d][fine_idx[d]] for d in range(len(idx)))
        member[coords] = True
        member &= coarse.mask == 1
        return _finish_mask(coarse, member, None, label=self.label)

    def to_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"i{d}" for d in range(self.member.ndim)])
            for idx in zip(*np.nonzero(self.member)):
                w.writerow([int(i) for i in idx])

    def descriptor(self) -> dict:
        return {
            "cells": self.count,
            "volume": self.volume(),
            "compactly_contained": self.compactly_contained,
            "label": self.label,
        }


def _finish_mask(grid: Grid, member: np.ndarray, predicate, label="") -> RegionMask:
    member = member & (grid.mask == 1)
    cc = False
    if member.any():
        struct = np.ones((3,) * member.ndim, dtype=bool)
        near_exterior = ndimage.binary_dilation(grid.mask != 1, structure=struct)
        cc = not bool((member & near_exterior).any())
    return RegionMask(grid, member, cc, predicate, label)


def region_from_predicate(grid: Grid, predicate, label="") -> RegionMask:
    """Mask of interior cells whose centers satisfy predicate(z1[, z2])."""
    raw = grid.evaluate(lambda *zs: np.asarray(predicate(*zs), dtype=bool))
    return _finish_mask(grid, raw.astype(bool), predicate, label)


def region_from_member(grid: Grid, member: np.ndarray, label="") -> RegionMask:
    """Mask from a raw cell-membership array (clipped to interior cells)."""
    if member.shape != grid.shape:
        raise ValidationError("member array must cover the grid box")
    return _finish_mask(grid, member.astype(bool), None, label)


def ball_region(grid: Grid, radius: float, center=None, closed=True, label="") -> RegionMask:
    if center is None:
        center = grid.domain.center
    elif np.isscalar(center) or isinstance(center, complex):
        center = (complex(center),) * grid.domain.dim_complex
    c = tuple(complex(v) for v in center)
    r2 = radius * radius

    if grid.domain.dim_complex == 1:
        def predicate(z1):
            q = np.abs(z1 - c[0]) ** 2
            return q <= r2 if closed else q < r2
    else:
        def predicate(z1, z2):
            q = np.abs(z1 - c[0]) ** 2 + np.abs(z2 - c[1]) ** 2
            return q <= r2 if closed else q < r2

    lab = label or f"ball(r={radius:g})"
    return region_from_predicate(grid, predicate, label=lab)


def empty_region(grid: Grid) -> RegionMask:
    return RegionMask(grid, np.zeros(grid.shape, dtype=bool), False, None, "empty")


def full_interior_region(grid: Grid) -> RegionMask:
    return _finish_mask(grid, grid.mask == 1, None, label="interior")


def domain_to_json(domain: Domain, path: str):
    with open(path, "w") as fh:
        json.dump(domain.descriptor(), fh, indent=2, sort_keys=True)


def domain_from_descriptor(d: dict) -> Domain:
    center = [complex(re, im) for re, im in d.get("center", [[0.0, 0.0]] * d["dim_complex"])]
    return make_domain(d["kind"], d["dim_complex"], d["radius"], center)
