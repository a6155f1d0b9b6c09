"""Scalar fields on grids: sampled models, envelopes, solver outputs.

Values live on the full box array; only cells with mask >= 1 are meaningful
(interior values + boundary-band data). Log poles are clamped to a large
negative floor and tagged so downstream statistics can skip them.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import ValidationError
from .grids import Grid, RegionMask
from .models import ModelFunction, as_model

POLE_FLOOR = -1.0e6
MAX_POLES = 64


class ScalarField:
    def __init__(self, grid: Grid, values: np.ndarray, pole=None, name: str = "field"):
        if values.shape != grid.shape:
            raise ValidationError("field values must cover the grid box")
        self.grid = grid
        self.values = values
        self.pole = pole  # bool box array or None
        self.name = name

    # --- stats --------------------------------------------------------
    def _finite_sel(self):
        sel = self.grid.mask >= 1
        if self.pole is not None:
            sel = sel & ~self.pole
        return sel

    @property
    def lower_bound(self) -> float:
        return float(self.values[self._finite_sel()].min())

    @property
    def upper_bound(self) -> float:
        return float(self.values[self._finite_sel()].max())

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.mask == 1]

    def band_values(self) -> np.ndarray:
        return self.values[self.grid.mask == 2]

    def pole_count(self) -> int:
        if self.pole is None:
            return 0
        return int((self.pole & (self.grid.mask == 1)).sum())

    def sup_diff(self, other, region: RegionMask | None = None) -> float:
        ov = other.values if isinstance(other, ScalarField) else np.asarray(other)
        sel = self.grid.mask == 1 if region is None else region.member
        if self.pole is not None:
            sel = sel & ~self.pole
        if isinstance(other, ScalarField) and other.pole is not None:
            sel = sel & ~other.pole
        if not sel.any():
            return 0.0
        return float(np.abs(self.values[sel] - ov[sel]).max())

    def boundary_band_stats(self, widths=(1, 2, 4)):
        """Per width w: stats of interior-cell values at boundary distance
        in ((w-1)h, w*h]. Returns list of dicts ordered as ``widths``."""
        g = self.grid
        h = g.h
        acc = [dict(n=0, mn=np.inf, mx=-np.inf, s=0.0) for _ in widths]
        dim = len(g.shape)
        if dim == 2:
            slabs = [(slice(None),)]
        else:
            slabs = [(i,) for i in range(g.shape[0])]
        ax = [g.axis_centers(d) for d in range(dim)]
        for sl in slabs:
            if dim == 2:
                coords = np.meshgrid(ax[0], ax[1], indexing="ij")
            else:
                i = sl[0]
                coords = [np.full((1, 1, 1), ax[0][i]), ax[1][:, None, None],
                          ax[2][None, :, None], ax[3][None, None, :]]
            dist = g.domain.boundary_distance(*coords)
            vals = self.values[sl] if dim == 4 else self.values
            msk = (g.mask[sl] if dim == 4 else g.mask) == 1
            if self.pole is not None:
                msk = msk & ~(self.pole[sl] if dim == 4 else self.pole)
            dist = np.broadcast_to(dist, vals.shape)
            for w, a in zip(widths, acc):
                sel = msk & (dist > (w - 1) * h) & (dist <= w * h)
                if sel.any():
                    v = vals[sel]
                    a["n"] += v.size
                    a["mn"] = min(a["mn"], float(v.min()))
                    a["mx"] = max(a["mx"], float(v.max()))
                    a["s"] += float(v.sum())
        out = []
        for w, a in zip(widths, acc):
            out.append({
                "width": w,
                "count": a["n"],
                "min": a["mn"] if a["n"] else 0.0,
                "max": a["mx"] if a["n"] else 0.0,
                "mean": a["s"] / a["n"] if a["n"] else 0.0,
            })
        return out

    # --- arithmetic -----------------------------------------------------
    def _combine_pole(self, other):
        if isinstance(other, ScalarField):
            if self.pole is None:
                return None if other.pole is None else other.pole.copy()
            if other.pole is None:
                return self.pole.copy()
            return self.pole | other.pole
        return None if self.pole is None else self.pole.copy()

    def __add__(self, other):
        ov = other.values if isinstance(other, ScalarField) else float(other)
        return ScalarField(self.grid, self.values + ov, self._combine_pole(other),
                           f"{self.name}+")

    __radd__ = __add__

    def __sub__(self, other):
        ov = other.values if isinstance(other, ScalarField) else float(other)
        return ScalarField(self.grid, self.values - ov, self._combine_pole(other),
                           f"{self.name}-")

    def __rsub__(self, other):
        return ScalarField(self.grid, float(other) - self.values,
                           None if self.pole is None else self.pole.copy(),
                           f"-{self.name}")

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * float(c),
                           None if self.pole is None else self.pole.copy(),
                           f"{float(c):g}*{self.name}")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def maximum(self, other) -> "ScalarField":
        ov = other.values if isinstance(other, ScalarField) else float(other)
        pole = self._combine_pole(other)
        vals = np.maximum(self.values, ov)
        if pole is not None:
            # a max with a finite branch removes the pole
            finite = vals > POLE_FLOOR / 2
            pole = pole & ~finite
            if not pole.any():
                pole = None
        return ScalarField(self.grid, vals, pole, f"max({self.name},..)")

    def copy(self, name=None) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(),
                           None if self.pole is None else self.pole.copy(),
                           name or self.name)

    def abs(self) -> "ScalarField":
        return ScalarField(self.grid, np.abs(self.values),
                           None if self.pole is None else self.pole.copy(),
                           f"|{self.name}|")

    # --- io ---------------------------------------------------------------
    def to_csv(self, path: str):
        g = self.grid
        dim = len(g.shape)
        header = ["x1", "y1", "value"] if dim == 2 else ["x1", "y1", "x2", "y2", "value"]
        ax = [g.axis_centers(d) for d in range(dim)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            it = np.nonzero(g.mask >= 1)
            coords = [ax[d][it[d]] for d in range(dim)]
            vals = self.values[it]
            for row in zip(*coords, vals):
                w.writerow([f"{c!r}" for c in row[:-1]] + [f"{row[-1]!r}"])


def field_from_csv(path: str, grid: Grid, name="csv") -> ScalarField:
    dim = len(grid.shape)
    values = np.zeros(grid.shape, dtype=float)
    seen = np.zeros(grid.shape, dtype=bool)
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if len(header) != dim + 1:
            raise ValidationError(f"CSV arity {len(header)} does not match grid")
        for row in rd:
            coords = [float(c) for c in row[:-1]]
            idx = []
            for d, c in enumerate(coords):
                i = int(round((c - grid.lo[d]) / grid.h - 0.5))
                if not (0 <= i < grid.shape[d]):
                    raise ValidationError("CSV coordinate outside grid box")
                idx.append(i)
            values[tuple(idx)] = float(row[-1])
            seen[tuple(idx)] = True
    missing = (grid.mask >= 1) & ~seen
    if missing.any():
        raise ValidationError(f"CSV missing {int(missing.sum())} grid cells")
    return ScalarField(grid, values, None, name)


def sample(model, grid: Grid, name=None, max_poles: int = MAX_POLES) -> ScalarField:
    """Evaluate a model on every box cell; tag and clamp log poles."""
    model = as_model(model)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = grid.evaluate(model)
    bad = ~np.isfinite(values)
    pole = None
    if bad.any():
        neg = bad & (np.isneginf(values) | np.isnan(values))
        posinf = bad & np.isposinf(values)
        if posinf.any():
            raise ValidationError("model evaluates to +inf on the grid")
        npole = int((neg & (grid.mask == 1)).sum())
        if npole > max_poles:
            raise ValidationError(
                f"model has {npole} singular cells, over the limit {max_poles}"
            )
        values = values.copy()
        values[neg] = POLE_FLOOR
        if neg.any():
            pole = neg
    return ScalarField(grid, values, pole, name or model.text)


def constant_field(grid: Grid, c: float, name=None) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(c)), None,
                       name or f"const({c:g})")


def zero_field(grid: Grid) -> ScalarField:
    return constant_field(grid, 0.0, "zero")
