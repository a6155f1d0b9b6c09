"""Convergence experiments for bounded plurisubharmonic functions.

Two notions of convergence for a sequence u_j -> u are probed against each
other: convergence in capacity (deviation sets {|u_j - u| > delta} have
vanishing capacity) and convergence of the Monge-Ampère measures against a
bank of smooth compactly supported test functions. The module also checks
two quantitative stability inequalities — a weighted energy bound and a
capacity bound for the deviation set in terms of the total-variation
distance of the operator measures — plus the classical comparison
inequality, on closed-form cases and on randomized batteries.

Grids cannot take boundary limits or quantify over every delta, so the
surrogates are explicit and reported as such: boundary hypotheses are
extrapolated from nested one-cell bands, and "-> 0" is decided on a finite
delta ladder with a tolerance tied to the measured refinement gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import deviation_capacity
from .errors import HypothesisError, ValidationError
from .fields import ScalarField, sample, zero_field
from .grids import (Grid, RegionMask, full_interior_region, make_domain,
                    make_grid, region_from_member)
from .measures import (MAMeasure, ma_model, ma_smooth, mixed_ma,
                       test_function_bank, tv_distance)

DELTA_LADDER = (0.5, 0.25, 0.125)
TOL_FLOOR = 1e-6
# fraction of the outermost band magnitude granted to the extrapolated
# boundary value: curvature the linear band fit cannot represent
BAND_SLOPE_SHARE = 0.05
# a ladder entry counts as non-increasing up to this share of the tolerance
LADDER_JITTER = 0.1

SCHEMA_INEQUALITY = "pluripot/inequality-report/1"
SCHEMA_CONVERGENCE = "pluripot/convergence-report/1"
SCHEMA_COUNTEREXAMPLE = "pluripot/counterexample-report/1"
SCHEMA_BATTERY = "pluripot/battery-report/1"


# --- boundary-limit surrogates -------------------------------------------

def band_extrapolation(diff: ScalarField, mode: str, widths=(1, 2, 4)):
    """Extrapolate a boundary limit from nested one-cell bands.

    Fits a line through the band statistic (``min`` of the values, or
    ``abs`` for the largest magnitude) against the band midpoint distance
    and reads it at distance zero. Returns ``(intercept, tolerance)`` where
    the tolerance is three times the fit residual plus a slope share of the
    outermost band, the resolution-limited uncertainty of the intercept."""
    rows = [r for r in diff.boundary_band_stats(widths) if r["count"] > 0]
    if len(rows) < 2:
        raise ValidationError("grid too coarse to probe the boundary bands")
    h = diff.grid.h
    xs = np.array([(r["width"] - 0.5) * h for r in rows])
    if mode == "min":
        ys = np.array([r["min"] for r in rows])
    elif mode == "abs":
        ys = np.array([max(abs(r["min"]), abs(r["max"])) for r in rows])
    else:
        raise ValidationError(f"unknown band statistic {mode!r}")
    coef = np.polynomial.polynomial.polyfit(xs, ys, 1)
    resid = float(np.max(np.abs(coef[0] + coef[1] * xs - ys)))
    tol = 3.0 * resid + max(TOL_FLOOR, BAND_SLOPE_SHARE * float(np.max(np.abs(ys))))
    return float(coef[0]), tol


def _require_liminf_nonneg(u: ScalarField, v: ScalarField):
    b0, tol = band_extrapolation(u - v, "min")
    if b0 < -tol:
        raise HypothesisError(
            "boundary hypothesis fails: the difference of the two fields "
            f"extrapolates to {b0:.4g} < 0 at the boundary (tolerance {tol:.2g})")


def _require_limsup_zero(u: ScalarField, v: ScalarField):
    b0, tol = band_extrapolation((u - v).abs(), "abs")
    if b0 > tol:
        raise HypothesisError(
            "boundary hypothesis fails: |difference| extrapolates to "
            f"{b0:.4g} != 0 at the boundary (tolerance {tol:.2g})")


# --- inequality reports ----------------------------------------------------

@dataclass
class InequalityReport:
    """Both sides of one inequality check plus its named sub-integrals."""

    label: str
    lhs: float
    rhs: float
    slack_tolerance: float
    term_breakdown: dict

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs + self.slack_tolerance

    def with_slack(self, slack: float) -> "InequalityReport":
        return InequalityReport(self.label, self.lhs, self.rhs, float(slack),
                                dict(self.term_breakdown))

    def descriptor(self) -> dict:
        return {
            "schema": SCHEMA_INEQUALITY,
            "label": self.label,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "slack_tolerance": self.slack_tolerance,
            "pass": self.passed,
            "term_breakdown": dict(self.term_breakdown),
        }


def _measure_or(default_of, override: MAMeasure | None, grid: Grid) -> MAMeasure:
    if override is None:
        return default_of()
    if override.grid is not grid and not grid.compatible(override.grid):
        raise ValidationError("measure override lives on a different grid")
    return override


def _strict_sublevel(u: ScalarField, v: ScalarField) -> RegionMask:
    grid = u.grid
    if v.grid is not grid and not grid.compatible(v.grid):
        raise ValidationError("fields live on different grids")
    return region_from_member(grid, u.values < v.values,
                              label=f"{{{u.name}<{v.name}}}")


def verify_lemma1(u: ScalarField, v: ScalarField, w_list, r: float,
                  mu_u: MAMeasure | None = None,
                  mu_v: MAMeasure | None = None,
                  mu_w: MAMeasure | None = None,
                  slack_tolerance: float = 0.0) -> InequalityReport:
    """Weighted energy inequality on the sublevel set {u < v}.

    With weights 0 <= w_j <= 1 and a constant r >= 1,

        (1/(n!)^2) ∫_{u<v} (v-u)^n dd^c w_1 ∧…∧ dd^c w_n
            + ∫_{u<v} (r - w_1) (dd^c v)^n  <=  ∫_{u<v} (r - w_1) (dd^c u)^n

    whenever u >= v near the boundary in the liminf sense. Measures default
    to the discrete operators of the fields; exact closed-form measures can
    be passed instead. Set integrals count a sphere shell sitting on the
    set's cell-resolution boundary fully (closed-set convention), matching
    the closed-ball masses of the exact measures."""
    grid = u.grid
    n = grid.domain.dim_complex
    if r < 1.0:
        raise ValidationError(f"the constant r must be at least 1, got {r:g}")
    w_list = list(w_list) if isinstance(w_list, (list, tuple)) else [w_list]
    if len(w_list) != n:
        raise ValidationError(f"need {n} weight fields, got {len(w_list)}")
    for w in w_list:
        lo, hi = float(w.interior_values().min()), float(w.interior_values().max())
        if lo < -1e-9 or hi > 1.0 + 1e-9:
            raise ValidationError(
                f"weight {w.name} must take values in [0,1], spans [{lo:.3g},{hi:.3g}]")
    _require_liminf_nonneg(u, v)

    S = _strict_sublevel(u, v)
    mu_u = _measure_or(lambda: ma_smooth(u), mu_u, grid)
    mu_v = _measure_or(lambda: ma_smooth(v), mu_v, grid)
    mu_w = _measure_or(
        lambda: ma_smooth(w_list[0]) if n == 1 else mixed_ma(w_list[0], w_list[1]),
        mu_w, grid)

    fact2 = float(math.factorial(n)) ** 2
    gap_pow = np.clip(v.values - u.values, 0.0, None) ** n
    first_weight = r - w_list[0].values
    t1 = mu_w.restrict(S, closure=True).pair(1.0, weight=gap_pow) / fact2
    t2 = mu_v.restrict(S, closure=True).pair(1.0, weight=first_weight)
    rhs = mu_u.restrict(S, closure=True).pair(1.0, weight=first_weight)
    return InequalityReport(
        label=f"lemma1(r={r:g})",
        lhs=t1 + t2,
        rhs=rhs,
        slack_tolerance=float(slack_tolerance),
        term_breakdown={"difference_energy": t1, "weighted_v_mass": t2,
                        "weighted_u_mass": rhs, "sublevel_cells": S.count},
    )


def verify_comparison(u: ScalarField, v: ScalarField,
                      mu_u: MAMeasure | None = None,
                      mu_v: MAMeasure | None = None,
                      slack_tolerance: float = 0.0) -> InequalityReport:
    """Comparison inequality: mass of (dd^c v)^n on {u < v} never exceeds
    the mass of (dd^c u)^n there, given u >= v near the boundary."""
    grid = u.grid
    _require_liminf_nonneg(u, v)
    S = _strict_sublevel(u, v)
    mu_u = _measure_or(lambda: ma_smooth(u), mu_u, grid)
    mu_v = _measure_or(lambda: ma_smooth(v), mu_v, grid)
    lhs = mu_v.restrict(S, closure=True).total_mass()
    rhs = mu_u.restrict(S, closure=True).total_mass()
    return InequalityReport(
        label="comparison",
        lhs=lhs,
        rhs=rhs,
        slack_tolerance=float(slack_tolerance),
        term_breakdown={"v_mass_on_sublevel": lhs, "u_mass_on_sublevel": rhs,
                        "sublevel_cells": S.count},
    )


def lemma1_comparison_trend(u: ScalarField, v: ScalarField, w_list,
                            rs=(1.0, 10.0, 100.0), **kwargs) -> list:
    """|lemma1.lhs / r - comparison.lhs| for growing r: dividing the energy
    inequality by r and letting r grow recovers the comparison inequality,
    so the sequence should decrease toward zero."""
    comp = verify_comparison(u, v, mu_u=kwargs.get("mu_u"), mu_v=kwargs.get("mu_v"))
    out = []
    for r in rs:
        rep = verify_lemma1(u, v, w_list, r, **kwargs)
        out.append(abs(rep.lhs / r - comp.lhs))
    return out


def verify_lemma2(u: ScalarField, v: ScalarField, delta: float, k: float,
                  mu_u: MAMeasure | None = None,
                  mu_v: MAMeasure | None = None,
                  slack_tolerance: float = 0.0,
                  tol_stop: float | None = None) -> InequalityReport:
    """Capacity of the deviation set against the measure distance.

    For 0 < k < 1 and delta > 0, when |u - v| vanishes at the boundary,

        C_n{|u-v| >= delta}
            <= (n!)^2 / ((1-k)^n delta^n) * ||mu_u - mu_v||_{|u-v| > k delta}.

    The left side uses the closed comparator (>=); the right side restricts
    both measures to the strictly larger open region before taking the
    total-variation distance."""
    grid = u.grid
    n = grid.domain.dim_complex
    if not 0.0 < k < 1.0:
        raise ValidationError(f"the splitting constant k must lie in (0,1), got {k:g}")
    if delta <= 0:
        raise ValidationError(f"deviation threshold must be positive, got {delta:g}")
    _require_limsup_zero(u, v)

    kwargs = {}
    if tol_stop is not None:
        kwargs["tol_stop"] = tol_stop
    lhs = deviation_capacity(u, v, delta, full_interior_region(grid),
                             order="full_n", strict=False, **kwargs)
    dev = np.abs(u.values - v.values)
    T = region_from_member(grid, dev > k * delta,
                           label=f"{{|{u.name}-{v.name}|>{k * delta:g}}}")
    mu_u = _measure_or(lambda: ma_smooth(u), mu_u, grid)
    mu_v = _measure_or(lambda: ma_smooth(v), mu_v, grid)
    tv = tv_distance(mu_u.restrict(T), mu_v.restrict(T))
    factor = float(math.factorial(n)) ** 2 / ((1.0 - k) ** n * delta ** n)
    return InequalityReport(
        label=f"lemma2(delta={delta:g},k={k:g})",
        lhs=lhs,
        rhs=factor * tv,
        slack_tolerance=float(slack_tolerance),
        term_breakdown={"deviation_capacity": lhs, "restricted_tv": tv,
                        "prefactor": factor, "deviation_cells": T.count},
    )


# --- randomized inequality battery -----------------------------------------

@dataclass
class BatteryReport:
    label: str
    draws: int
    resolutions: tuple
    failures: list
    worst_margin: dict

    @property
    def passed(self) -> bool:
        return not self.failures

    def descriptor(self) -> dict:
        return {
            "schema": SCHEMA_BATTERY,
            "label": self.label,
            "draws": self.draws,
            "resolutions": list(self.resolutions),
            "failures": list(self.failures),
            "worst_margin": dict(self.worst_margin),
            "pass": self.passed,
        }


def _battery_case(rng, index: int) -> dict:
    return {
        "index": index,
        "p_u": float(rng.uniform(0.1, 2.0)),
        "q_u": float(rng.uniform(0.0, 1.2)),
        "t_u": float(rng.uniform(0.3, 1.5)),
        "p_v": float(rng.uniform(0.1, 2.0)),
        "q_v": float(rng.uniform(0.0, 1.2)),
        "t_v": float(rng.uniform(0.3, 1.5)),
        "w0": float(rng.uniform(0.0, 0.5)),
        "w1": float(rng.uniform(0.0, 0.5)),
        "r": (1.0, 2.0, 10.0)[index % 3],
        "delta": (0.25, 0.5)[index % 2],
        "k": (0.25, 0.5, 0.75)[(index // 2) % 3],
    }


def _battery_fields(case: dict, grid: Grid):
    """Admissible-by-construction draw on the unit disc: combinations of
    the smooth profile |z|^2 - 1 and the kinked profile max(ln|z|, -t),
    both vanishing at the boundary, plus a weight w0 + w1 |z|^2 in [0,1]."""
    r2 = grid.radius2()
    base = r2 - 1.0
    lnr = 0.5 * np.log(np.maximum(r2, 1e-300))

    def mk(p, q, t, name):
        vals = p * base + q * np.maximum(lnr, -t)
        return ScalarField(grid, vals, None, name)

    u = mk(case["p_u"], case["q_u"], case["t_u"], "u")
    v = mk(case["p_v"], case["q_v"], case["t_v"], "v")
    w = ScalarField(grid, case["w0"] + case["w1"] * r2, None, "w")
    return u, v, w


def inequality_battery(draws: int = 200, resolutions=(64, 128),
                       checks=("lemma1", "comparison", "lemma2"),
                       seed: int = 2026, tol_stop: float = 1e-6) -> BatteryReport:
    """Randomized admissible battery for the three inequality checks.

    Every draw is evaluated at the two resolutions; the refinement gap of a
    check is the larger of its per-side changes under refinement, and the
    fine report must pass with slack 3 * gap (plus a float-epsilon guard).
    Failures carry the full draw descriptor so a case can be replayed."""
    rng = np.random.default_rng(seed)
    grids = [make_grid(make_domain("ball", 1, 1.0), res) for res in resolutions]
    failures = []
    worst = {"margin": float("inf")}
    for i in range(draws):
        case = _battery_case(rng, i)
        reports = {}
        for gr in grids:
            u, v, w = _battery_fields(case, gr)
            per = {}
            if "lemma1" in checks:
                per["lemma1"] = verify_lemma1(u, v, [w], case["r"])
            if "comparison" in checks:
                per["comparison"] = verify_comparison(u, v)
            if "lemma2" in checks:
                per["lemma2"] = verify_lemma2(u, v, case["delta"], case["k"],
                                              tol_stop=tol_stop)
            reports[gr.resolution] = per
        coarse, fine = (reports[r] for r in sorted(reports))
        for name, rep in fine.items():
            gap = max(abs(rep.lhs - coarse[name].lhs),
                      abs(rep.rhs - coarse[name].rhs))
            scale = max(1.0, abs(rep.lhs), abs(rep.rhs))
            final = rep.with_slack(3.0 * gap + 1e-12 * scale)
            entry = {"draw": i, "check": name, "case": case,
                     "margin": final.margin, "slack": final.slack_tolerance}
            if not final.passed:
                failures.append(entry | {"report": final.descriptor()})
            slackful = final.margin + final.slack_tolerance
            if slackful < worst["margin"]:
                worst = {"margin": slackful, "draw": i, "check": name}
    return BatteryReport(
        label=f"battery({'+'.join(checks)})",
        draws=draws,
        resolutions=tuple(resolutions),
        failures=failures,
        worst_margin=worst,
    )


# --- convergence reports ----------------------------------------------------

def goes_to_zero(seq, tol: float) -> bool:
    """Ladder verdict for a diagnostic sequence: the last entry is below
    the tolerance and the last three entries are non-increasing (up to a
    jitter of a tenth of the tolerance)."""
    s = [float(x) for x in seq]
    if not s:
        return True
    if not s[-1] < tol:
        return False
    jitter = LADDER_JITTER * tol
    tail = s[-3:]
    return all(tail[i + 1] <= tail[i] + jitter for i in range(len(tail) - 1))


def _lane_verdicts(lane: dict, tol: float) -> dict:
    cap = all(goes_to_zero(seq, tol)
              for seq in lane.get("capacity_deviations", {}).values())
    ladders = list(lane.get("gaps", {}).values())
    ladders += list(lane.get("extra", {}).values())
    cur = all(goes_to_zero(seq, tol) for seq in ladders)
    return {"verdict_capacity": cap, "verdict_currents": cur,
            "consistent": cap == cur}


@dataclass
class ConvergenceReport:
    """Per-index diagnostics of a convergence experiment plus ladder
    verdicts; the verdicts are pure functions of the stored diagnostics
    (``recompute_verdicts`` re-derives them)."""

    label: str
    indices: list
    deltas: tuple
    tolerance: float
    capacity_deviations: dict
    pairing_gaps: dict
    tv_distances: dict
    converges_in_capacity: bool
    converges_weakly: bool
    decided_at: dict
    consistent: bool
    rule: str = "implies"
    lanes: dict | None = None
    conditions: dict | None = None
    notes: list = field(default_factory=list)

    def recompute_verdicts(self, tolerance: float | None = None) -> dict:
        tol = self.tolerance if tolerance is None else float(tolerance)
        cap = all(goes_to_zero(seq, tol)
                  for seq in self.capacity_deviations.values())
        fams = self.pairing_gaps if self.pairing_gaps else self.tv_distances
        weak = all(goes_to_zero(seq, tol) for seq in fams.values())
        out = {"converges_in_capacity": cap, "converges_weakly": weak}
        if self.rule == "iff_lanes" and self.lanes is not None:
            lanes = {}
            ok = True
            for name, lane in self.lanes.items():
                if lane.get("skipped"):
                    lanes[name] = {"skipped": True}
                    continue
                verd = _lane_verdicts(lane, tol)
                lanes[name] = verd
                ok = ok and verd["consistent"]
            out["lanes"] = lanes
            out["consistent"] = ok
        elif self.rule == "conditions_imply":
            hyp = all(self.conditions.values()) if self.conditions else False
            out["consistent"] = (not hyp) or cap
        else:
            out["consistent"] = (not cap) or weak
        return out

    def with_tolerance(self, tolerance: float) -> "ConvergenceReport":
        """The same diagnostics re-judged at a different tolerance."""
        verd = self.recompute_verdicts(tolerance)
        lanes = self.lanes
        if self.rule == "iff_lanes" and lanes is not None:
            lanes = {name: (dict(lane) | verd["lanes"][name])
                     for name, lane in lanes.items()}
        return ConvergenceReport(
            self.label, list(self.indices), tuple(self.deltas), float(tolerance),
            dict(self.capacity_deviations), dict(self.pairing_gaps),
            dict(self.tv_distances), verd["converges_in_capacity"],
            verd["converges_weakly"],
            {"delta": min(self.deltas) if self.deltas else None,
             "tolerance": float(tolerance)},
            verd["consistent"], self.rule, lanes,
            None if self.conditions is None else dict(self.conditions),
            list(self.notes))

    def descriptor(self) -> dict:
        return {
            "schema": SCHEMA_CONVERGENCE,
            "label": self.label,
            "indices": list(self.indices),
            "deltas": list(self.deltas),
            "tolerance": self.tolerance,
            "capacity_deviations": {str(d): list(v) for d, v in
                                    self.capacity_deviations.items()},
            "pairing_gaps": {k: list(v) for k, v in self.pairing_gaps.items()},
            "tv_distances": {k: list(v) for k, v in self.tv_distances.items()},
            "converges_in_capacity": self.converges_in_capacity,
            "converges_weakly": self.converges_weakly,
            "decided_at": dict(self.decided_at),
            "consistent": self.consistent,
            "rule": self.rule,
            "lanes": self.lanes,
            "conditions": self.conditions,
            "notes": list(self.notes),
        }

    def ladder_rows(self) -> list:
        """Flat (series, index, value) rows of every stored ladder."""
        rows = []
        for d, seq in self.capacity_deviations.items():
            for j, val in zip(self.indices, seq):
                rows.append((f"capacity[delta={d:g}]", j, float(val)))
        for name, seq in self.pairing_gaps.items():
            for j, val in zip(self.indices, seq):
                rows.append((f"gap[{name}]", j, float(val)))
        for name, seq in self.tv_distances.items():
            for j, val in zip(self.indices, seq):
                rows.append((f"tv[{name}]", j, float(val)))
        return rows


def ladder_tolerance(fine: ConvergenceReport, coarse: ConvergenceReport,
                     floor: float = TOL_FLOOR) -> float:
    """Ladder tolerance from the refinement gap of two runs of the same
    experiment: ten times the largest last-entry change across all shared
    diagnostic ladders, floored at the resolution-independent minimum."""
    gap = 0.0
    for attr in ("capacity_deviations", "pairing_gaps", "tv_distances"):
        a, b = getattr(fine, attr), getattr(coarse, attr)
        for key in set(a) & set(b):
            if a[key] and b[key]:
                gap = max(gap, abs(float(a[key][-1]) - float(b[key][-1])))
    return max(10.0 * gap, floor)


def _check_bounded_sequence(u_seq, u: ScalarField):
    for f in list(u_seq) + [u]:
        if f.pole is not None and f.pole_count() > 0:
            raise ValidationError(f"field {f.name} is unbounded")
        if f.grid is not u.grid and not u.grid.compatible(f.grid):
            raise ValidationError("sequence fields live on different grids")


def _capacity_ladder(u_seq, u, E, deltas, order, tol_stop):
    kwargs = {} if tol_stop is None else {"tol_stop": tol_stop}
    return {d: [deviation_capacity(uj, u, d, E, order=order, **kwargs)
                for uj in u_seq] for d in deltas}


def theorem1_experiment(u_seq, u: ScalarField, E: RegionMask,
                        order: str = "inner_n_minus_1",
                        deltas=DELTA_LADDER, tolerance: float = TOL_FLOOR,
                        indices=None, bank=None,
                        mu_seq=None, mu: MAMeasure | None = None,
                        tol_stop: float | None = None) -> ConvergenceReport:
    """Capacity convergence against convergence of the operator measures.

    Deviation capacities of u_j vs u are tabulated on a delta ladder over
    E at the requested order; the measures are paired against a bank of
    test functions — plainly for the reduced order, weighted by the
    functions themselves for the full order (u_j (dd^c u_j)^n vs
    u (dd^c u)^n). The report asserts the one-way implication: capacity
    convergence forces the pairing gaps down."""
    u_seq = list(u_seq)
    _check_bounded_sequence(u_seq, u)
    if not E.compactly_contained:
        raise ValidationError("the probe region must be compactly contained")
    grid = u.grid
    dim = grid.domain.dim_complex
    indices = list(indices) if indices is not None else list(range(1, len(u_seq) + 1))
    bank = list(bank) if bank is not None else test_function_bank(dim)
    cap_dev = _capacity_ladder(u_seq, u, E, deltas, order, tol_stop)

    mu = _measure_or(lambda: ma_smooth(u), mu, grid)
    if mu_seq is None:
        mu_seq = [ma_smooth(uj) for uj in u_seq]
    else:
        mu_seq = list(mu_seq)
        if len(mu_seq) != len(u_seq):
            raise ValidationError("measure overrides must match the sequence")
        for m in mu_seq:
            _measure_or(None, m, grid)
    weighted = order == "full_n"
    gaps = {}
    for phi in bank:
        target = mu.pair(phi, weight=u.values if weighted else None)
        gaps[phi.text] = [
            abs(mj.pair(phi, weight=uj.values if weighted else None) - target)
            for mj, uj in zip(mu_seq, u_seq)]

    tol = float(tolerance)
    cap_ok = all(goes_to_zero(seq, tol) for seq in cap_dev.values())
    weak_ok = all(goes_to_zero(seq, tol) for seq in gaps.values())
    notes = []
    if not cap_ok and weak_ok:
        notes.append("capacity hypothesis fails while the pairings converge: "
                     "the implication is vacuous, not violated")
    return ConvergenceReport(
        label=f"theorem1({order})",
        indices=indices,
        deltas=tuple(deltas),
        tolerance=tol,
        capacity_deviations=cap_dev,
        pairing_gaps=gaps,
        tv_distances={},
        converges_in_capacity=cap_ok,
        converges_weakly=weak_ok,
        decided_at={"delta": min(deltas), "tolerance": tol},
        consistent=(not cap_ok) or weak_ok,
        rule="implies",
        notes=notes,
    )


def theorem2_experiment(u_seq, u: ScalarField, E: RegionMask,
                        deltas=DELTA_LADDER, tolerance: float = TOL_FLOOR,
                        indices=None, bank=None,
                        tol_stop: float | None = None) -> ConvergenceReport:
    """Both directions of the capacity/current equivalences for sequences
    that agree with the limit outside a compactly contained region.

    Four lanes, each pairing a capacity order with a current family:
      i    full order  <->  u_j mu_j, u mu_j and u_j mu against u mu
      ii   reduced order  <->  mu_j and the mixed products against mu
      iii  (two complex variables) reduced order  <->  mu_j and L^1
      iv   reduced order  <->  mu_j alone, under a one-sided ordering
    Every lane asserts agreement of its two verdicts; a lane whose extra
    hypothesis fails is skipped with a note rather than judged."""
    u_seq = list(u_seq)
    _check_bounded_sequence(u_seq, u)
    if not E.compactly_contained:
        raise ValidationError("the equality region must be compactly contained")
    grid = u.grid
    dim = grid.domain.dim_complex
    indices = list(indices) if indices is not None else list(range(1, len(u_seq) + 1))
    bank = list(bank) if bank is not None else test_function_bank(dim)

    off = (grid.mask == 1) & ~E.member
    for j, uj in zip(indices, u_seq):
        bad = int((np.abs(uj.values - u.values)[off] > 0).sum())
        if bad:
            raise HypothesisError(
                f"sequence member {j} differs from the limit on {bad} cells "
                "outside the designated region; equal boundary values alone "
                "do not carry the equivalences")

    cap_full = _capacity_ladder(u_seq, u, E, deltas, "full_n", tol_stop)
    cap_inner = _capacity_ladder(u_seq, u, E, deltas, "inner_n_minus_1", tol_stop)
    mu = ma_smooth(u)
    mu_seq = [ma_smooth(uj) for uj in u_seq]

    def gap_family(pair_j, target_of):
        fam = {}
        for phi in bank:
            t = target_of(phi)
            fam[phi.text] = [abs(pair_j(j, phi) - t) for j in range(len(u_seq))]
        return fam

    lanes = {}
    lanes["i"] = {
        "capacity_deviations": cap_full,
        "gaps": {
            f"u_j*mu_j[{k}]": v for k, v in gap_family(
                lambda j, phi: mu_seq[j].pair(phi, weight=u_seq[j].values),
                lambda phi: mu.pair(phi, weight=u.values)).items()}
        | {
            f"u*mu_j[{k}]": v for k, v in gap_family(
                lambda j, phi: mu_seq[j].pair(phi, weight=u.values),
                lambda phi: mu.pair(phi, weight=u.values)).items()}
        | {
            f"u_j*mu[{k}]": v for k, v in gap_family(
                lambda j, phi: mu.pair(phi, weight=u_seq[j].values),
                lambda phi: mu.pair(phi, weight=u.values)).items()},
    }
    lane_ii_gaps = {f"mu_j[{k}]": v for k, v in gap_family(
        lambda j, phi: mu_seq[j].pair(phi), lambda phi: mu.pair(phi)).items()}
    ii_notes = []
    if dim == 2:
        mixed_seq = [mixed_ma(uj, u) for uj in u_seq]
        lane_ii_gaps |= {f"mixed(u_j,u)[{k}]": v for k, v in gap_family(
            lambda j, phi: mixed_seq[j].pair(phi), lambda phi: mu.pair(phi)).items()}
        ii_notes.append("the two mixed product orders coincide for the "
                        "discrete bilinear operator and are reported once")
    else:
        ii_notes.append("mixed products degenerate in one complex variable: "
                        "only the measures themselves are compared")
    lanes["ii"] = {"capacity_deviations": cap_inner, "gaps": lane_ii_gaps,
                   "notes": ii_notes}

    if dim == 2:
        vol = grid.cell_volume()
        interior = grid.mask == 1
        l1 = [float(np.abs(uj.values - u.values)[interior].sum()) * vol
              for uj in u_seq]
        lanes["iii"] = {
            "capacity_deviations": cap_inner,
            "gaps": {f"mu_j[{k}]": v for k, v in gap_family(
                lambda j, phi: mu_seq[j].pair(phi),
                lambda phi: mu.pair(phi)).items()},
            "extra": {"L1(u_j-u)": l1},
        }
    else:
        lanes["iii"] = {"skipped": True,
                        "note": "needs two complex variables"}

    interior = grid.mask == 1
    above = all(bool((uj.values[interior] >= u.values[interior] - 1e-12).all())
                for uj in u_seq)
    below = all(bool((uj.values[interior] <= u.values[interior] + 1e-12).all())
                for uj in u_seq)
    if above or below:
        lanes["iv"] = {
            "capacity_deviations": cap_inner,
            "gaps": {f"mu_j[{k}]": v for k, v in gap_family(
                lambda j, phi: mu_seq[j].pair(phi),
                lambda phi: mu.pair(phi)).items()},
            "side": "above" if above else "below",
        }
    else:
        lanes["iv"] = {"skipped": True,
                       "note": "one-sided ordering not satisfied"}

    tol = float(tolerance)
    consistent = True
    for name, lane in lanes.items():
        if lane.get("skipped"):
            continue
        lane.update(_lane_verdicts(lane, tol))
        consistent = consistent and lane["consistent"]

    cap_ok = all(goes_to_zero(seq, tol) for seq in cap_full.values())
    weak_ok = lanes["i"].get("verdict_currents", True)
    l1_flat = {}
    if not lanes["iii"].get("skipped"):
        l1_flat = {"L1(u_j-u)": lanes["iii"]["extra"]["L1(u_j-u)"]}
    return ConvergenceReport(
        label="theorem2",
        indices=indices,
        deltas=tuple(deltas),
        tolerance=tol,
        capacity_deviations=cap_full,
        pairing_gaps=dict(lanes["i"]["gaps"]),
        tv_distances=l1_flat,
        converges_in_capacity=cap_ok,
        converges_weakly=weak_ok,
        decided_at={"delta": min(deltas), "tolerance": tol},
        consistent=consistent,
        rule="iff_lanes",
        lanes=lanes,
        notes=[lane["note"] for lane in lanes.values() if lane.get("note")],
    )


def theorem3_experiment(u_seq, u: ScalarField, mode: str = "full_n",
                        deltas=DELTA_LADDER, tolerance: float = TOL_FLOOR,
                        indices=None, exhaustion_margins=(0.3, 0.15, 0.05),
                        tol_stop: float | None = None) -> ConvergenceReport:
    """Global capacity convergence from boundary-uniform closeness plus
    local measure convergence.

    Condition (a): |u_j - u| vanishes at the boundary uniformly in j —
    probed by the supremum envelope over j on a dyadic ladder of boundary
    bands, which must decay geometrically inward. Condition (b): the
    total-variation distance of the measures vanishes on an exhaustion by
    compactly contained subsets. When both hold the deviation capacities on
    the delta ladder must fall below tolerance. The reduced-order mode runs
    the same dial with the inner capacity; the statement it probes mirrors
    the full-order one and is flagged as extrapolated."""
    u_seq = list(u_seq)
    _check_bounded_sequence(u_seq, u)
    if mode not in ("full_n", "inner_n_minus_1"):
        raise ValidationError(f"unknown capacity mode {mode!r}")
    grid = u.grid
    indices = list(indices) if indices is not None else list(range(1, len(u_seq) + 1))

    envelope = np.abs(u_seq[0].values - u.values)
    for uj in u_seq[1:]:
        envelope = np.maximum(envelope, np.abs(uj.values - u.values))
    env = ScalarField(grid, envelope, None, "sup_j|u_j-u|")
    cpr = grid.cells_per_radius
    widths = [w for w in (16, 8, 4, 2, 1) if w <= max(4, cpr // 3)]
    rows = env.boundary_band_stats(tuple(sorted(widths)))
    band_sups = [max(abs(r["min"]), abs(r["max"])) if r["count"] else 0.0
                 for r in rows]
    uniform = True
    for smaller, larger in zip(band_sups, band_sups[1:]):
        if larger < 1e-12:
            continue
        if smaller > 0.75 * larger + 1e-12:
            uniform = False

    mu = ma_smooth(u)
    mu_seq = [ma_smooth(uj) for uj in u_seq]
    full = full_interior_region(grid)
    tvs = {}
    for frac in exhaustion_margins:
        margin = max(1, int(round(frac * cpr)))
        Em = full.erode(margin)
        Em.label = f"margin={margin}h"
        tvs[Em.label] = [tv_distance(mj.restrict(Em), mu.restrict(Em))
                         for mj in mu_seq]

    probe = full.erode(1)
    cap_dev = _capacity_ladder(u_seq, u, probe, deltas, mode, tol_stop)

    tol = float(tolerance)
    cap_ok = all(goes_to_zero(seq, tol) for seq in cap_dev.values())
    tv_ok = all(goes_to_zero(seq, tol) for seq in tvs.values())
    conditions = {"boundary_uniform": uniform, "tv_on_exhaustion": tv_ok}
    notes = []
    if mode == "inner_n_minus_1":
        notes.append("reduced-order mode extrapolates the full-order "
                     "statement to the inner capacity")
    if not (uniform and tv_ok):
        notes.append("a hypothesis fails: the conclusion is not implied")
    return ConvergenceReport(
        label=f"theorem3({mode})",
        indices=indices,
        deltas=tuple(deltas),
        tolerance=tol,
        capacity_deviations=cap_dev,
        pairing_gaps={},
        tv_distances=tvs,
        converges_in_capacity=cap_ok,
        converges_weakly=tv_ok,
        decided_at={"delta": min(deltas), "tolerance": tol},
        consistent=(not (uniform and tv_ok)) or cap_ok,
        rule="conditions_imply",
        conditions=conditions,
        notes=notes,
    )


# --- the boundary-shell counterexample --------------------------------------

@dataclass
class CounterexampleReport:
    """Diagnostics of the sequence max(j ln|z|, -1) on the unit disc: every
    member vanishes on the boundary and the measures are uniform shells
    2*pi*j on |z| = e^{-1/j}, yet the sequence converges to zero nowhere
    inside — deviation capacities grow linearly in j while pairings against
    compactly supported functions die once the shells pass their support."""

    j_list: list
    delta: float
    resolution: int
    capacities: list
    capacity_oracle: list
    pairing_gaps: dict
    boundary_trace: list
    growing: bool
    notes: list

    def descriptor(self) -> dict:
        return {
            "schema": SCHEMA_COUNTEREXAMPLE,
            "j_list": list(self.j_list),
            "delta": self.delta,
            "resolution": self.resolution,
            "capacities": list(self.capacities),
            "capacity_oracle": list(self.capacity_oracle),
            "pairing_gaps": {k: list(v) for k, v in self.pairing_gaps.items()},
            "boundary_trace": list(self.boundary_trace),
            "growing": self.growing,
            "notes": list(self.notes),
        }


def boundary_counterexample(j_list, delta: float, resolution: int = 1024,
                            bank=None, tol_stop: float = 1e-6,
                            grid: Grid | None = None) -> CounterexampleReport:
    """Measure the boundary-shell sequence against the zero limit.

    Emits, per j: the full-order deviation capacity with its closed form
    2*pi*j/delta (empty sets once delta exceeds the range bound 1), the
    pairing gap of the exact shell measure against every bank function
    (exactly zero once e^{-1/j} clears the support), and the extrapolated
    boundary trace of u_j, which stays zero throughout — boundary-value
    equality does not substitute for interior equality off a compact set."""
    j_list = list(j_list)
    if not j_list:
        raise ValidationError("need at least one sequence index")
    if delta <= 0:
        raise ValidationError(f"deviation threshold must be positive, got {delta:g}")
    if grid is None:
        grid = make_grid(make_domain("ball", 1, 1.0), resolution)
    dim = grid.domain.dim_complex
    bank = list(bank) if bank is not None else test_function_bank(dim)
    zero = zero_field(grid)
    E = full_interior_region(grid)
    tau = 2.0 * np.pi

    capacities, oracle, traces = [], [], []
    gaps = {phi.text: [] for phi in bank}
    for j in j_list:
        expr = f"max({float(j):.17g} * log(abs(z1)), -1)"
        if dim == 2:
            expr = f"max({float(j):.17g} * log(max(abs(z1), abs(z2))), -1)"
        uj = sample(expr, grid, name=f"u_{j}")
        capacities.append(deviation_capacity(uj, zero, delta, E,
                                             order="full_n", tol_stop=tol_stop))
        oracle.append((tau * j / delta) ** dim if delta < 1.0 else 0.0)
        mu_j = ma_model(expr, grid)
        for phi in bank:
            gaps[phi.text].append(abs(mu_j.pair(phi)))
        b0, tol = band_extrapolation(uj.abs(), "abs")
        traces.append({"j": j, "extrapolated": b0, "tolerance": tol,
                       "vanishes": bool(abs(b0) <= tol)})

    growing = all(b > a for a, b in zip(capacities, capacities[1:]))
    notes = ["every u_j carries zero boundary trace while its measure is a "
             "shell of mass (2*pi*j)^n marching toward the boundary"]
    if delta >= 1.0:
        notes.append("delta exceeds the range bound: deviation sets are "
                     "empty and every capacity is zero")
    return CounterexampleReport(
        j_list=j_list,
        delta=float(delta),
        resolution=grid.resolution,
        capacities=capacities,
        capacity_oracle=oracle,
        pairing_gaps=gaps,
        boundary_trace=traces,
        growing=growing,
        notes=notes,
    )
