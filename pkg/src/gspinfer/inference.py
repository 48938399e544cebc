"""Rationalizable (value, regret) sets from observed bidding histories.

Given a listing's history of bids and sampled auctions, the deviation curve
records, for every counterfactual bid ``b'`` on a grid, the average change in
click probability ``dP(b')`` and in payment ``dC(b')`` had the bidder played
``b'`` in every period (opponents and auction parameters held fixed).

A pair ``(v, eps)`` is rationalizable when the history has at most ``eps``
average regret for a bidder with value-per-click ``v``:

    for every grid bid b':   v * dP(b') <= dC(b') + eps

so the rationalizable set is the intersection of half-planes, one per grid
bid. Everything else here is exact piecewise-linear geometry on that family:
the value interval at a given ``eps``, the lower boundary ``eps(v)``, the
smallest rationalizable additive regret ``eps0``, and the smallest
*multiplicative* regret ``delta*`` (regret measured relative to the deviation
utility), located by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .auction import DeviationSweep

# Feasibility comparisons allow this much constraint slack: all quantities are
# averages of penny-grid money values, so 1e-9 is far below one data ulp.
FEASIBILITY_TOL = 1e-9

#: Default bisection precision for the multiplicative-regret search.
DEFAULT_PRECISION = 1e-6


class InferenceError(ValueError):
    """Raised when a history or curve cannot support the requested inference."""


@dataclass(frozen=True)
class DeviationCurve:
    """Counterfactual deviation landscape for one listing.

    ``delta_p[k]`` / ``delta_c[k]`` are the average changes in click
    probability / payment from switching every period's bid to ``grid[k]``.
    ``baseline_p`` / ``baseline_c`` are the averages realized by the actual
    bid sequence.
    """

    grid: tuple[float, ...]
    delta_p: tuple[float, ...]
    delta_c: tuple[float, ...]
    baseline_p: float
    baseline_c: float

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(b) for b in self.grid))
        object.__setattr__(self, "delta_p", tuple(float(x) for x in self.delta_p))
        object.__setattr__(self, "delta_c", tuple(float(x) for x in self.delta_c))
        if not (len(self.grid) == len(self.delta_p) == len(self.delta_c)):
            raise InferenceError("grid, delta_p and delta_c must have equal length")
        if not self.grid:
            raise InferenceError("deviation curve must have at least one grid point")
        for a, b in zip(self.grid, self.grid[1:]):
            if not b > a:
                raise InferenceError("grid must be strictly increasing")
        for x in (*self.delta_p, *self.delta_c, self.baseline_p, self.baseline_c):
            if not math.isfinite(x):
                raise InferenceError("curve values must be finite")

    def rows(self) -> list[tuple[float, float, float]]:
        return list(zip(self.grid, self.delta_p, self.delta_c))


@dataclass(frozen=True)
class RationalizablePoint:
    """A candidate (value-per-click, additive regret) pair."""

    value: float
    epsilon: float


@dataclass(frozen=True)
class AssumptionReport:
    """Diagnostics for the monotonicity and no-free-clicks conditions.

    ``violation_sites`` holds the grid index pairs whose comparison failed:
    ``(i, i+1)`` for a monotonicity violation between adjacent rows, and the
    endpoints of the later segment for an incremental-cost-per-click
    violation between adjacent segments.
    """

    delta_p_monotone: bool
    delta_c_monotone: bool
    icc_increasing: bool
    violation_sites: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class PointPrediction:
    """Smallest multiplicative regret rationalizing the data, with its value."""

    delta_star: float
    v_star: float
    v_interval_at_delta_star: tuple[float, float]
    epsilon_min: float
    iterations: int


@dataclass(frozen=True)
class RationalizableRegion:
    """The bounded rationalizable set: caps, boundary samples, diagnostics."""

    curve: DeviationCurve
    epsilon_cap: float
    value_cap: float
    epsilon_min: float
    boundary: tuple[tuple[float, float], ...]
    assumption_report: AssumptionReport

    @property
    def epsilon_at_zero(self) -> float:
        """Boundary height at v = 0 (the set's intersection with the eps axis)."""
        return boundary(self.curve, 0.0)


def build_deviation_curve(history, grid: Sequence[float]) -> DeviationCurve:
    """Replay a listing's history at every grid bid and average the changes.

    For each period the player's bid is swapped for the grid bid in every
    sampled auction (opponents fixed) and the per-period means of click
    probability and payment are taken; ``delta_*`` are the period averages of
    (counterfactual - realized). Accepts a :class:`~gspinfer.simulate.ListingHistory`
    or any object with ``listing_id`` and ``periods`` of the same shape.
    """
    periods = history.periods
    if not periods:
        raise InferenceError("history has no periods")
    grid = [float(b) for b in grid]
    n_grid = len(grid)
    sum_dp = [0.0] * n_grid
    sum_dc = [0.0] * n_grid
    sum_p0 = 0.0
    sum_c0 = 0.0
    for rec in periods:
        if not rec.auction_sample:
            raise InferenceError(f"period {rec.period_index} has an empty auction sample")
        n = len(rec.auction_sample)
        acc_p = [0.0] * n_grid
        acc_c = [0.0] * n_grid
        acc_p0 = 0.0
        acc_c0 = 0.0
        for params in rec.auction_sample:
            sweep = DeviationSweep(params, history.listing_id)
            ps, cs = sweep.evaluate_many(grid)
            for k in range(n_grid):
                acc_p[k] += ps[k]
                acc_c[k] += cs[k]
            p0, c0 = sweep.evaluate(rec.own_bid)
            acc_p0 += p0
            acc_c0 += c0
        p_base = acc_p0 / n
        c_base = acc_c0 / n
        sum_p0 += p_base
        sum_c0 += c_base
        for k in range(n_grid):
            sum_dp[k] += acc_p[k] / n - p_base
            sum_dc[k] += acc_c[k] / n - c_base
    t = len(periods)
    return DeviationCurve(
        grid=tuple(grid),
        delta_p=tuple(x / t for x in sum_dp),
        delta_c=tuple(x / t for x in sum_dc),
        baseline_p=sum_p0 / t,
        baseline_c=sum_c0 / t,
    )


def feasible(point: RationalizablePoint, curve: DeviationCurve, tol: float = FEASIBILITY_TOL) -> bool:
    """True iff ``v * dP(b') <= dC(b') + eps`` holds for every grid bid."""
    if point.value < 0:
        raise InferenceError(f"value must be non-negative (got {point.value})")
    v, eps = point.value, point.epsilon
    for dp, dc in zip(curve.delta_p, curve.delta_c):
        if v * dp > dc + eps + tol:
            return False
    return True


def value_interval(
    curve: DeviationCurve, eps: float, v_max: float = math.inf
) -> tuple[float, float] | None:
    """Values rationalizable at additive regret ``eps``, or None if empty.

    Lower bounds come from grid bids with negative ``dP``, upper bounds from
    positive ``dP``; bids with ``dP == 0`` are pure feasibility tests. The
    result is intersected with ``[0, v_max]``.
    """
    lower = 0.0
    upper = v_max
    for dp, dc in zip(curve.delta_p, curve.delta_c):
        rhs = dc + eps
        if dp > 0.0:
            bound = rhs / dp
            if bound < upper:
                upper = bound
        elif dp < 0.0:
            bound = rhs / dp
            if bound > lower:
                lower = bound
        elif rhs < -FEASIBILITY_TOL:
            return None
    if lower > upper + FEASIBILITY_TOL:
        return None
    return (lower, min(upper, v_max))


def boundary(curve: DeviationCurve, v: float) -> float:
    """Lower boundary of the rationalizable set: the largest deviation gain at ``v``."""
    if v < 0:
        raise InferenceError(f"value must be non-negative (got {v})")
    return max(v * dp - dc for dp, dc in zip(curve.delta_p, curve.delta_c))


def best_deviation(curve: DeviationCurve, v: float) -> float:
    """Grid bid maximizing ``v * dP - dC``; ties go to the smaller bid."""
    if v < 0:
        raise InferenceError(f"value must be non-negative (got {v})")
    best_bid = curve.grid[0]
    best_val = -math.inf
    for b, dp, dc in curve.rows():
        val = v * dp - dc
        if val > best_val:
            best_val = val
            best_bid = b
    return best_bid


def min_additive_regret(curve: DeviationCurve) -> tuple[float, tuple[float, float]]:
    """Smallest additive regret with a non-empty value interval, and that interval.

    The boundary ``eps(v) = max_k (v * dP_k - dC_k)`` is a convex piecewise
    linear function, so its minimum over ``v >= 0`` sits either at ``v = 0``
    or at an intersection of two of the lines; those breakpoints are
    enumerated exactly.
    """
    dps = curve.delta_p
    dcs = curve.delta_c
    if max(dps) < 0.0:
        raise InferenceError("minimum regret is unbounded below (every deviation loses clicks)")
    candidates = [0.0]
    n = len(dps)
    for i in range(n):
        for j in range(i + 1, n):
            denom = dps[i] - dps[j]
            if denom != 0.0:
                v = (dcs[i] - dcs[j]) / denom
                if v > 0.0 and math.isfinite(v):
                    candidates.append(v)
    eps0 = math.inf
    for v in candidates:
        e = boundary(curve, v)
        if e < eps0:
            eps0 = e
    interval = value_interval(curve, eps0)
    if interval is None:  # guard against a one-ulp-short minimum
        interval = value_interval(curve, eps0 + 1e-12)
    if interval is None:
        raise InferenceError("internal error: empty interval at the computed minimum regret")
    return eps0, interval


def min_additive_regret_bisect(
    curve: DeviationCurve, tol: float = 1e-9
) -> float:
    """Ladder-and-bisection cross-check for :func:`min_additive_regret`.

    Brackets the smallest feasible regret by walking down from the boundary
    value at v = 0, then bisects the feasibility predicate. Kept as an
    independent route for testing the exact breakpoint enumeration.
    """
    if max(curve.delta_p) < 0.0:
        raise InferenceError("minimum regret is unbounded below (every deviation loses clicks)")
    hi = boundary(curve, 0.0)
    span = max(1.0, abs(hi))
    lo = hi - span
    for _ in range(200):
        if value_interval(curve, lo) is None:
            break
        hi = lo
        span *= 2.0
        lo = hi - span
    else:
        raise InferenceError("failed to bracket the minimum regret")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if value_interval(curve, mid) is None:
            lo = mid
        else:
            hi = mid
    return hi


def icc(curve: DeviationCurve, i: int, j: int) -> float | None:
    """Incremental cost per click between grid rows ``i`` and ``j``.

    ``(dC_i - dC_j) / (dP_i - dP_j)``; None when the click changes are equal
    (excluded from monotonicity checks).
    """
    dp = curve.delta_p[i] - curve.delta_p[j]
    if dp == 0.0:
        return None
    return (curve.delta_c[i] - curve.delta_c[j]) / dp


def check_assumptions(curve: DeviationCurve, tol: float = 1e-12) -> AssumptionReport:
    """Flag monotonicity of dP/dC and non-decreasing adjacent-segment ICC.

    The ICC flag uses weak inequality on adjacent segments (equal slopes keep
    the piecewise-linear cost-vs-clicks curve convex); it is reported False
    outright when dP itself is non-monotone, since segment order is then
    meaningless.
    """
    sites: list[tuple[int, int]] = []
    dp_mono = True
    dc_mono = True
    n = len(curve.grid)
    for k in range(n - 1):
        if curve.delta_p[k + 1] < curve.delta_p[k] - tol:
            dp_mono = False
            sites.append((k, k + 1))
        if curve.delta_c[k + 1] < curve.delta_c[k] - tol:
            dc_mono = False
            sites.append((k, k + 1))
    icc_inc = True
    prev: float | None = None
    last = 0
    for k in range(1, n):
        ratio = icc(curve, k, last)
        if ratio is None:
            continue
        if prev is not None and ratio < prev - tol:
            icc_inc = False
            sites.append((last, k))
        prev = ratio
        last = k
    if not dp_mono:
        icc_inc = False
    return AssumptionReport(dp_mono, dc_mono, icc_inc, tuple(sites))


def feasible_values_mult(
    curve: DeviationCurve, delta: float, v_max: float = math.inf
) -> tuple[float, float] | None:
    """Values rationalizable at multiplicative regret ``delta``.

    The constraint ``v*dP(b') <= dC(b') + delta/(1-delta) * (v*P0 - C0)`` is
    rearranged, after multiplying by ``1 - delta > 0``, into

        v * [(1-delta)*dP(b') - delta*P0] <= (1-delta)*dC(b') - delta*C0

    and sign-split exactly like the additive interval: positive coefficients
    give upper bounds, negative ones lower bounds, zero coefficients are pure
    feasibility tests. Intersected with ``[0, v_max]``.
    """
    if not 0.0 <= delta < 1.0:
        raise InferenceError(f"delta must lie in [0, 1) (got {delta})")
    one_minus = 1.0 - delta
    p0 = curve.baseline_p
    c0 = curve.baseline_c
    lower = 0.0
    upper = v_max
    for dp, dc in zip(curve.delta_p, curve.delta_c):
        a = one_minus * dp - delta * p0
        rhs = one_minus * dc - delta * c0
        if a > 0.0:
            bound = rhs / a
            if bound < upper:
                upper = bound
        elif a < 0.0:
            bound = rhs / a
            if bound > lower:
                lower = bound
        elif rhs < -FEASIBILITY_TOL:
            return None
    if lower > upper + FEASIBILITY_TOL:
        return None
    return (lower, min(upper, v_max))


def min_mult_regret(
    curve: DeviationCurve,
    precision: float = DEFAULT_PRECISION,
    v_max: float = math.inf,
) -> PointPrediction:
    """Smallest multiplicative regret rationalizing the curve, by bisection.

    Maintains ``(lo, hi)`` with the value set empty at ``lo`` and non-empty at
    ``hi``; stops when ``hi - lo < precision`` or the value interval at ``hi``
    is narrower than ``precision``. The value prediction is the midpoint of
    the interval at the accepted regret level.
    """
    if precision <= 0:
        raise InferenceError(f"precision must be positive (got {precision})")
    eps0, _ = min_additive_regret(curve)
    interval = feasible_values_mult(curve, 0.0, v_max)
    iterations = 0
    if interval is None:
        hi = 1.0 - precision
        interval = feasible_values_mult(curve, hi, v_max)
        if interval is None:
            raise InferenceError("not rationalizable under value cap")
        lo = 0.0
        while hi - lo >= precision and interval[1] - interval[0] >= precision:
            mid = 0.5 * (lo + hi)
            trial = feasible_values_mult(curve, mid, v_max)
            iterations += 1
            if trial is None:
                lo = mid
            else:
                hi = mid
                interval = trial
        delta_star = hi
    else:
        delta_star = 0.0
    if not math.isfinite(interval[1]):
        raise InferenceError("value interval is unbounded; pass a finite value cap")
    v_star = 0.5 * (interval[0] + interval[1])
    return PointPrediction(
        delta_star=delta_star,
        v_star=v_star,
        v_interval_at_delta_star=interval,
        epsilon_min=eps0,
        iterations=iterations,
    )


def default_value_cap(curve: DeviationCurve, eps_cap: float) -> float:
    """Value cap from the steepest half-plane crossed with the regret cap.

    Intersects ``v * max(dP) - eps = max(dC)`` with ``eps = eps_cap``. Needs
    some deviation that gains clicks; otherwise the caller must supply a cap.
    """
    sup_dp = max(curve.delta_p)
    if sup_dp <= 0.0:
        raise InferenceError(
            "no deviation gains clicks; supply an explicit value cap"
        )
    return (eps_cap + max(curve.delta_c)) / sup_dp


def build_region(
    curve: DeviationCurve,
    eps_cap: float,
    v_max: float | None = None,
    boundary_samples: int = 201,
) -> RationalizableRegion:
    """Assemble the bounded rationalizable set for one curve.

    Samples the lower boundary on an even value grid over ``[0, value_cap]``
    and attaches the assumption diagnostics. ``v_max`` overrides the default
    steepest-half-plane value cap.
    """
    if boundary_samples < 2:
        raise InferenceError("boundary_samples must be at least 2")
    cap = float(v_max) if v_max is not None else default_value_cap(curve, eps_cap)
    if not (cap > 0 and math.isfinite(cap)):
        raise InferenceError(f"value cap must be positive and finite (got {cap})")
    eps0, _ = min_additive_regret(curve)
    step = cap / (boundary_samples - 1)
    pts = tuple(
        (k * step, boundary(curve, k * step)) for k in range(boundary_samples)
    )
    return RationalizableRegion(
        curve=curve,
        epsilon_cap=eps_cap,
        value_cap=cap,
        epsilon_min=eps0,
        boundary=pts,
        assumption_report=check_assumptions(curve),
    )
