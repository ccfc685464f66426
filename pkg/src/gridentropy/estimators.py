"""Finite-scale grid entropy estimators from path ensembles.

Two of the three entropy definitions live here.  For a direction q and
a target measure nu:

* order statistics -- the j-th smallest Prokhorov distance
  rho((1/n) mu_path, nu) over all paths to floor(n q); the entropy is
  the critical exponent alpha where j = floor(e^{alpha n}) switches
  from vanishing to bounded away from zero.
* exponential cost sums -- (1/n) log sum over paths of
  exp(-(n/eps) rho((1/n) mu_path, nu)), extrapolated in n and then
  minimized over an eps ladder.

Direction-free (point-to-level) variants sum over all length-floor(n t)
paths instead.  A third definition (convex conjugate of the free
energy) lives in the variational module.

The exact structural identities (termwise bounds, superadditivity under
concatenation, perturbation inequalities) hold for the *unnormalized*
cost sums log sum exp(-(1/eps) rho(mu_path, target)); ``cost_sum``
exposes those for the structure checks, while the normalized form above
is the public estimator.

Everything is deterministic given (seed list, config).  One enumeration
pass per (environment, n) computes all path distances; the profile is
cached and shared across the eps ladder, the rank grid, and any other
consumer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from heapq import heappush, heappushpop
from typing import Sequence

import numpy as np

from .lattice import (
    DEFAULT_PATH_BUDGET,
    BudgetError,
    Direction,
    Environment,
    enumerate_level_paths,
    enumerate_paths,
    level_path_count,
    path_count,
)
from .measures import Measure
from .prokhorov import prokhorov_distance

__all__ = [
    "OrderStatSeries",
    "LadderRow",
    "EntropyEstimate",
    "order_stat_series",
    "eps_sum",
    "eps_sum_level",
    "cost_sum",
    "estimate_entropy_orderstats",
    "estimate_entropy_eps",
    "estimate_entropy_level",
    "vanish_threshold",
    "extrapolate_ladder",
    "warm_cache",
]

# Largest ensemble worth materializing; beyond this the folds stream.
_PROFILE_CACHE_PATHS = 1 << 20

# Tolerated per-step rise when deciding whether an order-statistic
# sequence is "decreasing" (finite-n noise allowance).
_MONOTONE_SLACK = 0.01


@dataclass(frozen=True)
class OrderStatSeries:
    """Order statistics of path distances at one scale n.

    values[i] is the ranks[i]-th smallest rho((1/n) mu_path, nu); the
    +inf sentinel marks ranks beyond the ensemble size.
    """

    n: int
    target: Measure
    ranks: tuple[int, ...]
    values: tuple[float, ...]
    ensemble: str

    def __post_init__(self):
        if any(r < 1 for r in self.ranks):
            raise ValueError("ranks are 1-based and must be >= 1")
        if any(b < a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("order statistics must be nondecreasing in the rank")


@dataclass(frozen=True)
class LadderRow:
    """One raw estimator evaluation: seed, scale, eps or alpha, value."""

    seed: int
    n: int
    param: float
    raw: float


@dataclass
class EntropyEstimate:
    """Reported entropy value with its ladder data and uncertainty band.

    ``value`` is the headline estimate (-inf when the target is not
    attainable); ``extrapolated`` the n -> infinity fit behind it;
    ``band`` a half-width combining fit residuals and ladder gaps.
    Raw estimates are never clamped into [0, H(q)]: the bound is
    asymptotic, and ``diagnostics`` records violations instead.
    """

    method: str
    value: float
    ladder: tuple[LadderRow, ...]
    extrapolated: float
    band: float
    diagnostics: dict = field(default_factory=dict)


def _normalized_empirical(labels: Sequence[float], n_scale: int) -> Measure:
    return Measure((u, 1.0 / n_scale) for u in labels)


@lru_cache(maxsize=256)
def _point_profile(env: Environment, nu: Measure, n_scale: int, endpoint: tuple[int, ...]) -> np.ndarray:
    """Sorted rho((1/n) mu_path, nu) over all paths origin -> endpoint."""
    dists: list[float] = []
    enumerate_paths(
        env,
        endpoint,
        lambda path, labels: dists.append(
            prokhorov_distance(_normalized_empirical(labels, n_scale), nu)
        ),
        budget=_PROFILE_CACHE_PATHS,
    )
    arr = np.sort(np.asarray(dists))
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=64)
def _level_profile(env: Environment, nu: Measure, n_scale: int, length: int) -> np.ndarray:
    """Sorted rho((1/n) mu_path, nu) over all D^length paths from the origin."""
    dists: list[float] = []
    enumerate_level_paths(
        env,
        length,
        lambda path, labels: dists.append(
            prokhorov_distance(_normalized_empirical(labels, n_scale), nu)
        ),
        budget=_PROFILE_CACHE_PATHS,
    )
    arr = np.sort(np.asarray(dists))
    arr.setflags(write=False)
    return arr


class _LogSumExp:
    """Streaming max-shifted log-sum-exp accumulator."""

    def __init__(self):
        self.shift = -math.inf
        self.total = 0.0

    def update(self, x: float) -> None:
        if x <= self.shift:
            self.total += math.exp(x - self.shift)
        else:
            self.total = self.total * math.exp(self.shift - x) + 1.0
            self.shift = x

    def result(self) -> float:
        if self.shift == -math.inf:
            return -math.inf
        return self.shift + math.log(self.total)


class _SmallestK:
    """Bounded max-heap keeping the k smallest values seen."""

    def __init__(self, k: int):
        self.k = k
        self._heap: list[float] = []
        self.count = 0

    def update(self, x: float) -> None:
        self.count += 1
        if len(self._heap) < self.k:
            heappush(self._heap, -x)
        elif -self._heap[0] > x:
            heappushpop(self._heap, -x)

    def sorted_values(self) -> list[float]:
        return sorted(-v for v in self._heap)


def _fold_distances(env, nu, n_scale, consumers, *, endpoint=None, level_length=None,
                    budget=DEFAULT_PATH_BUDGET) -> None:
    """One enumeration pass feeding every consumer's update(rho).

    Small ensembles go through the cached profile; big ones stream.
    """
    if (endpoint is None) == (level_length is None):
        raise ValueError("exactly one of endpoint/level_length must be given")
    if endpoint is not None:
        count = path_count(endpoint)
    else:
        count = level_path_count(env.dimension, level_length)
    if count > budget:
        raise BudgetError(count, budget)
    if count <= _PROFILE_CACHE_PATHS:
        if endpoint is not None:
            profile = _point_profile(env, nu, n_scale, tuple(endpoint))
        else:
            profile = _level_profile(env, nu, n_scale, level_length)
        for rho in profile:
            for consumer in consumers:
                consumer.update(float(rho))
        return

    def visit(path, labels):
        rho = prokhorov_distance(_normalized_empirical(labels, n_scale), nu)
        for consumer in consumers:
            consumer.update(rho)

    if endpoint is not None:
        enumerate_paths(env, endpoint, visit, budget=budget)
    else:
        enumerate_level_paths(env, level_length, visit, budget=budget)


def warm_cache(
    env: Environment,
    nu: Measure,
    n_scale: int,
    *,
    endpoint: Sequence[int] | None = None,
    level_length: int | None = None,
    budget: int = DEFAULT_PATH_BUDGET,
) -> bool:
    """Precompute the distance profile for one ladder point.

    Returns False without computing anything when the ensemble is too
    large for the profile cache or the budget.  Exists so parallel
    runners can warm points in any order; the later estimator call hits
    the same cached arrays, so scheduling never reaches the results.
    """
    if (endpoint is None) == (level_length is None):
        raise ValueError("exactly one of endpoint/level_length must be given")
    if endpoint is not None:
        count = path_count(endpoint)
    else:
        count = level_path_count(env.dimension, level_length)
    if count > min(budget, _PROFILE_CACHE_PATHS):
        return False
    if endpoint is not None:
        _point_profile(env, nu, n_scale, tuple(endpoint))
    else:
        _level_profile(env, nu, n_scale, level_length)
    return True


def order_stat_series(
    env: Environment,
    q: Direction,
    nu: Measure,
    n: int,
    ranks: Sequence[int],
    *,
    budget: int = DEFAULT_PATH_BUDGET,
) -> OrderStatSeries:
    """Exact order statistics of rho((1/n) mu_path, nu) over paths to floor(n q).

    Ranks past the ensemble size get the +inf sentinel.  A bounded
    max-heap holds only the max(ranks) smallest distances.
    """
    ranks = tuple(int(j) for j in ranks)
    if not ranks or any(j < 1 for j in ranks):
        raise ValueError("ranks are 1-based and must be >= 1")
    heap = _SmallestK(max(ranks))
    endpoint = q.floor_scale(n)
    _fold_distances(env, nu, n, [heap], endpoint=endpoint, budget=budget)
    smallest = heap.sorted_values()
    values = tuple(smallest[j - 1] if j <= heap.count else math.inf for j in ranks)
    return OrderStatSeries(n, nu, ranks, values, ensemble=f"point:{endpoint}")


def eps_sum(
    env: Environment,
    q: Direction,
    nu: Measure,
    n: int,
    eps: float,
    *,
    budget: int = DEFAULT_PATH_BUDGET,
) -> float:
    """Normalized cost sum (1/n) log sum_path exp(-(n/eps) rho((1/n) mu_path, nu))."""
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    acc = _Scaled(-(n / eps))
    _fold_distances(env, nu, n, [acc], endpoint=q.floor_scale(n), budget=budget)
    return acc.lse.result() / n


def eps_sum_level(
    env: Environment,
    t: Fraction | int,
    nu: Measure,
    n: int,
    eps: float,
    *,
    budget: int = DEFAULT_PATH_BUDGET,
) -> float:
    """Direction-free cost sum over all length-floor(n t) paths from the origin."""
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    t = Fraction(t)
    length = (n * t.numerator) // t.denominator
    acc = _Scaled(-(n / eps))
    _fold_distances(env, nu, n, [acc], level_length=length, budget=budget)
    return acc.lse.result() / n


class _Scaled:
    """Feeds c * rho into a log-sum-exp accumulator."""

    def __init__(self, factor: float):
        self.factor = factor
        self.lse = _LogSumExp()

    def update(self, rho: float) -> None:
        self.lse.update(self.factor * rho)


def cost_sum(
    env: Environment,
    start: Sequence[int],
    endpoint: Sequence[int],
    target: Measure,
    eps: float,
    *,
    budget: int = DEFAULT_PATH_BUDGET,
) -> float:
    """Unnormalized cost sum log sum_path exp(-(1/eps) rho(mu_path, target)).

    mu_path is the raw (unnormalized) empirical measure and the target
    carries its full mass.  This is the quantity that is exactly
    superadditive under path concatenation; the structure checks run on
    it.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    lse = _LogSumExp()

    def visit(path, labels):
        mu = Measure((u, 1.0) for u in labels)
        lse.update(-prokhorov_distance(mu, target) / eps)

    enumerate_paths(env, endpoint, visit, start=start, budget=budget)
    return lse.result()


def vanish_threshold(nu: Measure, n_max: int) -> float:
    """Default decision threshold for "the order statistic vanishes".

    Twice the sum of the target's discretization radius (half the
    largest spacing between adjacent atoms; a target with gaps in its
    support is still resolvable there, so boundary gaps do not count)
    and the 1/n resolution at the largest ladder scale.  A finite-n
    heuristic, not a theorem: almost-sure limits cannot be observed
    directly.
    """
    positions = nu.positions
    if len(positions) > 1:
        radius = max(b - a for a, b in zip(positions, positions[1:])) / 2.0
    else:
        radius = 0.0
    return 2.0 * (radius + 1.0 / n_max)


def _rank_for(alpha: float, n: int, cap: int) -> int:
    """floor(e^{alpha n}), clipped into [1, cap + 1]."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    raw = alpha * n
    if raw > math.log(cap + 1):
        return cap + 1
    return max(1, int(math.exp(raw)))


def estimate_entropy_orderstats(
    seeds: Sequence[int],
    q: Direction,
    nu: Measure,
    n_ladder: Sequence[int],
    alpha_grid: Sequence[float],
    *,
    threshold: float | None = None,
    budget: int = DEFAULT_PATH_BUDGET,
) -> EntropyEstimate:
    """Critical-exponent estimate: sup of the alphas whose order statistic vanishes.

    alpha is classified "vanishing" when, for every seed, the sequence
    n -> min^{floor(e^{alpha n})} over the ladder is nonincreasing (up
    to a small noise slack) and its final value is below the threshold.
    The decision rule is a documented heuristic; diagnostics carry the
    ambiguous cases.  Returns -inf when not even alpha = 0 (the single
    smallest distance) vanishes.
    """
    n_ladder = sorted(int(n) for n in n_ladder)
    if len(n_ladder) < 2:
        raise ValueError("need at least two ladder scales")
    if threshold is None:
        threshold = vanish_threshold(nu, n_ladder[-1])

    rows = []
    vanishing: list[float] = []
    ambiguous: list[float] = []
    for alpha in alpha_grid:
        alpha_ok = True
        alpha_close = False
        for seed in seeds:
            env = Environment(seed, q.dimension)
            series = []
            for n in n_ladder:
                count_cap = budget
                rank = _rank_for(alpha, n, count_cap)
                stat = order_stat_series(env, q, nu, n, [rank], budget=budget)
                value = stat.values[0]
                series.append(value)
                rows.append(LadderRow(seed, n, alpha, value))
            decreasing = all(
                b <= a + _MONOTONE_SLACK for a, b in zip(series, series[1:])
            )
            final_small = series[-1] < threshold
            if not (decreasing and final_small):
                alpha_ok = False
                if math.isfinite(series[-1]) and series[-1] < 2 * threshold:
                    alpha_close = True
        if alpha_ok:
            vanishing.append(alpha)
        elif alpha_close:
            ambiguous.append(alpha)

    value = max(vanishing) if vanishing else -math.inf
    grid = sorted(alpha_grid)
    spacing = max(b - a for a, b in zip(grid, grid[1:])) if len(grid) > 1 else 0.0
    return EntropyEstimate(
        method="orderstats",
        value=value,
        ladder=tuple(rows),
        extrapolated=value,
        band=spacing,
        diagnostics={
            "threshold": threshold,
            "vanishing": vanishing,
            "ambiguous": ambiguous,
        },
    )


def extrapolate_ladder(ns: Sequence[int], raws: Sequence[float]) -> tuple[float, float]:
    """Least-squares fit raw(n) = a + b/n; returns (a, max abs residual).

    The subadditive structure guarantees the limit exists and is
    approached from one side; 1/n is a pragmatic model for the gap, not
    a claimed rate.
    """
    ns = np.asarray(ns, dtype=np.float64)
    raws = np.asarray(raws, dtype=np.float64)
    design = np.stack([np.ones_like(ns), 1.0 / ns], axis=1)
    coef, *_ = np.linalg.lstsq(design, raws, rcond=None)
    fitted = design @ coef
    return float(coef[0]), float(np.max(np.abs(fitted - raws)))


def estimate_entropy_eps(
    seeds: Sequence[int],
    q: Direction,
    nu: Measure,
    n_ladder: Sequence[int],
    eps_ladder: Sequence[float],
    *,
    budget: int = DEFAULT_PATH_BUDGET,
) -> EntropyEstimate:
    """Cost-sum estimate: extrapolate n -> infinity per eps, then take the min.

    Per-environment raw values are exactly nonincreasing as eps
    decreases (termwise domination); the fitted limits should inherit
    that within the band, and the diagnostic flags violations.
    """
    n_ladder = sorted(int(n) for n in n_ladder)
    eps_ladder = list(eps_ladder)
    if any(e2 >= e1 for e1, e2 in zip(eps_ladder, eps_ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    if len(n_ladder) < 2:
        raise ValueError("need at least two ladder scales")

    rows = []
    fits = []
    residuals = []
    for eps in eps_ladder:
        means = []
        for n in n_ladder:
            raws = []
            for seed in seeds:
                env = Environment(seed, q.dimension)
                raw = eps_sum(env, q, nu, n, eps, budget=budget)
                raws.append(raw)
                rows.append(LadderRow(seed, n, eps, raw))
            means.append(float(np.mean(raws)))
        a, resid = extrapolate_ladder(n_ladder, means)
        fits.append(a)
        residuals.append(resid)

    best = int(np.argmin(fits))
    value = fits[best]
    gap = abs(fits[-1] - fits[-2]) if len(fits) > 1 else 0.0
    band = max(residuals) + gap
    monotone = all(b <= a + band for a, b in zip(fits, fits[1:]))
    return EntropyEstimate(
        method="eps_sum",
        value=value,
        ladder=tuple(rows),
        extrapolated=value,
        band=band,
        diagnostics={
            "fits_by_eps": dict(zip(eps_ladder, fits)),
            "monotone_in_eps": monotone,
            "argmin_eps": eps_ladder[best],
        },
    )


def estimate_entropy_level(
    seeds: Sequence[int],
    dimension: int,
    nu: Measure,
    n_ladder: Sequence[int],
    eps_ladder: Sequence[float],
    *,
    t: Fraction | None = None,
    budget: int = DEFAULT_PATH_BUDGET,
) -> EntropyEstimate:
    """Direction-free estimate via level sums, with the balanced-direction cross-check.

    The level scale t defaults to the target's total mass (the only
    scale at which the estimate can be finite).  Where the ladder
    allows exact comparison (n t divisible by D), the diagnostics carry
    the balanced-direction endpoint estimate and the per-environment
    slack of the domination level sum >= endpoint sum.
    """
    if t is None:
        t = Fraction(nu.total_mass).limit_denominator(10**9)
    t = Fraction(t)
    n_ladder = sorted(int(n) for n in n_ladder)
    eps_ladder = list(eps_ladder)

    rows = []
    fits = []
    residuals = []
    domination_slack = math.inf
    balanced = Direction.from_fractions([t / dimension] * dimension)
    exact_ns = [n for n in n_ladder if (n * t.numerator) % (t.denominator * dimension) == 0]

    for eps in eps_ladder:
        means = []
        for n in n_ladder:
            raws = []
            for seed in seeds:
                env = Environment(seed, dimension)
                raw = eps_sum_level(env, t, nu, n, eps, budget=budget)
                raws.append(raw)
                rows.append(LadderRow(seed, n, eps, raw))
                if n in exact_ns:
                    point = eps_sum(env, balanced, nu, n, eps, budget=budget)
                    domination_slack = min(domination_slack, raw - point)
            means.append(float(np.mean(raws)))
        a, resid = extrapolate_ladder(n_ladder, means)
        fits.append(a)
        residuals.append(resid)

    best = int(np.argmin(fits))
    value = fits[best]
    gap = abs(fits[-1] - fits[-2]) if len(fits) > 1 else 0.0
    band = max(residuals) + gap

    direction_estimate = None
    difference = None
    if len(exact_ns) >= 2:
        point_est = estimate_entropy_eps(seeds, balanced, nu, exact_ns, eps_ladder, budget=budget)
        direction_estimate = point_est.value
        difference = value - point_est.value

    return EntropyEstimate(
        method="eps_sum_level",
        value=value,
        ladder=tuple(rows),
        extrapolated=value,
        band=band,
        diagnostics={
            "t": t,
            "fits_by_eps": dict(zip(eps_ladder, fits)),
            "balanced_direction_estimate": direction_estimate,
            "difference_to_direction": difference,
            "min_level_minus_direction_raw": domination_slack,
        },
    )
