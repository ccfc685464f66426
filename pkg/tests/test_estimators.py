"""Estimator tests: hand-enumeration oracles, exact per-environment
structure (bounds, superadditivity, perturbation, level decomposition),
heap-vs-sort equivalence, and classification behavior."""

import math
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest

from gridentropy import (
    Direction,
    Environment,
    Measure,
    cost_sum,
    discretize_lebesgue,
    enumerate_paths,
    eps_sum,
    eps_sum_level,
    estimate_entropy_eps,
    estimate_entropy_level,
    estimate_entropy_orderstats,
    extrapolate_ladder,
    order_stat_series,
    prokhorov_brute,
    prokhorov_distance,
    scale,
    tv_norm,
    vanish_threshold,
)
from gridentropy.estimators import _SmallestK


def _walk_labels(env, axis_seq):
    pos = [0] * env.dimension
    labels = []
    for axis in axis_seq:
        labels.append(env.edge_label(tuple(pos), axis))
        pos[axis] += 1
    return labels


def _hand_eps_sum(env, axis_seqs, nu, n, eps):
    terms = []
    for seq in axis_seqs:
        mu = Measure((u, 1.0 / n) for u in _walk_labels(env, seq))
        terms.append(math.exp(-(n / eps) * prokhorov_brute(mu, nu)))
    return math.log(math.fsum(terms)) / n


def test_eps_sum_two_path_oracle():
    """Hand enumeration of both paths to (1,1) reproduces eps_sum exactly."""
    env = Environment(7, 2)
    nu = discretize_lebesgue(8)
    q = Direction.parse("1/2,1/2")
    for eps, frozen in ((1.0, 0.11346145674340372), (0.5, -0.1196470344848475)):
        oracle = _hand_eps_sum(env, [(0, 1), (1, 0)], nu, 2, eps)
        got = eps_sum(env, q, nu, 2, eps)
        assert abs(got - oracle) < 1e-13
        assert abs(got - frozen) < 1e-12


def test_eps_sum_six_path_oracle():
    """Integer direction (1,1) at n=2: the 6-term hand sum matches."""
    env = Environment(7, 2)
    nu = discretize_lebesgue(8)
    seqs = sorted(set(permutations((0, 0, 1, 1))))
    oracle = _hand_eps_sum(env, seqs, nu, 2, 1.0)
    got = eps_sum(env, Direction.parse("1,1"), nu, 2, 1.0)
    assert abs(got - oracle) < 1e-13
    assert abs(got - (-0.10412026538597247)) < 1e-12


def test_eps_sum_interval_bounds():
    """eps_sum lies in the exact interval forced by rho <= tv sums."""
    rng = np.random.default_rng(20260815)
    for trial in range(40):
        d = int(rng.integers(2, 4))
        q = Direction.from_fractions([Fraction(1, d)] * d)
        n = int(rng.integers(2, 6))
        k = int(rng.integers(1, 5))
        nu = Measure(zip(rng.random(k), rng.uniform(0.1, 1.5, k)))
        eps = float(rng.choice([0.5, 1.0, 2.0]))
        val = eps_sum(Environment(int(rng.integers(1 << 30)), d), q, nu, n, eps)
        floor_mass = sum(q.floor_scale(n)) / n
        lower = -(floor_mass + tv_norm(nu)) / eps
        upper = floor_mass * math.log(d)
        assert lower - 1e-12 <= val <= upper + 1e-12


def test_eps_sum_monotone_in_eps():
    """Raw value is nonincreasing as eps decreases, per environment."""
    rng = np.random.default_rng(7)
    q = Direction.parse("1/2,1/2")
    for trial in range(20):
        nu = Measure(zip(rng.random(3), rng.uniform(0.1, 0.5, 3)))
        env = Environment(int(rng.integers(1 << 30)), 2)
        n = int(rng.integers(2, 7))
        vals = [eps_sum(env, q, nu, n, eps) for eps in (2.0, 1.0, 0.5)]
        assert vals[0] >= vals[1] >= vals[2]


def test_order_stat_attained_path_is_zero():
    """Rank 1 against (1/n) times an enumerated path's own measure is 0."""
    env = Environment(3, 2)
    n = 3
    collected = []
    enumerate_paths(env, (2, 1), lambda path, labels: collected.append(list(labels)))
    nu = Measure((u, 1.0 / n) for u in collected[1])
    stat = order_stat_series(env, Direction.from_fractions([Fraction(2, 3), Fraction(1, 3)]), nu, n, [1])
    assert stat.values[0] == 0.0


def test_order_stat_rank_past_count_is_inf():
    """Rank 7 of a 6-path ensemble carries the +inf sentinel."""
    stat = order_stat_series(Environment(0, 2), Direction.parse("1,1"), discretize_lebesgue(4), 2, [1, 7])
    assert math.isfinite(stat.values[0])
    assert stat.values[1] == math.inf


def test_order_stat_matches_sort_oracle():
    """Bounded heap agrees with a full sort of all 20 distances."""
    env = Environment(42, 2)
    nu = discretize_lebesgue(16)
    n = 3
    dists = []
    enumerate_paths(
        env,
        (3, 3),
        lambda path, labels: dists.append(
            prokhorov_distance(Measure((u, 1.0 / n) for u in labels), nu)
        ),
    )
    oracle = sorted(dists)
    stat = order_stat_series(env, Direction.parse("1,1"), nu, n, [1, 6, 20])
    assert stat.values == (oracle[0], oracle[5], oracle[19])


def test_smallest_k_heap_matches_sort():
    """Streaming k-smallest equals sorted()[:k] on random inputs."""
    rng = np.random.default_rng(5)
    for trial in range(50):
        xs = rng.random(int(rng.integers(1, 40))).tolist()
        k = int(rng.integers(1, 12))
        heap = _SmallestK(k)
        for x in xs:
            heap.update(x)
        assert heap.sorted_values() == sorted(xs)[:k]
        assert heap.count == len(xs)


def test_eps_sum_level_empty_path():
    """floor(n t) = 0 leaves the single empty path: value -tv(nu)/eps."""
    env = Environment(1, 2)
    nu = discretize_lebesgue(4)
    got = eps_sum_level(env, Fraction(1, 2), nu, 1, 2.0)
    assert abs(got - (-tv_norm(nu) / 2.0)) < 1e-15
    assert eps_sum_level(env, Fraction(1, 2), Measure.zero(), 1, 2.0) == 0.0


def test_level_decomposition_identity():
    """exp(n * level sum) equals the sum of exp(n * per-endpoint sums)."""
    env = Environment(3, 2)
    nu = discretize_lebesgue(8)
    n, eps = 3, 1.0
    lvl = eps_sum_level(env, Fraction(1), nu, n, eps)
    total = 0.0
    for i in range(n + 1):
        q = Direction.from_fractions([Fraction(i, n), Fraction(n - i, n)])
        total += math.exp(n * eps_sum(env, q, nu, n, eps))
    assert abs(math.exp(n * lvl) - total) < 1e-10 * total


def test_level_dominates_balanced_direction():
    """Level sum >= the balanced-endpoint sum whenever lengths line up."""
    nu = discretize_lebesgue(8)
    q = Direction.parse("1/2,1/2")
    for seed in range(5):
        env = Environment(seed, 2)
        for n in (2, 4, 6):
            lvl = eps_sum_level(env, Fraction(1), nu, n, 1.0)
            point = eps_sum(env, q, nu, n, 1.0)
            assert lvl >= point


def test_cost_sum_superadditive_concatenation():
    """Unnormalized cost sums are superadditive under path concatenation."""
    base = discretize_lebesgue(4)
    for seed in range(5):
        env = Environment(seed, 2)
        for m in (1, 2):
            for k in (1, 2):
                whole = cost_sum(env, (0, 0), (m + k, m + k), scale(base, m + k), 1.0)
                first = cost_sum(env, (0, 0), (m, m), scale(base, m), 1.0)
                second = cost_sum(env, (m, m), (m + k, m + k), scale(base, k), 1.0)
                assert whole >= first + second - 1e-12


def test_perturbation_inequality():
    """Shrinking the endpoint and swapping the target costs at most the stated amounts."""
    rng = np.random.default_rng(11)
    for trial in range(20):
        n = int(rng.integers(2, 6))
        qi = [int(rng.integers(1, 4)) for _ in range(2)]
        pi = [int(rng.integers(0, v + 1)) for v in qi]
        q = Direction.from_fractions([Fraction(v, n) for v in qi])
        p = Direction.from_fractions([Fraction(v, n) for v in pi])
        nu = Measure(zip(rng.random(3), rng.uniform(0.1, 0.6, 3)))
        xi = Measure(zip(rng.random(3), rng.uniform(0.1, 0.6, 3)))
        eps = 1.0
        env = Environment(int(rng.integers(1 << 30)), 2)
        lhs = eps_sum(env, q, nu, n, eps)
        rhs = eps_sum(env, p, xi, n, eps)
        shift = sum(a - b for a, b in zip(q.floor_scale(n), p.floor_scale(n))) / n
        penalty = (shift + prokhorov_distance(nu, xi)) / eps
        assert lhs >= rhs - penalty - 1e-12


def test_extrapolate_recovers_exact_model():
    """Inputs lying exactly on a + b/n return a with zero residual."""
    ns = [4, 8, 16, 32]
    raws = [0.7 - 1.3 / n for n in ns]
    a, resid = extrapolate_ladder(ns, raws)
    assert abs(a - 0.7) < 1e-12
    assert resid < 1e-12


def test_estimate_eps_structure():
    """Ladder rows are complete, band covers residuals, monotone flag set."""
    nu = discretize_lebesgue(8)
    est = estimate_entropy_eps([1, 2], Direction.parse("1/2,1/2"), nu, [4, 6, 8], [4.0, 2.0])
    assert est.method == "eps_sum"
    assert len(est.ladder) == 2 * 3 * 2
    assert est.band >= 0.0
    assert est.diagnostics["monotone_in_eps"] is True
    assert est.value == min(est.diagnostics["fits_by_eps"].values())
    with pytest.raises(ValueError):
        estimate_entropy_eps([1], Direction.parse("1/2,1/2"), nu, [4, 6], [2.0, 4.0])


def test_estimate_orderstats_mass_mismatch_is_neg_inf():
    """A target whose mass cannot match the ensemble never vanishes."""
    nu = scale(discretize_lebesgue(8), 0.5)
    est = estimate_entropy_orderstats([1, 2], Direction.parse("1/2,1/2"), nu, [4, 6, 8], [0.0, 0.1])
    assert est.value == -math.inf


def test_estimate_orderstats_single_path_direction():
    """q=(1,0) has one path per scale, so only alpha=0 can vanish."""
    nu = discretize_lebesgue(64)
    est = estimate_entropy_orderstats(
        [1], Direction.parse("1,0"), nu, [64, 256, 1024], [0.0, 0.05, 0.1], threshold=0.1
    )
    assert est.value == 0.0


def test_estimate_level_homogeneity():
    """Doubling the target roughly doubles the level estimate at desk scale."""
    nu = discretize_lebesgue(8)
    est1 = estimate_entropy_level([1, 2, 3], 2, nu, [4, 6, 8], [4.0, 2.0])
    est2 = estimate_entropy_level([1, 2, 3], 2, scale(nu, 2.0), [2, 3, 4], [4.0, 2.0], t=Fraction(2))
    assert abs(est2.value - 2.0 * est1.value) <= 2.0 * est1.band + est2.band
    assert est1.diagnostics["min_level_minus_direction_raw"] >= 0.0
    assert est1.diagnostics["balanced_direction_estimate"] is not None


def test_vanish_threshold_values():
    """Adjacent-atom spacing sets the radius; boundary gaps do not count."""
    assert abs(vanish_threshold(discretize_lebesgue(64), 12) - 2 * (1 / 128 + 1 / 12)) < 1e-15
    half = Measure(((2 * i + 1) / 128, 1 / 32) for i in range(32))
    assert abs(vanish_threshold(half, 12) - 2 * (1 / 128 + 1 / 12)) < 1e-15
    assert vanish_threshold(Measure.dirac(0.3), 10) == 0.2


def test_order_stat_series_validation():
    """Ranks below 1 and decreasing value tuples are rejected."""
    with pytest.raises(ValueError):
        order_stat_series(Environment(0, 2), Direction.parse("1,1"), Measure.zero(), 2, [0])
    from gridentropy import OrderStatSeries

    with pytest.raises(ValueError):
        OrderStatSeries(2, Measure.zero(), (1, 2), (0.5, 0.4), "point")
