"""Convex duality between entropy, free energy, and passage times.

The free energy of the polymer ensemble and the entropy of an empirical
target are convex conjugates of each other.  This module exploits that
in both directions: ``variational_sup`` rebuilds the free energy from a
family of candidate targets (each carrying its own entropy estimate),
and ``conjugate_entropy`` rebuilds the entropy of one target from free
energies over a family of step potentials.  Both searches run over
finite families, so equalities degrade to one-sided inequalities that
tighten as the families grow; the invariant tests check exactly those
directions.

Two budget checks round the module out.  ``kl_budget_check`` audits the
bound "relative entropy to Lebesgue plus path entropy is at most the
log path-count rate", which pins atomic targets at -inf.  The
Bernoulli check counts, exactly, paths whose unit-label fraction beats
a threshold, and compares the growth exponent against the closed-form
large-deviation budget.
"""

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .estimators import EntropyEstimate
from .lattice import Direction, Environment, TauFn, shannon_entropy
from .measures import Histogram, Measure, kl_divergence
from .polymer import gibbs_estimate

__all__ = [
    "BernoulliReport",
    "CandidateFamily",
    "KlBudgetReport",
    "SupResult",
    "bernoulli_exponent_check",
    "bernoulli_kl",
    "conjugate_entropy",
    "default_tau_family",
    "integral",
    "kl_budget_check",
    "variational_sup",
]


@dataclass(frozen=True)
class CandidateFamily:
    """Finite family of target measures with their entropy estimates.

    ``recipe`` records how the family was generated (for reports);
    members share a total mass, matching a single path ensemble.
    """

    recipe: str
    members: tuple[tuple[Measure, EntropyEstimate], ...]

    def __post_init__(self):
        masses = [nu.total_mass for nu, _ in self.members]
        if masses and max(masses) - min(masses) > 1e-9:
            raise ValueError(f"family mixes total masses {min(masses)}..{max(masses)}")

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class SupResult:
    """Value and winner of a sup over a candidate family."""

    value: float
    argmax: Measure
    band: float


def integral(tau: TauFn, nu: Measure) -> float:
    """<tau, nu>: exact atom-by-atom integral of a step function."""
    return math.fsum(mass * tau(pos) for pos, mass in nu.atoms)


def variational_sup(beta: float, tau: TauFn, family: CandidateFamily) -> SupResult:
    """Free-energy lower bound: max of beta*<tau, nu> + entropy over the family.

    A finite family under-reaches the true sup, so the value sits below
    the matching ``gibbs_estimate`` up to bands.  The reported band is
    the largest member band, which covers any member that could
    overtake the winner within its own uncertainty.
    """
    if not family.members:
        raise ValueError("family must be nonempty")
    best_value = -math.inf
    best_nu = family.members[0][0]
    for nu, estimate in family.members:
        score = beta * integral(tau, nu) + estimate.value
        if score > best_value:
            best_value = score
            best_nu = nu
    band = max(estimate.band for _, estimate in family.members)
    return SupResult(best_value, best_nu, band)


def default_tau_family(
    k: int = 4, *, random_count: int = 8, rng_seed: int = 2026
) -> tuple[TauFn, ...]:
    """Step potentials on k equal cells: every -1/0/+1 ladder plus random ones.

    The sign ladders (3^k of them, zero included) probe which cells the
    target loads; the random ladders break the +-1 quantization.
    """
    if not 1 <= k <= 8:
        raise ValueError(f"cell count must be in 1..8, got {k}")
    ladders = [
        TauFn.from_values(values)
        for values in itertools.product((-1.0, 0.0, 1.0), repeat=k)
    ]
    rng = np.random.default_rng(rng_seed)
    for _ in range(random_count):
        ladders.append(TauFn.from_values(tuple(rng.uniform(-1.0, 1.0, size=k))))
    return tuple(ladders)


_ASCENT_DELTAS = (-0.8, -0.4, -0.2, -0.1, 0.1, 0.2, 0.4, 0.8)


def conjugate_entropy(
    seeds: Sequence[int],
    q: Direction,
    nu: Measure,
    beta: float,
    *,
    tau_family: Sequence[TauFn] | None = None,
    n_ladder: Sequence[int] = (64, 128, 256, 512),
    gibbs_cache: dict[TauFn, EntropyEstimate] | None = None,
    restarts: int = 3,
    ascent_passes: int = 2,
    rng_seed: int = 9,
) -> EntropyEstimate:
    """Entropy of nu as the negative conjugate of the free energy.

    Maximizes beta*<tau, nu> - G(beta, tau) over the tau family, then
    refines the winner by coordinate ascent on its cell values from
    ``restarts`` starting points (the objective is concave in tau, so
    local ascent is meaningful).  Returns -max as the estimate; since a
    finite family under-reaches the true sup, the value upper-bounds
    the entropy up to the free-energy bands.

    ``gibbs_cache`` maps potentials to their free-energy estimates; it
    is consulted and filled, so repeated calls share work.
    """
    if tau_family is None:
        tau_family = default_tau_family()
    if not tau_family:
        raise ValueError("tau family must be nonempty")
    cache = gibbs_cache if gibbs_cache is not None else {}
    seeds = tuple(seeds)
    n_ladder = tuple(n_ladder)

    def free_energy(tau: TauFn) -> EntropyEstimate:
        found = cache.get(tau)
        if found is None:
            found = gibbs_estimate(seeds, beta, tau, n_ladder, q=q)
            cache[tau] = found
        return found

    def objective(tau: TauFn) -> float:
        return beta * integral(tau, nu) - free_energy(tau).value

    best_tau = max(tau_family, key=objective)
    best_obj = objective(best_tau)
    family_best_obj = best_obj

    rng = np.random.default_rng(rng_seed)
    starts = [best_tau]
    width = len(best_tau.values)
    for _ in range(max(0, restarts - 1)):
        starts.append(TauFn.from_values(tuple(rng.uniform(-1.0, 1.0, size=width))))
    for start in starts:
        values = list(start.values)
        current = objective(TauFn.from_values(values))
        for _ in range(ascent_passes):
            improved = False
            for i in range(width):
                pivot = values[i]
                for delta in _ASCENT_DELTAS:
                    values[i] = pivot + delta
                    trial = objective(TauFn.from_values(values))
                    if trial > current:
                        current = trial
                        pivot = values[i]
                        improved = True
                values[i] = pivot
            if not improved:
                break
        if current > best_obj:
            best_obj = current
            best_tau = TauFn.from_values(values)

    winner = free_energy(best_tau)
    return EntropyEstimate(
        method="conjugate",
        value=-best_obj,
        ladder=winner.ladder,
        extrapolated=-best_obj,
        band=winner.band,
        diagnostics={
            "beta": beta,
            "family_size": len(tau_family),
            "evaluations": len(cache),
            "family_best_objective": family_best_obj,
            "refined_gain": best_obj - family_best_obj,
            "best_tau": {
                "breakpoints": list(best_tau.breakpoints),
                "values": list(best_tau.values),
            },
        },
    )


@dataclass(frozen=True)
class KlBudgetReport:
    """Audit of: relative entropy to Lebesgue + path entropy <= log-count rate."""

    shannon: float
    kl: float
    estimate: float
    band: float
    slack: float
    violation: bool
    method: str


def kl_budget_check(
    q: Direction, target: Histogram | Measure, estimate: EntropyEstimate
) -> KlBudgetReport:
    """Slack of the entropy budget H(q) - KL(target) - estimate.

    Atomic targets have infinite KL, so the budget demands a -inf
    entropy estimate there: slack is +inf when the estimate agrees and
    -inf (a violation) when a finite estimate sneaks through.
    """
    shannon = shannon_entropy(q)
    kl = kl_divergence(target)
    value = estimate.value
    if math.isinf(kl) and math.isinf(value):
        slack = math.inf if value < 0 else -math.inf
    else:
        slack = shannon - kl - value
    return KlBudgetReport(
        shannon=shannon,
        kl=kl,
        estimate=value,
        band=estimate.band,
        slack=slack,
        violation=slack < -estimate.band,
        method=estimate.method,
    )


def bernoulli_kl(s: float, p: float) -> float:
    """Relative entropy of Bernoulli(s) against Bernoulli(p)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must be in [0, 1], got {s}")
    terms = []
    if s > 0.0:
        terms.append(s * math.log(s / p))
    if s < 1.0:
        terms.append((1.0 - s) * math.log((1.0 - s) / (1.0 - p)))
    return math.fsum(terms)


@dataclass(frozen=True)
class BernoulliReport:
    """Growth exponents of threshold-beating path counts vs the budget."""

    p: float
    s: float
    dimension: int
    budget: float
    margin: float
    exponents: dict = field(default_factory=dict)
    final_exponents: dict = field(default_factory=dict)
    max_exponent: float = -math.inf
    within_budget: bool = True


def _count_rows_2d(env: Environment, n_max: int, lo: float) -> list[list[list[int]]]:
    """Exact path counts by (first coordinate, unit labels) per level.

    ``rows[k][i][c]`` counts the length-k paths from the origin to
    (i, k - i) whose labels land in [lo, 1] exactly c times.  Counts
    are exact integers; levels are built by sliding each predecessor
    row by its edge's 0/1 contribution.
    """
    rows = [[[1]]]
    current = [[1]]
    for k in range(1, n_max + 1):
        new = [[0] * (k + 1) for _ in range(k + 1)]
        anchors = np.empty((k, 2), dtype=np.int64)
        anchors[:, 0] = np.arange(k)
        anchors[:, 1] = k - 1 - anchors[:, 0]
        bits0 = env.label_array(anchors, 0) >= lo
        bits1 = env.label_array(anchors, 1) >= lo
        for i in range(k):
            row = current[i]
            width = len(row)
            b0 = int(bits0[i])
            target = new[i + 1]
            target[b0 : b0 + width] = [
                a + b for a, b in zip(target[b0 : b0 + width], row)
            ]
            b1 = int(bits1[i])
            target = new[i]
            target[b1 : b1 + width] = [
                a + b for a, b in zip(target[b1 : b1 + width], row)
            ]
        rows.append(new)
        current = new
    return rows


def _count_rows_generic(
    env: Environment, dimension: int, n_max: int, lo: float
) -> list[dict]:
    """Dict-keyed variant of the unit-label count DP for any dimension."""
    levels: list[dict] = [{(0,) * dimension: [1]}]
    for _ in range(n_max):
        new: dict = {}
        for point in sorted(levels[-1]):
            row = levels[-1][point]
            for axis in range(dimension):
                bit = 1 if env.edge_label(point, axis) >= lo else 0
                step = list(point)
                step[axis] += 1
                target = new.setdefault(tuple(step), [])
                need = bit + len(row)
                if len(target) < need:
                    target.extend([0] * (need - len(target)))
                for c, v in enumerate(row):
                    target[c + bit] += v
        levels.append(new)
    return levels


def bernoulli_exponent_check(
    p: float,
    s: float,
    n_ladder: Sequence[int],
    seeds: Sequence[int],
    *,
    dimension: int = 2,
) -> BernoulliReport:
    """Exponent of #(length-n paths with at least n*s unit labels).

    Labels are unit with probability p (a label is "unit" when it falls
    in [1 - p, 1]).  The count is exact, via a DP over (vertex, unit
    count) states, so no enumeration happens.  For s > p the exponent
    must fall below log(D) - KL(Bernoulli(s) || Bernoulli(p)) plus a
    finite-size margin; for s <= p typical paths qualify and the budget
    is just log(D).
    """
    if not 0.0 < p < 1.0 or not 0.0 < s <= 1.0:
        raise ValueError(f"need 0 < p < 1 and 0 < s <= 1, got p={p}, s={s}")
    n_ladder = sorted(int(n) for n in n_ladder)
    if not n_ladder or n_ladder[0] < 1:
        raise ValueError("ladder scales must be positive")
    lo = 1.0 - p
    s_exact = s if isinstance(s, Fraction) else Fraction(s)
    log_d = math.log(dimension)
    budget = log_d - bernoulli_kl(float(s_exact), p) if s_exact > Fraction(p) else log_d
    margin = 0.05

    exponents: dict = {}
    final: dict = {}
    n_max = n_ladder[-1]
    for seed in seeds:
        env = Environment(seed, dimension)
        if dimension == 2:
            rows = _count_rows_2d(env, n_max, lo)
            per_level = [
                [c_row for c_row in level] for level in rows
            ]
        else:
            levels = _count_rows_generic(env, dimension, n_max, lo)
            per_level = [
                [levels[k][point] for point in sorted(levels[k])]
                for k in range(n_max + 1)
            ]
        per_n = {}
        for n in n_ladder:
            threshold = math.ceil(n * s_exact)
            total = sum(
                sum(row[threshold:]) for row in per_level[n]
            )
            per_n[n] = math.log(total) / n if total > 0 else -math.inf
        exponents[seed] = per_n
        final[seed] = per_n[n_max]

    max_exponent = max(final.values())
    return BernoulliReport(
        p=p,
        s=float(s_exact),
        dimension=dimension,
        budget=budget,
        margin=margin,
        exponents=exponents,
        final_exponents=final,
        max_exponent=max_exponent,
        within_budget=max_exponent <= budget + margin,
    )
