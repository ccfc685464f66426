"""Directed polymer layer: partition functions, Gibbs free energy,
last-passage times, and polymer-measure path sampling.

A potential tau turns each edge label into a weight; a path's weight is
the sum over its edges.  The beta-partition function sums exp(beta *
weight) over an ensemble (paths to a fixed endpoint, or all paths of a
fixed length), computed by a level-by-level transfer recursion in log
space.  Max-plus mode replaces log-sum-exp with max and drops beta,
giving last-passage times; backward softmax sampling draws paths with
probability exactly proportional to their weight factor.

Sampling randomness is a dedicated counter-based stream, independent
of the environment hash: the polymer measure is a distribution over
paths for a fixed environment, so the two sources must not mix.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .estimators import EntropyEstimate, LadderRow, extrapolate_ladder
from .lattice import _GOLDEN, _MASK, _mix, Direction, Environment, Path, TauFn
from .measures import Measure
from .prokhorov import prokhorov_distance

__all__ = [
    "DpTable",
    "SampleStream",
    "log_partition_point",
    "log_partition_level",
    "gibbs_estimate",
    "last_passage",
    "sample_polymer_path",
    "empirical_convergence_diagnostic",
]

_STREAM_TAG = 0x1D872B41A9C3F6E5


class SampleStream:
    """Counter-based uniform stream for path sampling.

    Same mixer as the environment labels but under a distinct domain
    tag, so no (seed, counter) pair can collide with an edge-label
    chain.
    """

    def __init__(self, seed: int):
        self._base = _mix(((seed & _MASK) ^ _STREAM_TAG) + _GOLDEN)
        self._counter = 0

    def uniform(self) -> float:
        self._counter += 1
        state = _mix(self._base ^ ((self._counter * _GOLDEN) & _MASK))
        return (state >> 11) * 2.0**-53


def _ladd(x: float, y: float) -> float:
    """Stable log(e^x + e^y) for scalars."""
    if x < y:
        x, y = y, x
    if y == -math.inf:
        return x
    return x + math.log1p(math.exp(y - x))


def _tau_hash(tau: TauFn) -> int:
    payload = repr((tau.breakpoints, tau.values)).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


@dataclass
class DpTable:
    """Level-indexed log-partition (or max-plus) table.

    levels[k] maps each reachable lattice point at level k to the log
    partition value (softmax mode) or maximal weight (maxplus mode) of
    the length-k paths from the origin ending there.  The origin entry
    is 0.  Built level by level; reproducible bit-for-bit given
    (environment, tau, beta, mode).
    """

    env: Environment
    tau: TauFn
    beta: float | None
    kind: str
    mode: str
    levels: list[dict[tuple[int, ...], float]]
    endpoint: tuple[int, ...] | None

    @classmethod
    def point(cls, env: Environment, endpoint: Sequence[int], beta: float | None,
              tau: TauFn, *, mode: str = "softmax") -> "DpTable":
        endpoint = tuple(int(c) for c in endpoint)
        if any(c < 0 for c in endpoint):
            raise ValueError(f"endpoint coordinates must be >= 0, got {endpoint}")
        levels = _sweep(env, beta, tau, sum(endpoint), box=endpoint, mode=mode)
        return cls(env, tau, beta, "point", mode, levels, endpoint)

    @classmethod
    def level(cls, env: Environment, length: int, beta: float | None, tau: TauFn,
              *, mode: str = "softmax") -> "DpTable":
        if length < 0:
            raise ValueError(f"length must be >= 0, got {length}")
        levels = _sweep(env, beta, tau, length, box=None, mode=mode)
        return cls(env, tau, beta, "level", mode, levels, None)

    def log_value(self) -> float:
        """Log partition (softmax) or maximal weight (maxplus) of the ensemble."""
        last = self.levels[-1]
        if self.kind == "point":
            return last[self.endpoint]
        vals = [last[p] for p in sorted(last)]
        if self.mode == "maxplus":
            return max(vals)
        acc = -math.inf
        for v in vals:
            acc = _ladd(acc, v)
        return acc

    def dump(self, path: str) -> None:
        """Binary row dump with a version-tagged header."""
        d = self.env.dimension
        endpoint = self.endpoint if self.endpoint is not None else (0,) * d
        beta = self.beta if self.beta is not None else math.nan
        with open(path, "wb") as fh:
            fh.write(b"GEDP")
            fh.write(struct.pack(
                "<IBBIIdQQ",
                1,
                0 if self.mode == "softmax" else 1,
                0 if self.kind == "point" else 1,
                d,
                len(self.levels) - 1,
                beta,
                _tau_hash(self.tau),
                self.env.seed,
            ))
            fh.write(struct.pack(f"<{d}I", *endpoint))
            for level in self.levels:
                fh.write(struct.pack("<I", len(level)))
                for pt in sorted(level):
                    fh.write(struct.pack(f"<{d}Id", *pt, level[pt]))

    @classmethod
    def load(cls, path: str, tau: TauFn) -> "DpTable":
        """Reload a dump; tau must hash-match the one the table was built with."""
        with open(path, "rb") as fh:
            if fh.read(4) != b"GEDP":
                raise ValueError("not a DpTable dump")
            version, mode_b, kind_b, d, depth, beta, tau_hash, seed = struct.unpack(
                "<IBBIIdQQ", fh.read(struct.calcsize("<IBBIIdQQ"))
            )
            if version != 1:
                raise ValueError(f"unsupported dump version {version}")
            if tau_hash != _tau_hash(tau):
                raise ValueError("tau does not match the dumped table")
            endpoint = struct.unpack(f"<{d}I", fh.read(4 * d))
            levels = []
            row = struct.Struct(f"<{d}Id")
            for _ in range(depth + 1):
                (count,) = struct.unpack("<I", fh.read(4))
                level = {}
                for _ in range(count):
                    *pt, val = row.unpack(fh.read(row.size))
                    level[tuple(pt)] = val
                levels.append(level)
        mode = "softmax" if mode_b == 0 else "maxplus"
        kind = "point" if kind_b == 0 else "level"
        return cls(
            Environment(seed, d),
            tau,
            None if math.isnan(beta) else beta,
            kind,
            mode,
            levels,
            endpoint if kind == "point" else None,
        )


def _sweep(env: Environment, beta: float | None, tau: TauFn, depth: int, *,
           box: tuple[int, ...] | None, mode: str) -> list[dict[tuple[int, ...], float]]:
    """Level-by-level recursion retaining every level (for sampling/backtracking)."""
    if mode not in ("softmax", "maxplus"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "softmax" and beta is None:
        raise ValueError("softmax mode needs beta")
    d = env.dimension
    origin = (0,) * d
    levels = [{origin: 0.0}]
    for _ in range(depth):
        cur: dict[tuple[int, ...], float] = {}
        for u in sorted(levels[-1]):
            val = levels[-1][u]
            for axis in range(d):
                if box is not None and u[axis] + 1 > box[axis]:
                    continue
                w = tau(env.edge_label(u, axis))
                term = val + (beta * w if mode == "softmax" else w)
                v = u[:axis] + (u[axis] + 1,) + u[axis + 1:]
                if v not in cur:
                    cur[v] = term
                elif mode == "softmax":
                    cur[v] = _ladd(cur[v], term)
                elif term > cur[v]:
                    cur[v] = term
        levels.append(cur)
    return levels


def _rolling_point_2d(env: Environment, endpoint: tuple[int, int], beta: float,
                      tau: TauFn) -> float:
    """Vectorized anti-diagonal sweep holding one diagonal; D=2 only."""
    a, b = endpoint
    prev = np.full(a + 1, -np.inf)
    prev[0] = 0.0
    i = np.arange(a + 1)
    for k in range(1, a + b + 1):
        j = k - i
        valid = (j >= 0) & (j <= b)
        c0 = np.full(a + 1, -np.inf)
        m0 = valid & (i >= 1)
        if m0.any():
            anchors = np.stack([i[m0] - 1, j[m0]], axis=1)
            c0[m0] = prev[i[m0] - 1] + beta * tau.apply(env.label_array(anchors, 0))
        c1 = np.full(a + 1, -np.inf)
        m1 = valid & (j >= 1)
        if m1.any():
            anchors = np.stack([i[m1], j[m1] - 1], axis=1)
            c1[m1] = prev[i[m1]] + beta * tau.apply(env.label_array(anchors, 1))
        prev = np.logaddexp(c0, c1)
        prev[~valid] = -np.inf
    return float(prev[a])


def _rolling_level_2d(env: Environment, length: int, beta: float, tau: TauFn) -> float:
    """Vectorized level sweep over all length-n paths; D=2 only."""
    prev = np.array([0.0])
    for k in range(1, length + 1):
        i = np.arange(k + 1)
        c0 = np.full(k + 1, -np.inf)
        anchors = np.stack([i[1:] - 1, k - i[1:]], axis=1)
        c0[1:] = prev + beta * tau.apply(env.label_array(anchors, 0))
        c1 = np.full(k + 1, -np.inf)
        anchors = np.stack([i[:-1], k - 1 - i[:-1]], axis=1)
        c1[:-1] = prev + beta * tau.apply(env.label_array(anchors, 1))
        prev = np.logaddexp(c0, c1)
    acc = -math.inf
    for v in prev:
        acc = _ladd(acc, float(v))
    return acc


def log_partition_point(env: Environment, endpoint: Sequence[int], beta: float,
                        tau: TauFn) -> float:
    """log of the sum over paths origin -> endpoint of exp(beta * weight).

    O(one diagonal) memory; the D=2 sweep is vectorized, other
    dimensions run the generic recursion.
    """
    endpoint = tuple(int(c) for c in endpoint)
    if any(c < 0 for c in endpoint):
        raise ValueError(f"endpoint coordinates must be >= 0, got {endpoint}")
    if env.dimension == 2:
        return _rolling_point_2d(env, endpoint, beta, tau)
    return DpTable.point(env, endpoint, beta, tau).log_value()


def log_partition_level(env: Environment, length: int, beta: float, tau: TauFn) -> float:
    """log of the sum over all length-n paths of exp(beta * weight)."""
    if length < 0:
        raise ValueError(f"length must be >= 0, got {length}")
    if env.dimension == 2:
        return _rolling_level_2d(env, length, beta, tau)
    return DpTable.level(env, length, beta, tau).log_value()


@lru_cache(maxsize=65536)
def scaled_free_energy(
    env: Environment,
    beta: float,
    tau: TauFn,
    n: int,
    q: Direction | None,
) -> float:
    """(1/n) log Z at one ladder point, cached per environment.

    With q given, the endpoint is floor(n q); without, the sum runs
    over all length-n paths.  Cached so that repeated ladder sweeps
    (and parallel pre-warming) pay for each point once.
    """
    if q is not None:
        return log_partition_point(env, q.floor_scale(n), beta, tau) / n
    return log_partition_level(env, n, beta, tau) / n


def gibbs_estimate(
    seeds: Sequence[int],
    beta: float,
    tau: TauFn,
    n_ladder: Sequence[int],
    *,
    q: Direction | None = None,
    dimension: int = 2,
) -> EntropyEstimate:
    """Free-energy estimate: per-seed 1/n extrapolation of (1/n) log Z.

    With q given, endpoints are floor(n q) (point-to-point free
    energy); without, all length-n paths (point-to-level).  Value is
    the mean of per-seed extrapolations; the band is their half-spread
    plus the mean fit residual.
    """
    n_ladder = sorted(int(n) for n in n_ladder)
    if len(n_ladder) < 2:
        raise ValueError("need at least two ladder scales")
    if q is not None:
        dimension = q.dimension

    rows = []
    fits = []
    resids = []
    for seed in seeds:
        env = Environment(seed, dimension)
        raws = []
        for n in n_ladder:
            raw = scaled_free_energy(env, beta, tau, n, q)
            raws.append(raw)
            rows.append(LadderRow(seed, n, beta, raw))
        a, resid = extrapolate_ladder(n_ladder, raws)
        fits.append(a)
        resids.append(resid)

    value = float(np.mean(fits))
    band = (max(fits) - min(fits)) / 2.0 + float(np.mean(resids))
    return EntropyEstimate(
        method="gibbs",
        value=value,
        ladder=tuple(rows),
        extrapolated=value,
        band=band,
        diagnostics={"per_seed_fits": dict(zip(seeds, fits))},
    )


def last_passage(env: Environment, endpoint: Sequence[int], tau: TauFn) -> tuple[float, Path]:
    """Maximal path weight to the endpoint and one maximizing path.

    Max-plus table plus exact backward reconstruction: the argmax
    predecessor reproduces the stored value bit-for-bit, so no
    tolerance enters.  Ties break toward the lower axis.
    """
    table = DpTable.point(env, endpoint, None, tau, mode="maxplus")
    endpoint = table.endpoint
    steps_rev = []
    v = endpoint
    for k in range(len(table.levels) - 1, 0, -1):
        target = table.levels[k][v]
        for axis in range(env.dimension):
            if v[axis] == 0:
                continue
            u = v[:axis] + (v[axis] - 1,) + v[axis + 1:]
            if table.levels[k - 1][u] + tau(env.edge_label(u, axis)) == target:
                steps_rev.append(axis)
                v = u
                break
        else:
            raise AssertionError("max-plus backtrack found no predecessor")
    path = Path((0,) * env.dimension, tuple(reversed(steps_rev)))
    return table.levels[-1][endpoint], path


def sample_polymer_path(
    env: Environment,
    beta: float,
    tau: TauFn,
    rng_seed: int,
    *,
    endpoint: Sequence[int] | None = None,
    level: int | None = None,
    table: DpTable | None = None,
) -> Path:
    """Draw one path with probability exp(beta * weight) / Z.

    Backward sampling: from the endpoint (drawn from the level marginal
    in level mode), each predecessor u of v is chosen with probability
    exp(logZ(u) + beta * tau(label) - logZ(v)).  Pass a prebuilt table
    when drawing many samples.
    """
    if table is None:
        if (endpoint is None) == (level is None):
            raise ValueError("exactly one of endpoint/level must be given")
        if endpoint is not None:
            table = DpTable.point(env, endpoint, beta, tau)
        else:
            table = DpTable.level(env, level, beta, tau)
    if table.mode != "softmax":
        raise ValueError("sampling needs a softmax table")
    beta = table.beta
    stream = SampleStream(rng_seed)

    last = table.levels[-1]
    if table.kind == "point":
        v = table.endpoint
    else:
        total = table.log_value()
        u01 = stream.uniform()
        acc = 0.0
        points = sorted(last)
        v = points[-1]
        for p in points:
            acc += math.exp(last[p] - total)
            if u01 < acc:
                v = p
                break

    steps_rev = []
    for k in range(len(table.levels) - 1, 0, -1):
        target = table.levels[k][v]
        u01 = stream.uniform()
        acc = 0.0
        chosen = None
        fallback = None
        for axis in range(env.dimension):
            if v[axis] == 0:
                continue
            u = v[:axis] + (v[axis] - 1,) + v[axis + 1:]
            if u not in table.levels[k - 1]:
                continue
            fallback = (axis, u)
            acc += math.exp(
                table.levels[k - 1][u] + beta * tau(env.edge_label(u, axis)) - target
            )
            if u01 < acc:
                chosen = (axis, u)
                break
        if chosen is None:
            chosen = fallback
        steps_rev.append(chosen[0])
        v = chosen[1]
    return Path((0,) * env.dimension, tuple(reversed(steps_rev)))


def empirical_convergence_diagnostic(
    env: Environment,
    q: Direction,
    beta: float,
    tau: TauFn,
    n_ladder: Sequence[int],
    samples_per_n: int,
    *,
    candidates: Sequence[tuple[str, Measure]] = (),
    bucket_bins: int = 256,
    rng_base: int = 0,
) -> dict:
    """Monte Carlo check that sampled empirical measures settle down.

    For each n, draws paths to floor(n q), averages the normalized
    empirical measures (bucketed to bucket_bins bins, distorting rho by
    at most 1/(2 * bucket_bins)), and reports the Prokhorov distance
    between consecutive ladder means, to each candidate measure, and
    the maximal excess of the mean CDF over the uniform CDF (negative
    everywhere means stochastic domination by high labels).  Diagnostic
    only: no pass/fail.
    """
    n_ladder = sorted(int(n) for n in n_ladder)
    means: list[Measure] = []
    cdf_excess = []
    for n in n_ladder:
        endpoint = q.floor_scale(n)
        table = DpTable.point(env, endpoint, beta, tau)
        bins = np.zeros(bucket_bins)
        for s in range(samples_per_n):
            path = sample_polymer_path(env, beta, tau, rng_base + s, table=table)
            for u in path.labels(env):
                bins[min(int(u * bucket_bins), bucket_bins - 1)] += 1.0
        bins /= n * samples_per_n
        mean = Measure(
            ((idx + 0.5) / bucket_bins, m) for idx, m in enumerate(bins) if m > 0
        )
        means.append(mean)
        # Both CDFs reach the total mass at the last bin, so domination
        # is informative only strictly inside [0, 1).
        edges = (np.arange(bucket_bins - 1) + 1.0) / bucket_bins
        cdf_excess.append(float(np.max(np.cumsum(bins)[:-1] - edges)))

    return {
        "n_ladder": n_ladder,
        "samples_per_n": samples_per_n,
        "beta": beta,
        "rho_consecutive": [
            prokhorov_distance(a, b) for a, b in zip(means, means[1:])
        ],
        "rho_to_candidate": {
            name: [prokhorov_distance(mean, target) for mean in means]
            for name, target in candidates
        },
        "cdf_max_excess": cdf_excess,
        "bucket_bins": bucket_bins,
    }
