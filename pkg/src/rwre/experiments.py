"""Cylinder exit experiments, lattice directional-transience estimation, the
zero-speed trap inequality, and a velocity probe.

The finite-cylinder experiments test hitting identities that pin the
probability of escaping to the right at 1 - beta_1/alpha_1 independently of
the cylinder dimensions; the lattice experiments estimate P(T_L < D), the
probability of reaching abscissa L before ever backtracking below the start,
whose large-L limit bounds the directional-transience probability from below.

Finite-graph walks run vectorized across replicas in lockstep with an
active-set that shrinks as walks get absorbed.  Lattice walks generate their
environment lazily: a vertex's transition row is drawn on first visit from a
generator keyed by (replica, coordinate hash), so revisits are consistent and
memory stays proportional to the visited region.

Replica counts are split into fixed-size chunks with one RNG stream per
chunk (one stream per replica for lattice walks); worker count never changes
any output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .environment import sample_environment_batch
from .errors import PreconditionError
from .graph import (
    CylinderSpec,
    DirectedGraph,
    LatticeSpec,
    WeightAssignment,
    build_cylinder_band,
    build_cylinder_graph,
)
from .parallel import CHUNK_REPLICAS, run_chunked
from .rng import RngStream, coordinate_hash
from .stopping import CAP, LEFT, RIGHT, TARGET, TRANSVERSE, StoppingReport, StoppingRule

__all__ = [
    "ExperimentResult",
    "StoppingRule",
    "StoppingReport",
    "cylinder_delta_exit",
    "cylinder_exit_from_origin",
    "lattice_transience",
    "trap_condition",
    "TrapCheck",
    "velocity_probe",
    "ruin_exit_probability",
    "quenched_ruin_probability",
    "expected_exit_probability",
    "bernoulli_se",
    "CAP",
    "LEFT",
    "RIGHT",
    "TARGET",
    "TRANSVERSE",
]

DEFAULT_STEP_CAP = 100_000


@dataclass
class ExperimentResult:
    """Estimate with its uncertainty and the bookkeeping needed to rerun it.

    `truncated` counts replicas that hit the step cap; `undecided` counts
    replicas whose outcome the experiment could not call (always a subset of
    the truncated ones).  How undecided replicas enter the estimate is up to
    each experiment and stated in its docstring.
    """

    experiment: str
    params: dict
    estimate: float
    standard_error: float
    replicas: int
    truncated: int = 0
    undecided: int = 0
    seed: int = 0
    wall_time_s: Optional[float] = None

    def __post_init__(self):
        if self.truncated > self.replicas:
            raise ValueError("truncated count exceeds replica count")

    def to_record(self) -> dict:
        """Serializable record with frozen key order."""
        return {
            "experiment": self.experiment,
            "params": self.params,
            "estimate": self.estimate,
            "se": self.standard_error,
            "replicas": self.replicas,
            "truncated": self.truncated,
            "undecided": self.undecided,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
        }


def bernoulli_se(hits: int, n: int) -> float:
    """Standard error of a hit frequency (sample sd over sqrt n)."""
    if n <= 1:
        return 0.0
    p = hits / n
    return math.sqrt(p * (1.0 - p) * n / (n - 1.0) / n)


def expected_exit_probability(lattice: LatticeSpec) -> float:
    """1 - beta_1/alpha_1, the exact right-exit probability of the cylinder
    experiment and the lower bound of the transience ones."""
    return 1.0 - lattice.beta(1) / lattice.alpha(1)


def _batch_cumulative(g: DirectedGraph, probs: np.ndarray):
    """Per-replica cumulative out-edge rows over the padded adjacency table."""
    pad_eid, pad_head, deg = g.padded_out_tables()
    p = probs[:, pad_eid]
    dmax = pad_eid.shape[1]
    live = np.arange(dmax)[None, :] < deg[:, None]
    p = np.where(live[None, :, :], p, 0.0)
    return np.cumsum(p, axis=2), pad_head, deg


def _step_active(cum, pad_head, deg, pos, active, u):
    """Advance the active replicas one step; returns their new vertices."""
    rows = cum[active, pos[active]]
    k = np.sum(u[:, None] > rows, axis=1)
    k = np.minimum(k, deg[pos[active]] - 1)
    return pad_head[pos[active], k]


def cylinder_delta_exit(spec: CylinderSpec, replicas: int, rng: RngStream,
                        step_cap: int = DEFAULT_STEP_CAP, workers: int = 1) -> ExperimentResult:
    """Probability that the walk from the outside vertex re-enters it through
    the right face.

    Per replica: sample an environment on the augmented cylinder, walk from
    the outside vertex until the first return to it, and record whether the
    vertex visited immediately before the return lies on the right face.  The
    expectation is exactly 1 - beta_1/alpha_1 for every N and L.  Replicas
    that hit the step cap are excluded from the estimate and reported.
    """
    if replicas < 1:
        raise PreconditionError("at least one replica required")
    cg = build_cylinder_graph(spec)
    g = cg.graph
    delta = cg.outside
    right_mask = np.zeros(g.n_vertices, dtype=bool)
    right_mask[cg.right_face] = True

    def run_chunk(chunk_index: int, size: int):
        gen = rng.with_stream(chunk_index).generator()
        probs = sample_environment_batch(g, cg.weights, gen, size)
        cum, pad_head, deg = _batch_cumulative(g, probs)
        pos = np.full(size, delta, dtype=np.int64)
        active = np.arange(size)
        hits = 0
        returned = 0
        for _ in range(step_cap):
            if active.size == 0:
                break
            u = gen.random(active.size)
            nxt = _step_active(cum, pad_head, deg, pos, active, u)
            back = nxt == delta
            if back.any():
                prev = pos[active][back]
                hits += int(right_mask[prev].sum())
                returned += int(back.sum())
            pos[active] = nxt
            active = active[~back]
        return hits, returned, active.size

    hits = returned = truncated = 0
    for h, r, t in run_chunked(run_chunk, replicas, workers):
        hits += h
        returned += r
        truncated += t
    estimate = hits / returned if returned else float("nan")
    return ExperimentResult(
        experiment="cylinder-delta",
        params={"alpha": list(spec.lattice.weights), "N": spec.N, "L": spec.L,
                "steps": step_cap},
        estimate=estimate,
        standard_error=bernoulli_se(hits, returned),
        replicas=replicas,
        truncated=truncated,
        undecided=truncated,
        seed=rng.seed,
    )


def cylinder_exit_from_origin(spec: CylinderSpec, replicas: int, rng: RngStream,
                              step_cap: int = DEFAULT_STEP_CAP,
                              workers: int = 1) -> ExperimentResult:
    """Probability of reaching abscissa L before abscissa -1 on the plain
    cylinder, starting at the origin.

    Estimates E[P_o(T_L < T-tilde_{-1})], which is at least 1 - beta_1/alpha_1.
    Replicas that hit the step cap count as failures, so the estimate is a
    conservative lower bound.
    """
    if replicas < 1:
        raise PreconditionError("at least one replica required")
    lat = spec.lattice
    if lat.alpha(1) <= lat.beta(1):
        raise PreconditionError(
            f"requires alpha_1 > beta_1 (got alpha_1={lat.alpha(1)}, beta_1={lat.beta(1)})"
        )
    band = build_cylinder_band(lat, spec.N, spec.L)
    g = band.graph
    right_mask = np.zeros(g.n_vertices, dtype=bool)
    right_mask[band.right_absorbing] = True
    left_mask = np.zeros(g.n_vertices, dtype=bool)
    left_mask[band.left_absorbing] = True

    def run_chunk(chunk_index: int, size: int):
        gen = rng.with_stream(chunk_index).generator()
        probs = sample_environment_batch(g, band.weights, gen, size)
        cum, pad_head, deg = _batch_cumulative(g, probs)
        pos = np.full(size, band.origin, dtype=np.int64)
        active = np.arange(size)
        right = 0
        for _ in range(step_cap):
            if active.size == 0:
                break
            u = gen.random(active.size)
            nxt = _step_active(cum, pad_head, deg, pos, active, u)
            pos[active] = nxt
            r = right_mask[nxt]
            l = left_mask[nxt]
            right += int(r.sum())
            active = active[~(r | l)]
        return right, active.size

    right = truncated = 0
    for r, t in run_chunked(run_chunk, replicas, workers):
        right += r
        truncated += t
    return ExperimentResult(
        experiment="cylinder-exit",
        params={"alpha": list(lat.weights), "N": spec.N, "L": spec.L,
                "steps": step_cap},
        estimate=right / replicas,
        standard_error=bernoulli_se(right, replicas),
        replicas=replicas,
        truncated=truncated,
        undecided=truncated,
        seed=rng.seed,
    )


def _lattice_moves(lattice: LatticeSpec):
    """Coordinate deltas in weight order: +e_1, -e_1, +e_2, -e_2, ..."""
    d = lattice.dimension
    moves = []
    for axis in range(d):
        for sign in (1, -1):
            delta = [0] * d
            delta[axis] = sign
            moves.append(tuple(delta))
    return moves


def _sample_lattice_row(rng: RngStream, replica: int, coord, wvec: np.ndarray):
    """Cumulative transition row at a lattice vertex, keyed so any revisit in
    the same replica sees the same draw."""
    gen = rng.with_stream(replica).keyed_generator(coordinate_hash(coord))
    gammas = gen.gamma(wvec)
    total = gammas.sum()
    acc = 0.0
    row = []
    for gval in gammas:
        acc += gval / total
        row.append(acc)
    return row


def _pick(row, u: float) -> int:
    k = 0
    last = len(row) - 1
    while k < last and u >= row[k]:
        k += 1
    return k


def lattice_transience(lattice: LatticeSpec, levels, replicas: int, step_cap: int,
                       rng: RngStream, workers: int = 1):
    """Estimate P(T_L < D) for each level L: reach abscissa L before ever
    stepping below 0, walking from the origin of the infinite lattice.

    One walk per replica decides every level at once (the events are nested):
    the walk runs until its abscissa reaches max(levels) or drops to -1 or the
    step cap hits.  A capped walk still decides the levels its running
    maximum already reached; the rest are undecided and count as failures in
    the estimate, which is therefore a conservative lower bound.  Returns one
    result per level, in the order given.
    """
    if replicas < 1:
        raise PreconditionError("at least one replica required")
    if lattice.alpha(1) <= lattice.beta(1):
        raise PreconditionError(
            f"requires alpha_1 > beta_1 (got alpha_1={lattice.alpha(1)}, "
            f"beta_1={lattice.beta(1)})"
        )
    levels = [int(L) for L in levels]
    if not levels or any(L < 1 for L in levels):
        raise PreconditionError("levels must be positive integers")
    lmax = max(levels)
    d = lattice.dimension
    moves = _lattice_moves(lattice)
    wvec = np.asarray(lattice.weights)

    def run_chunk(chunk_index: int, size: int):
        base = chunk_index * CHUNK_REPLICAS
        maxima = np.empty(size, dtype=np.int64)
        backtracked = np.empty(size, dtype=bool)
        capped = np.empty(size, dtype=bool)
        for i in range(size):
            rep = base + i
            gen = rng.with_stream(rep).generator()
            env = {}
            coord = (0,) * d
            x1max = 0
            buf = gen.random(512)
            bi = 0
            steps = 0
            x1 = 0
            while steps < step_cap:
                row = env.get(coord)
                if row is None:
                    row = _sample_lattice_row(rng, rep, coord, wvec)
                    env[coord] = row
                if bi == len(buf):
                    buf = gen.random(512)
                    bi = 0
                k = _pick(row, buf[bi])
                bi += 1
                move = moves[k]
                coord = tuple(c + m for c, m in zip(coord, move))
                steps += 1
                x1 = coord[0]
                if x1 > x1max:
                    x1max = x1
                    if x1max >= lmax:
                        break
                elif x1 < 0:
                    break
            maxima[i] = x1max
            backtracked[i] = x1 < 0
            capped[i] = not backtracked[i] and x1max < lmax
        return maxima, backtracked, capped

    chunks = run_chunked(run_chunk, replicas, workers)
    maxima = np.concatenate([c[0] for c in chunks])
    backtracked = np.concatenate([c[1] for c in chunks])
    capped = np.concatenate([c[2] for c in chunks])
    truncated = int(capped.sum())

    results = []
    for L in levels:
        reached = maxima >= L
        successes = int(reached.sum())
        undecided = int((capped & ~reached).sum())
        results.append(ExperimentResult(
            experiment="transience",
            params={"alpha": list(lattice.weights), "L": L, "steps": step_cap},
            estimate=successes / replicas,
            standard_error=bernoulli_se(successes, replicas),
            replicas=replicas,
            truncated=truncated,
            undecided=undecided,
            seed=rng.seed,
        ))
    return results


@dataclass(frozen=True)
class TrapCheck:
    """Zero-speed inequality for one axis: value is the left-hand side, the
    condition holds when it is at most 1, and slack is 1 - value."""

    axis: int
    value: float
    holds: bool
    slack: float


def trap_condition(lattice: LatticeSpec, axis: int) -> TrapCheck:
    """Check 2 * sum_j (alpha_j + beta_j) - alpha_i - beta_i <= 1 for axis i.

    When it holds the walk has zero asymptotic speed along every direction
    even where it is directionally transient: finite traps eat the time
    scale.  Returns the value, the boolean, and the slack 1 - value.
    """
    if axis < 1 or axis > lattice.dimension:
        raise PreconditionError(f"axis must be in 1..{lattice.dimension}")
    value = 2.0 * lattice.total() - lattice.alpha(axis) - lattice.beta(axis)
    return TrapCheck(axis=axis, value=value, holds=value <= 1.0, slack=1.0 - value)


def velocity_probe(lattice: LatticeSpec, horizons, replicas: int, rng: RngStream,
                   workers: int = 1):
    """Estimate E[X_n . e_1] / n at each horizon n.

    One walk per replica runs to the largest horizon and its abscissa is read
    off at each checkpoint, so the per-horizon estimates are coupled.  No
    stopping rule applies; walks always complete, so nothing is truncated.
    """
    if replicas < 1:
        raise PreconditionError("at least one replica required")
    horizons = sorted(int(n) for n in horizons)
    if not horizons or horizons[0] < 1:
        raise PreconditionError("horizons must be positive integers")
    d = lattice.dimension
    moves = _lattice_moves(lattice)
    wvec = np.asarray(lattice.weights)
    nmax = horizons[-1]

    def run_chunk(chunk_index: int, size: int):
        base = chunk_index * CHUNK_REPLICAS
        sums = np.zeros(len(horizons))
        sums_sq = np.zeros(len(horizons))
        for i in range(size):
            rep = base + i
            gen = rng.with_stream(rep).generator()
            env = {}
            coord = (0,) * d
            buf = gen.random(1024)
            bi = 0
            hnext = 0
            for step in range(1, nmax + 1):
                row = env.get(coord)
                if row is None:
                    row = _sample_lattice_row(rng, rep, coord, wvec)
                    env[coord] = row
                if bi == len(buf):
                    buf = gen.random(1024)
                    bi = 0
                k = _pick(row, buf[bi])
                bi += 1
                move = moves[k]
                coord = tuple(c + m for c, m in zip(coord, move))
                if step == horizons[hnext]:
                    x1 = coord[0]
                    sums[hnext] += x1
                    sums_sq[hnext] += x1 * x1
                    hnext += 1
            if hnext != len(horizons):
                raise RuntimeError("horizon bookkeeping out of step")
        return sums, sums_sq

    total = np.zeros(len(horizons))
    total_sq = np.zeros(len(horizons))
    for s, sq in run_chunked(run_chunk, replicas, workers):
        total += s
        total_sq += sq

    results = []
    for j, n in enumerate(horizons):
        mean = total[j] / replicas
        if replicas > 1:
            var = max(total_sq[j] - replicas * mean * mean, 0.0) / (replicas - 1)
            se = math.sqrt(var / replicas) / n
        else:
            se = 0.0
        results.append(ExperimentResult(
            experiment="velocity",
            params={"alpha": list(lattice.weights), "horizon": n},
            estimate=mean / n,
            standard_error=se,
            replicas=replicas,
            seed=rng.seed,
        ))
    return results


def quenched_ruin_probability(right_probs) -> float:
    """One-dimensional quenched probability of hitting L before -1 from 0.

    `right_probs` lists the rightward step probability at sites 0..L-1; the
    classical ruin formula gives 1 / sum_{j=0..L} prod_{i<j} rho_i with
    rho_i = (1 - p_i)/p_i.
    """
    p = np.asarray(right_probs, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise PreconditionError("need the rightward probability at sites 0..L-1")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise PreconditionError("rightward probabilities must lie strictly in (0, 1)")
    rho = (1.0 - p) / p
    return float(1.0 / (1.0 + np.cumprod(rho).sum()))


def ruin_exit_probability(lattice: LatticeSpec, L: int, replicas: int, rng: RngStream,
                          workers: int = 1) -> ExperimentResult:
    """Exact-formula oracle for the d=1 cylinder exit probability.

    Averages the quenched ruin formula over sampled environments: each site's
    rightward probability is an independent Beta(alpha_1, beta_1) draw.  No
    walking happens, so this is an independent route to the same expectation
    as the walk-based estimate.
    """
    if lattice.dimension != 1:
        raise PreconditionError("the ruin oracle is one-dimensional")
    if replicas < 2:
        raise PreconditionError("at least two replicas required")
    if L < 1:
        raise PreconditionError("L must be >= 1")
    a1, b1 = lattice.alpha(1), lattice.beta(1)

    def run_chunk(chunk_index: int, size: int):
        gen = rng.with_stream(chunk_index).generator()
        p = gen.beta(a1, b1, size=(size, L))
        rho = (1.0 - p) / p
        h = 1.0 / (1.0 + np.cumprod(rho, axis=1).sum(axis=1))
        return h.sum(), np.square(h).sum()

    total = total_sq = 0.0
    for s, sq in run_chunked(run_chunk, replicas, workers):
        total += s
        total_sq += sq
    mean = total / replicas
    var = max(total_sq - replicas * mean * mean, 0.0) / (replicas - 1)
    return ExperimentResult(
        experiment="ruin-oracle",
        params={"alpha": list(lattice.weights), "L": L},
        estimate=mean,
        standard_error=math.sqrt(var / replicas),
        replicas=replicas,
        seed=rng.seed,
    )
