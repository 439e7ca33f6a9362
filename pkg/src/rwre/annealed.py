"""Exact annealed path probabilities and the equivalent linearly reinforced walk.

Averaging the quenched path probability over a Dirichlet environment gives a
closed form: a ratio of rising factorials of the edge weights over rising
factorials of the vertex weight sums, driven by how often the path crosses
each edge and departs each vertex.  The same counts drive an oriented-edge
linearly reinforced walk whose trajectory law equals the annealed law, which
this module implements as an independent simulation route.

Per-vertex counts are departure counts (the first n-1 positions of an
n-vertex path), the only reading under which they match the edge counts
vertex by vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .environment import Trajectory, sample_environment_batch
from .errors import PreconditionError
from .graph import DirectedGraph, WeightAssignment
from .parallel import MeanAccumulator, run_chunked
from .rng import RngStream
from .stopping import CAP, StoppingReport, StoppingRule

# switch point between compensated log summation and log-Gamma differences;
# summation is exact to an ulp per term, lgamma cheaper once counts get large
_DIRECT_TERMS = 1024


@dataclass
class CrossingProfile:
    """Edge-crossing and vertex-departure counts of a path."""

    edge_counts: np.ndarray
    departure_counts: np.ndarray

    def check_conservation(self, g: DirectedGraph):
        """Out-edge counts must sum to the departure count at every vertex."""
        sums = np.zeros(g.n_vertices, dtype=np.int64)
        np.add.at(sums, g.tails, self.edge_counts)
        if not np.array_equal(sums, self.departure_counts):
            raise ValueError("edge crossings inconsistent with vertex departures")


def crossing_profile(g: DirectedGraph, traj: Trajectory) -> CrossingProfile:
    edge_counts = np.zeros(g.n_edges, dtype=np.int64)
    np.add.at(edge_counts, traj.edges, 1)
    departures = np.zeros(g.n_vertices, dtype=np.int64)
    if len(traj) > 0:
        np.add.at(departures, traj.vertices[:-1], 1)
    return CrossingProfile(edge_counts, departures)


def log_rising_factorial(a: float, n: int) -> float:
    """log of a(a+1)...(a+n-1); exact summation for small n, lgamma beyond."""
    if n == 0:
        return 0.0
    if n < 0:
        raise ValueError("count must be nonnegative")
    if n <= _DIRECT_TERMS:
        return math.fsum(math.log(a + k) for k in range(n))
    return math.lgamma(a + n) - math.lgamma(a)


def annealed_log_path_probability(w: WeightAssignment, traj: Trajectory) -> float:
    """log E[p(path)] under the Dirichlet law with parameters `w`."""
    g = w.graph
    prof = crossing_profile(g, traj)
    num = 0.0
    for eid in np.flatnonzero(prof.edge_counts):
        num += log_rising_factorial(float(w.values[eid]), int(prof.edge_counts[eid]))
    den = 0.0
    sums = w.vertex_sums()
    for v in np.flatnonzero(prof.departure_counts):
        den += log_rising_factorial(float(sums[v]), int(prof.departure_counts[v]))
    return num - den


def annealed_path_probability_exact(w: WeightAssignment, traj: Trajectory) -> float:
    """E[p(path)]: rising factorials of edge weights over rising factorials of
    vertex weight sums, evaluated in log space."""
    return math.exp(annealed_log_path_probability(w, traj))


def annealed_log_paths_batch(w: WeightAssignment, edge_index_matrix: np.ndarray) -> np.ndarray:
    """Vectorized exact log-probabilities for many short paths.

    `edge_index_matrix` is (n_paths, max_len) of edge ids with -1 padding.
    Intended for enumeration suites; uses gammaln throughout.
    """
    g = w.graph
    n_paths, _ = edge_index_matrix.shape
    sums = w.vertex_sums()
    out = np.empty(n_paths)
    for i in range(n_paths):
        eids = edge_index_matrix[i]
        eids = eids[eids >= 0]
        e_cnt = np.bincount(eids, minlength=g.n_edges)
        v_cnt = np.zeros(g.n_vertices, dtype=np.int64)
        np.add.at(v_cnt, g.tails[eids], 1)
        ne = np.flatnonzero(e_cnt)
        nv = np.flatnonzero(v_cnt)
        num = np.sum(gammaln(w.values[ne] + e_cnt[ne]) - gammaln(w.values[ne]))
        den = np.sum(gammaln(sums[nv] + v_cnt[nv]) - gammaln(sums[nv]))
        out[i] = num - den
    return out


class UrnState:
    """Oriented-edge reinforcement state: weights grow by one per crossing."""

    def __init__(self, w: WeightAssignment, start: int):
        self.w = w
        self.graph = w.graph
        self.vertex = int(start)
        self.edge_counts = np.zeros(w.graph.n_edges, dtype=np.int64)
        self.departure_counts = np.zeros(w.graph.n_vertices, dtype=np.int64)
        self._vertex_sums = w.vertex_sums()

    def step_weights(self) -> tuple:
        """(out edge ids, probabilities) for the next step from the current vertex."""
        eids = self.graph.out_edges(self.vertex)
        num = self.w.values[eids] + self.edge_counts[eids]
        den = self._vertex_sums[self.vertex] + self.departure_counts[self.vertex]
        return eids, num / den

    def step_probability(self, edge_id: int) -> float:
        num = self.w.values[edge_id] + self.edge_counts[edge_id]
        den = self._vertex_sums[self.vertex] + self.departure_counts[self.vertex]
        return float(num / den)

    def advance(self, edge_id: int):
        if self.graph.tails[edge_id] != self.vertex:
            raise ValueError("edge does not leave the current vertex")
        self.edge_counts[edge_id] += 1
        self.departure_counts[self.vertex] += 1
        self.vertex = int(self.graph.heads[edge_id])


def urn_path_probability(w: WeightAssignment, traj: Trajectory) -> float:
    """Probability that the reinforced walk traces the path, as the product of
    urn step probabilities (the incremental route; compare with the exact formula)."""
    urn = UrnState(w, traj.start)
    logp = 0.0
    for eid in traj.edges:
        logp += math.log(urn.step_probability(eid))
        urn.advance(eid)
    return math.exp(logp)


def reinforced_walk(w: WeightAssignment, start: int, stop: StoppingRule, rng: RngStream):
    """Sample the oriented-edge linearly reinforced walk; its trajectory law is
    the annealed law of the Dirichlet environment with the same weights."""
    g = w.graph
    coords = g.coords
    if stop.needs_coords() and coords is None:
        raise ValueError("stopping rule needs coordinates but the graph has none")
    urn = UrnState(w, start)
    gen = rng.generator()
    vertices = [int(start)]
    edge_ids = []
    step = 0
    reason = stop.check(urn.vertex, coords[urn.vertex] if coords is not None else None, 0)
    buf = gen.random(256)
    buf_i = 0
    while reason is None:
        if step >= stop.max_steps:
            reason = CAP
            break
        eids, probs = urn.step_weights()
        if buf_i == len(buf):
            buf = gen.random(256)
            buf_i = 0
        u = buf[buf_i]
        buf_i += 1
        k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        if k >= len(eids):
            k = len(eids) - 1
        eid = int(eids[k])
        urn.advance(eid)
        edge_ids.append(eid)
        vertices.append(urn.vertex)
        step += 1
        reason = stop.check(urn.vertex, coords[urn.vertex] if coords is not None else None, step)
    return Trajectory(vertices, edge_ids), StoppingReport(reason, step, urn.vertex)


def reinforced_trace_frequency(w: WeightAssignment, traj: Trajectory, replicas: int,
                               rng: RngStream, workers: int = 1):
    """Fraction of reinforced walks of len(traj) steps that trace the path exactly.

    Along the forced path the urn's conditional step distributions are
    deterministic, so each step's target edge occupies a fixed sub-interval
    of [0, 1) and a walk traces the path exactly when all of its step
    uniforms land in their intervals.  Walks that deviate are abandoned at
    the deviating step; their remaining steps cannot affect the indicator.
    Replicas are split into fixed-size chunks, one RNG stream per chunk.
    """
    traj.check_consistent(w.graph)
    urn = UrnState(w, traj.start)
    lows = np.empty(len(traj))
    highs = np.empty(len(traj))
    for s, eid in enumerate(traj.edges):
        eids, probs = urn.step_weights()
        cum = np.cumsum(probs)
        j = int(np.flatnonzero(eids == eid)[0])
        lows[s] = cum[j - 1] if j > 0 else 0.0
        highs[s] = cum[j]
        urn.advance(eid)

    def run_chunk(chunk_index: int, size: int):
        gen = rng.with_stream(chunk_index).generator()
        us = gen.random((size, max(len(traj), 1)))
        if len(traj) == 0:
            return size
        hit = np.all((us >= lows) & (us < highs), axis=1)
        return int(hit.sum())

    counts = run_chunked(run_chunk, replicas, workers)
    hits = sum(counts)
    return _bernoulli_estimate(hits, replicas)


def _bernoulli_estimate(hits: int, n: int):
    p = hits / n
    sd = math.sqrt(n / (n - 1) * p * (1 - p)) if n > 1 else 0.0
    return p, sd / math.sqrt(n)


def annealed_path_probability_mc(g: DirectedGraph, w: WeightAssignment, traj: Trajectory,
                                 replicas: int, rng: RngStream, workers: int = 1):
    """Monte Carlo mean of the quenched path probability over fresh environments.

    Independent oracle for the exact formula.  Returns (estimate, standard error).
    """
    if replicas < 100:
        raise PreconditionError("at least 100 replicas required")
    edge_ids = np.asarray(traj.edges, dtype=np.int64)

    def run_chunk(chunk_index: int, size: int):
        gen = rng.with_stream(chunk_index).generator()
        probs = sample_environment_batch(g, w, gen, size)
        if len(edge_ids) == 0:
            vals = np.ones(size)
        else:
            vals = probs[:, edge_ids].prod(axis=1)
        return vals.sum(), np.square(vals).sum(), size

    acc = MeanAccumulator()
    for s, sq, n in run_chunked(run_chunk, replicas, workers):
        acc.add(s, sq, n)
    return acc.mean(), acc.standard_error()


# -- path literals --------------------------------------------------------


def parse_path_literal(g: DirectedGraph, text: str, origin: int = 0) -> Trajectory:
    """Parse a path literal into a trajectory.

    Three token forms, not mixed: vertex ids `0,1,0,1`; signed axis steps
    `+1,-1,+2` walked from `origin` (graphs with direction labels only);
    edge ids `e0,e5` for multigraphs where vertex ids are ambiguous.
    """
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if not tokens:
        return Trajectory([origin], [])
    if all(t.startswith("e") for t in tokens):
        eids = [int(t[1:]) for t in tokens]
        vs = [int(g.tails[eids[0]])]
        for eid in eids:
            if g.tails[eid] != vs[-1]:
                raise ValueError(f"edge {eid} does not continue the path")
            vs.append(int(g.heads[eid]))
        return Trajectory(vs, eids)
    if all(t[0] in "+-" for t in tokens):
        if g.directions is None:
            raise ValueError("step-letter literals need a lattice-derived graph")
        steps = [int(t) for t in tokens]
        by_vertex = {}
        for eid, (axis, sign) in enumerate(g.directions):
            by_vertex[(int(g.tails[eid]), axis * (1 if sign > 0 else -1))] = eid
        vs = [origin]
        eids = []
        for s in steps:
            key = (vs[-1], s)
            if key not in by_vertex:
                raise ValueError(f"no {s:+d} step out of vertex {vs[-1]}")
            eid = by_vertex[key]
            eids.append(eid)
            vs.append(int(g.heads[eid]))
        return Trajectory(vs, eids)
    vertices = [int(t) for t in tokens]
    return Trajectory.from_vertices(g, vertices)


def format_path_literal(g: DirectedGraph, traj: Trajectory) -> str:
    """Vertex-id literal when unambiguous, else edge-id literal."""
    try:
        rt = Trajectory.from_vertices(g, traj.vertices)
        if rt.edges == list(traj.edges):
            return ",".join(str(v) for v in traj.vertices)
    except ValueError:
        pass
    return ",".join(f"e{eid}" for eid in traj.edges)
