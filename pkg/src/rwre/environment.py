"""Dirichlet environments on weighted graphs, quenched walks, and the
empirical environment of a trajectory.

An environment assigns each vertex a probability vector over its out-edges.
Dirichlet sampling draws an independent Gamma(alpha_e, 1) per edge and
normalizes within each vertex, which is valid for all positive shapes
including the shape < 1 trap regime.  No flooring is applied to components;
only the floating-point format bounds them away from 0 and 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import GraphFormatError
from .graph import DirectedGraph, WeightAssignment
from .rng import RngStream
from .stopping import CAP, StoppingReport, StoppingRule

ROW_SUM_TOL = 1e-12


class Environment:
    """Per-edge transition probabilities, row-stochastic at every vertex."""

    def __init__(self, graph: DirectedGraph, probabilities, validate: bool = True):
        p = np.asarray(probabilities, dtype=np.float64)
        if p.shape != (graph.n_edges,):
            raise ValueError("one probability per edge required")
        self.graph = graph
        self.probabilities = p
        if validate:
            self.validate()

    def validate(self, tol: float = ROW_SUM_TOL):
        sums = np.zeros(self.graph.n_vertices)
        np.add.at(sums, self.graph.tails, self.probabilities)
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            raise ValueError(f"rows do not sum to 1 at vertices {bad.tolist()}")

    def probability(self, edge_id: int) -> float:
        return float(self.probabilities[edge_id])

    def transition_matrix(self) -> np.ndarray:
        """Dense vertex-to-vertex matrix; parallel edges are summed."""
        g = self.graph
        P = np.zeros((g.n_vertices, g.n_vertices))
        np.add.at(P, (g.tails, g.heads), self.probabilities)
        return P

    def cumulative_rows(self):
        """(cumulative table, padded heads, degrees) for fast stepping."""
        g = self.graph
        pad_eid, pad_head, deg = g.padded_out_tables()
        probs = self.probabilities[pad_eid]
        dmax = pad_eid.shape[1]
        mask = np.arange(dmax)[None, :] < deg[:, None]
        probs = np.where(mask, probs, 0.0)
        return np.cumsum(probs, axis=1), pad_head, deg


@dataclass
class Trajectory:
    """Vertex sequence plus the edge ids of the steps taken."""

    vertices: list
    edges: list

    def __post_init__(self):
        if len(self.vertices) != len(self.edges) + 1:
            raise ValueError("vertex count must be edge count + 1")

    def __len__(self):
        return len(self.edges)

    @property
    def start(self) -> int:
        return self.vertices[0]

    @property
    def end(self) -> int:
        return self.vertices[-1]

    def check_consistent(self, g: DirectedGraph):
        for i, eid in enumerate(self.edges):
            if g.tails[eid] != self.vertices[i] or g.heads[eid] != self.vertices[i + 1]:
                raise ValueError(f"step {i} does not follow edge {eid}")

    @classmethod
    def from_vertices(cls, g: DirectedGraph, vertices) -> "Trajectory":
        """Resolve a vertex sequence to edges; fails on ambiguous parallel steps."""
        vs = [int(v) for v in vertices]
        eids = [g.find_edge(vs[i], vs[i + 1]) for i in range(len(vs) - 1)]
        return cls(vs, eids)

    def reversed(self) -> "Trajectory":
        """Same steps walked backwards; valid on the reversed graph (ids shared)."""
        return Trajectory(list(reversed(self.vertices)), list(reversed(self.edges)))


def sample_environment(g: DirectedGraph, w: WeightAssignment, rng: RngStream) -> Environment:
    """One Dirichlet environment: vertex rows are independent Dirichlet(out-weights)."""
    gen = rng.generator()
    gammas = gen.standard_gamma(w.values)
    return Environment(g, _normalize_rows(g, gammas))


def sample_environment_batch(g: DirectedGraph, w: WeightAssignment,
                             gen: np.random.Generator, count: int) -> np.ndarray:
    """(count, n_edges) matrix of independent environments, rows normalized per vertex."""
    gammas = gen.standard_gamma(w.values, size=(count, g.n_edges))
    return _normalize_rows(g, gammas)


def _normalize_rows(g: DirectedGraph, gammas: np.ndarray) -> np.ndarray:
    grouped = gammas[..., g.out_edge_ids]
    sums = np.add.reduceat(grouped, g.out_offsets[:-1], axis=-1)
    out = np.empty_like(gammas)
    out[..., g.out_edge_ids] = grouped / np.repeat(sums, g.out_degrees, axis=-1)
    return out


def log_path_probability(env: Environment, traj: Trajectory) -> float:
    """Sum of log transition probabilities along the path; empty path gives 0."""
    if len(traj) == 0:
        return 0.0
    return float(np.sum(np.log(env.probabilities[traj.edges])))


def path_probability(env: Environment, traj: Trajectory) -> float:
    """Product of transition probabilities along the path; empty path gives 1."""
    return float(np.exp(log_path_probability(env, traj)))


def quenched_walk(env: Environment, start: int, stop: StoppingRule, rng: RngStream):
    """Sample the Markov chain of `env` from `start` until `stop` fires.

    Returns (trajectory, report); hitting the step cap is reported as a
    truncation, not an error.  Coordinate rules require the graph to carry
    vertex coordinates.
    """
    g = env.graph
    coords = g.coords
    if stop.needs_coords() and coords is None:
        raise ValueError("stopping rule needs coordinates but the graph has none")
    cum, pad_head, deg = env.cumulative_rows()
    pad_eid = g.padded_out_tables()[0]

    gen = rng.generator()
    vertices = [start]
    edge_ids = []
    v = start
    reason = stop.check(v, coords[v] if coords is not None else None, 0)
    step = 0
    buf = gen.random(256)
    buf_i = 0
    while reason is None:
        if step >= stop.max_steps:
            reason = CAP
            break
        if buf_i == len(buf):
            buf = gen.random(256)
            buf_i = 0
        u = buf[buf_i]
        buf_i += 1
        row = cum[v]
        k = int(np.searchsorted(row, u, side="right"))
        if k >= deg[v]:
            k = deg[v] - 1
        edge_ids.append(int(pad_eid[v, k]))
        v = int(pad_head[v, k])
        vertices.append(v)
        step += 1
        reason = stop.check(v, coords[v] if coords is not None else None, step)
    return Trajectory(vertices, edge_ids), StoppingReport(reason, step, v)


@dataclass
class EmpiricalEnvironment:
    """Edge-crossing frequencies of a trajectory; defined only at departed vertices."""

    graph: DirectedGraph
    edge_counts: np.ndarray
    departure_counts: np.ndarray

    def visited(self, v: int) -> bool:
        return self.departure_counts[v] > 0

    def probability(self, edge_id: int) -> Fraction:
        """Exact crossing frequency n_e / n_x; raises at undeparted vertices."""
        x = int(self.graph.tails[edge_id])
        if self.departure_counts[x] == 0:
            raise ValueError(f"vertex {x} was never departed from")
        return Fraction(int(self.edge_counts[edge_id]), int(self.departure_counts[x]))

    def row(self, v: int) -> dict:
        if not self.visited(v):
            raise ValueError(f"vertex {v} was never departed from")
        return {int(e): self.probability(int(e)) for e in self.graph.out_edges(v)}

    def as_probabilities(self) -> np.ndarray:
        """Float frequencies per edge; NaN where the tail vertex was never departed."""
        tails = self.graph.tails
        with np.errstate(invalid="ignore", divide="ignore"):
            p = self.edge_counts / self.departure_counts[tails]
        p[self.departure_counts[tails] == 0] = np.nan
        return p


def empirical_environment(g: DirectedGraph, traj: Trajectory) -> EmpiricalEnvironment:
    """Sample environment of a trajectory: crossing counts over departure counts."""
    if len(traj.vertices) == 0:
        raise ValueError("trajectory must be nonempty")
    edge_counts = np.zeros(g.n_edges, dtype=np.int64)
    np.add.at(edge_counts, traj.edges, 1)
    departures = np.zeros(g.n_vertices, dtype=np.int64)
    np.add.at(departures, traj.vertices[:-1], 1)
    return EmpiricalEnvironment(g, edge_counts, departures)


# -- environment dump format ---------------------------------------------


def write_environment(env: Environment, fh):
    """Lines `env <vertex> <edge-id> <probability>` with 17 significant digits."""
    g = env.graph
    for v in range(g.n_vertices):
        for eid in g.out_edges(v):
            fh.write(f"env {v} {eid} {env.probabilities[eid]:.17g}\n")


def read_environment(g: DirectedGraph, fh) -> Environment:
    p = np.full(g.n_edges, np.nan)
    for lineno, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "env" or len(parts) != 4:
            raise GraphFormatError(f"line {lineno}: expected `env <vertex> <edge-id> <probability>`")
        eid = int(parts[2])
        p[eid] = float(parts[3])
    if np.isnan(p).any():
        raise GraphFormatError("environment file does not cover every edge")
    return Environment(g, p)
