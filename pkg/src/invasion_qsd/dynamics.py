"""Graphs, edge distributions and the forward opinion-dynamics chain.

A step samples a directed edge ``(v, u)`` from an :class:`EdgeDistribution`
and copies the opinion of ``v`` onto ``u``. The invasion model uses
``rho_invasion``; the voter model uses its transpose ``rho_voter``.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_MAX_STEPS = 10**9
_CHUNK = 4096


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return a PCG64 generator; pass an existing generator through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Graph:
    """Finite, connected, loop-free undirected graph on vertices ``0..V-1``.

    ``small`` and ``large`` carry the bipartition of a complete bipartite
    graph when the graph was built by :meth:`complete_bipartite`.
    """

    vertex_count: int
    adjacency: tuple[tuple[int, ...], ...]
    small: frozenset[int] | None = None
    large: frozenset[int] | None = None

    def __post_init__(self):
        if self.vertex_count < 2:
            raise ValueError("graph needs at least two vertices")
        if len(self.adjacency) != self.vertex_count:
            raise ValueError("adjacency length must equal vertex_count")
        for v, nbrs in enumerate(self.adjacency):
            if list(nbrs) != sorted(set(nbrs)):
                raise ValueError(f"adjacency of {v} must be sorted and duplicate-free")
            for u in nbrs:
                if not 0 <= u < self.vertex_count:
                    raise ValueError(f"vertex {u} out of range")
                if u == v:
                    raise ValueError(f"loop at vertex {v}")
                if v not in self.adjacency[u]:
                    raise ValueError(f"edge ({v},{u}) is not symmetric")
        if (self.small is None) != (self.large is None):
            raise ValueError("bipartite tag needs both partitions")
        if not self._connected():
            raise ValueError("graph is not connected")

    def _connected(self) -> bool:
        seen = {0}
        queue = deque([0])
        while queue:
            v = queue.popleft()
            for u in self.adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    queue.append(u)
        return len(seen) == self.vertex_count

    @classmethod
    def from_edges(cls, vertex_count: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        nbrs: list[set[int]] = [set() for _ in range(vertex_count)]
        for a, b in edges:
            nbrs[a].add(b)
            nbrs[b].add(a)
        return cls(vertex_count, tuple(tuple(sorted(s)) for s in nbrs))

    @classmethod
    def complete_bipartite(cls, m: int, n: int) -> "Graph":
        """K_{m,n} with the small partition on vertices ``0..m-1``."""
        if m < 1 or n < 1:
            raise ValueError("partition sizes must be positive")
        small = tuple(range(m))
        large = tuple(range(m, m + n))
        adjacency = tuple([large] * m + [small] * n)
        return cls(m + n, adjacency, frozenset(small), frozenset(large))

    @classmethod
    def path(cls, vertex_count: int) -> "Graph":
        return cls.from_edges(vertex_count, [(i, i + 1) for i in range(vertex_count - 1)])

    @property
    def is_bipartite_tagged(self) -> bool:
        return self.small is not None

    @property
    def m(self) -> int:
        return len(self.small) if self.small is not None else 0

    @property
    def n(self) -> int:
        return len(self.large) if self.large is not None else 0

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_edge(self, v: int, u: int) -> bool:
        return 0 <= v < self.vertex_count and u in self.adjacency[v]

    def directed_edges(self) -> list[tuple[int, int]]:
        return [(v, u) for v in range(self.vertex_count) for u in self.adjacency[v]]

    @property
    def is_regular(self) -> bool:
        return len({len(a) for a in self.adjacency}) == 1


class AliasTable:
    """Walker/Vose alias table: O(K) setup, O(1) per sample."""

    def __init__(self, probs: Sequence[float]):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < 0):
            raise ValueError("probabilities must be nonnegative")
        k = p.size
        scaled = p * (k / p.sum())
        prob = np.ones(k)
        alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            g = large.pop()
            prob[s] = scaled[s]
            alias[s] = g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            prob[i] = 1.0
        self.prob = prob
        self.alias = alias

    def __len__(self) -> int:
        return self.prob.size

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.integers(0, self.prob.size, size=size)
        keep = rng.random(size) < self.prob[idx]
        return np.where(keep, idx, self.alias[idx])

    def probabilities(self) -> np.ndarray:
        """Reconstruct the sampled distribution from the table (for testing)."""
        k = self.prob.size
        out = self.prob / k
        np.add.at(out, self.alias, (1.0 - self.prob) / k)
        return out


@dataclass(frozen=True, eq=False)
class EdgeDistribution:
    """Probability measure on the directed edges of ``graph`` with full support.

    ``sources[i] -> targets[i]`` carries weight ``weights[i]``; sampling an
    edge means the source imposes its opinion on the target.
    """

    graph: Graph
    sources: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    _index: dict = field(init=False, repr=False, compare=False)
    _alias: AliasTable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = set(self.graph.directed_edges())
        pairs = list(zip(self.sources.tolist(), self.targets.tolist()))
        if set(pairs) != edges or len(pairs) != len(edges):
            raise ValueError("weights must cover every directed edge exactly once")
        if np.any(self.weights <= 0):
            raise ValueError("edge distribution must have full support")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, not 1")
        object.__setattr__(self, "_index", {e: i for i, e in enumerate(pairs)})
        object.__setattr__(self, "_alias", AliasTable(self.weights))

    @classmethod
    def from_mapping(cls, graph: Graph, weights: Mapping[tuple[int, int], float]) -> "EdgeDistribution":
        edges = sorted(weights)
        return cls(
            graph,
            np.array([e[0] for e in edges], dtype=np.int64),
            np.array([e[1] for e in edges], dtype=np.int64),
            np.array([weights[e] for e in edges], dtype=float),
        )

    def weight(self, v: int, u: int) -> float:
        i = self._index.get((v, u))
        return 0.0 if i is None else float(self.weights[i])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return {e: float(self.weights[i]) for e, i in self._index.items()}

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``size`` i.i.d. directed edges; returns (sources, targets)."""
        idx = self._alias.sample(rng, size)
        return self.sources[idx], self.targets[idx]

    def target_marginal(self) -> np.ndarray:
        """rho_2(u) = sum_v rho(v, u)."""
        out = np.zeros(self.graph.vertex_count)
        np.add.at(out, self.targets, self.weights)
        return out

    def source_given_target(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """Support and probabilities of rho(. | u)."""
        mask = self.targets == u
        w = self.weights[mask]
        return self.sources[mask], w / w.sum()


def rho_invasion(g: Graph) -> EdgeDistribution:
    """Invasion kernel: a uniform vertex invades a uniform neighbour."""
    weights = {(v, u): 1.0 / (g.vertex_count * g.degree(v)) for v, u in g.directed_edges()}
    return EdgeDistribution.from_mapping(g, weights)


def rho_voter(g: Graph) -> EdgeDistribution:
    """Voter kernel: rho_V(u, v) = rho_I(v, u)."""
    inv = rho_invasion(g)
    return EdgeDistribution.from_mapping(g, {(u, v): w for (v, u), w in inv.as_dict().items()})


def as_config(g: Graph, opinions: Sequence[int] | np.ndarray) -> np.ndarray:
    """Validate an opinion configuration and return it as an int8 array."""
    arr = np.asarray(opinions)
    if arr.shape != (g.vertex_count,):
        raise ValueError(f"configuration must have length {g.vertex_count}")
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError("opinions must be 0 or 1")
    return arr.astype(np.int8)


def is_consensus(config: np.ndarray) -> bool:
    return bool(np.all(config == config[0]))


def step(g: Graph, config: Sequence[int] | np.ndarray, edge: tuple[int, int]) -> np.ndarray:
    """Copy the opinion of ``edge[0]`` onto ``edge[1]``."""
    v, u = edge
    if not g.has_edge(v, u):
        raise ValueError(f"({v}, {u}) is not a directed edge of the graph")
    out = as_config(g, config).copy()
    out[u] = out[v]
    return out


def bipartite_config(g: Graph, small_yes: int, large_yes: int) -> np.ndarray:
    """Configuration with the first ``small_yes`` small and ``large_yes`` large vertices at 1."""
    if not g.is_bipartite_tagged:
        raise ValueError("graph has no bipartite tag")
    if not (0 <= small_yes <= g.m and 0 <= large_yes <= g.n):
        raise ValueError("yes-counts out of range")
    config = np.zeros(g.vertex_count, dtype=np.int8)
    config[:small_yes] = 1
    config[g.m : g.m + large_yes] = 1
    return config


@dataclass
class Trajectory:
    """Outcome of one forward run.

    ``tau`` is the absorption time, or ``None`` when the run was censored at
    ``steps`` without reaching consensus.
    """

    tau: int | None
    steps: int
    final_config: np.ndarray
    edge_log: np.ndarray | None = None

    @property
    def censored(self) -> bool:
        return self.tau is None

    def edge_log_csv(self) -> str:
        if self.edge_log is None:
            raise ValueError("trajectory was run without recording edges")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "v", "u"])
        for t, (v, u) in enumerate(self.edge_log.tolist()):
            writer.writerow([t, v, u])
        return buf.getvalue()


def _run(g, rho, initial, rng, max_steps, record_edges, stop_at_consensus):
    config = as_config(g, initial).copy()
    ones = int(config.sum())
    size = g.vertex_count
    log: list[np.ndarray] = []
    t = 0
    if stop_at_consensus and ones in (0, size):
        return Trajectory(0, 0, config, np.empty((0, 2), dtype=np.int64) if record_edges else None)
    while t < max_steps:
        chunk = min(_CHUNK, max_steps - t)
        src, dst = rho.sample(rng, chunk)
        done = None
        # plain Python loop: a single chain cannot be vectorised over time
        for i, (v, u) in enumerate(zip(src.tolist(), dst.tolist())):
            new = config[v]
            ones += int(new) - int(config[u])
            config[u] = new
            if stop_at_consensus and (ones == 0 or ones == size):
                done = i + 1
                break
        used = chunk if done is None else done
        if record_edges:
            log.append(np.stack([src[:used], dst[:used]], axis=1))
        t += used
        if done is not None:
            break
    edge_log = None
    if record_edges:
        edge_log = np.concatenate(log) if log else np.empty((0, 2), dtype=np.int64)
    absorbed = ones in (0, size)
    tau = t if (stop_at_consensus and absorbed) else None
    return Trajectory(tau, t, config, edge_log)


def run_to_consensus(
    g: Graph,
    rho: EdgeDistribution,
    initial,
    seed: int | np.random.Generator | None = None,
    record_edges: bool = False,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> Trajectory:
    """Run the chain from ``initial`` until consensus or ``max_steps``."""
    return _run(g, rho, initial, make_rng(seed), max_steps, record_edges, True)


def simulate(
    g: Graph,
    rho: EdgeDistribution,
    initial,
    steps: int,
    seed: int | np.random.Generator | None = None,
) -> Trajectory:
    """Run exactly ``steps`` steps, ignoring absorption, and record every edge."""
    traj = _run(g, rho, initial, make_rng(seed), steps, True, False)
    traj.tau = None
    return traj


def absorption_times(
    g: Graph,
    rho: EdgeDistribution,
    initial,
    replicas: int,
    horizon: int | None = None,
    seed: int = 0,
    batch_size: int = 20_000,
    threads: int = 1,
) -> np.ndarray:
    """Absorption times of ``replicas`` independent runs; -1 marks censoring at ``horizon``.

    Replicas are processed in batches seeded ``seed + batch_index``, so the
    result does not depend on ``threads``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    initial = as_config(g, initial)
    horizon = DEFAULT_MAX_STEPS if horizon is None else horizon
    starts = list(range(0, replicas, batch_size))
    jobs = [(i, min(batch_size, replicas - s)) for i, s in enumerate(starts)]

    def work(job):
        index, count = job
        return _times_batch(g, rho, initial, count, horizon, make_rng(seed + index))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    return np.concatenate(parts)


def _times_batch(g, rho, initial, count, horizon, rng):
    size = g.vertex_count
    times = np.full(count, -1, dtype=np.int64)
    ones0 = int(initial.sum())
    if ones0 in (0, size):
        times[:] = 0
        return times
    ops = np.tile(initial, (count, 1))
    ones = np.full(count, ones0, dtype=np.int64)
    ids = np.arange(count)
    rows = np.arange(count)
    t = 0
    while ids.size and t < horizon:
        t += 1
        src, dst = rho.sample(rng, ids.size)
        new = ops[rows, src]
        ones += new - ops[rows, dst]
        ops[rows, dst] = new
        done = (ones == 0) | (ones == size)
        if done.any():
            times[ids[done]] = t
            keep = ~done
            ops, ones, ids = ops[keep], ones[keep], ids[keep]
            rows = np.arange(ids.size)
    return times


def tail_from_times(times: np.ndarray, horizon: int | None = None) -> np.ndarray:
    """Empirical P(tau > t) for t = 0..horizon from a sample with -1 = censored.

    Without ``horizon`` the tail runs to the largest observed absorption time.
    Censored runs count as surviving through ``horizon``.
    """
    times = np.asarray(times)
    finite = times[times >= 0]
    if horizon is None:
        horizon = int(finite.max()) if finite.size else 0
    counts = np.bincount(np.minimum(finite, horizon + 1), minlength=horizon + 2)
    absorbed_by = np.cumsum(counts)[: horizon + 1]
    return (times.size - absorbed_by) / times.size


def survival_tail(
    g: Graph,
    rho: EdgeDistribution,
    initial,
    horizon: int,
    replicas: int,
    seed: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """Empirical survival function P(tau > t), t = 0..horizon."""
    times = absorption_times(g, rho, initial, replicas, horizon, seed, threads=threads)
    return tail_from_times(times, horizon)
