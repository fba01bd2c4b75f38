"""The lumped chain on yes-count pairs (k, l) for the invasion model on K_{m,n}.

``k`` counts yes-opinions on the small side (size m), ``l`` on the large
side (size n). Transition probabilities are computed exactly with
:class:`fractions.Fraction` and emitted as floats.
"""

from __future__ import annotations

import csv
import io
import math
from fractions import Fraction
from typing import NamedTuple

import numba
import numpy as np

from .dynamics import Graph, as_config, make_rng, rho_invasion, step
from .errors import SizeCapError

ABSORBING = "absorbing"
INACCESSIBLE = "inaccessible"
TRANSIENT = "transient"

# move order shared by every table in the package: up_k, down_k, up_l, down_l
MOVES = ((1, 0), (-1, 0), (0, 1), (0, -1))


class TransitionProbs(NamedTuple):
    up_k: float
    down_k: float
    up_l: float
    down_l: float
    stay: float


def check_sizes(m: int, n: int) -> None:
    """Reject (m, n) outside ``2 <= m <= n`` or ``m = 1, n >= 3``."""
    ok = (2 <= m <= n) or (m == 1 and n >= 3)
    if not ok:
        raise ValueError(f"K_{{{m},{n}}} violates 2 <= m <= n or (m = 1 and n >= 3)")


class InducedKernel:
    """Transition kernel of the lumped chain on {0..m} x {0..n}."""

    def __init__(self, m: int, n: int):
        check_sizes(m, n)
        self.m = m
        self.n = n
        self._cum = None

    def __repr__(self) -> str:
        return f"InducedKernel(m={self.m}, n={self.n})"

    def _check(self, k: int, l: int) -> None:
        if not (0 <= k <= self.m and 0 <= l <= self.n):
            raise ValueError(f"state ({k}, {l}) out of bounds")

    def transition_probs_exact(self, k: int, l: int) -> tuple[Fraction, ...]:
        self._check(k, l)
        m, n = self.m, self.n
        up_k = Fraction(l * (m - k), m * (n + m))
        down_k = Fraction(k * (n - l), m * (n + m))
        up_l = Fraction(k * (n - l), n * (n + m))
        down_l = Fraction(l * (m - k), n * (n + m))
        stay = Fraction(k * l + (m - k) * (n - l), n * m)
        return up_k, down_k, up_l, down_l, stay

    def transition_probs(self, k: int, l: int) -> TransitionProbs:
        return TransitionProbs(*(float(p) for p in self.transition_probs_exact(k, l)))

    def classify(self, k: int, l: int) -> str:
        self._check(k, l)
        if (k, l) in ((0, 0), (self.m, self.n)):
            return ABSORBING
        if (k, l) in ((0, self.n), (self.m, 0)):
            return INACCESSIBLE
        return TRANSIENT

    def is_absorbing(self, k: int, l: int) -> bool:
        return self.classify(k, l) == ABSORBING

    def transient_states(self) -> list[tuple[int, int]]:
        """Transient states in row-major (k major, l minor) order."""
        return [
            (k, l)
            for k in range(self.m + 1)
            for l in range(self.n + 1)
            if self.classify(k, l) == TRANSIENT
        ]

    def move_table(self) -> np.ndarray:
        """Array ``[k, l, move]`` of move probabilities in :data:`MOVES` order."""
        m, n = self.m, self.n
        k = np.arange(m + 1, dtype=float)[:, None]
        l = np.arange(n + 1, dtype=float)[None, :]
        table = np.empty((m + 1, n + 1, 4))
        table[:, :, 0] = l * (m - k) / (m * (n + m))
        table[:, :, 1] = k * (n - l) / (m * (n + m))
        table[:, :, 2] = k * (n - l) / (n * (n + m))
        table[:, :, 3] = l * (m - k) / (n * (n + m))
        return table

    def step(self, k: int, l: int, rng) -> tuple[int, int]:
        """Sample one transition of the lumped chain."""
        if self.is_absorbing(k, l):
            return k, l
        if self._cum is None:
            self._cum = np.cumsum(self.move_table(), axis=2).tolist()
        u = make_rng(rng).random()
        for (dk, dl), c in zip(MOVES, self._cum[k][l]):
            if u < c:
                return k + dk, l + dl
        return k, l

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "l", "up_k", "down_k", "up_l", "down_l", "stay"])
        for k in range(self.m + 1):
            for l in range(self.n + 1):
                writer.writerow([k, l, *(format(p, ".17g") for p in self.transition_probs(k, l))])
        return buf.getvalue()


def transition_probs(kernel: InducedKernel, state: tuple[int, int]) -> TransitionProbs:
    return kernel.transition_probs(*state)


def step_induced(kernel: InducedKernel, state: tuple[int, int], rng) -> tuple[int, int]:
    return kernel.step(*state, rng)


def project(g: Graph, config) -> tuple[int, int]:
    """Yes-counts (k, l) of a configuration on a tagged complete bipartite graph."""
    if not g.is_bipartite_tagged:
        raise ValueError("project needs a bipartite-tagged graph")
    arr = as_config(g, config)
    return int(arr[: g.m].sum()), int(arr[g.m :].sum())


def binomial_weight(m: int, n: int, state: tuple[int, int]) -> int:
    """Number of full configurations lumped into ``state``: C(m,k) * C(n,l)."""
    k, l = state
    if not (0 <= k <= m and 0 <= l <= n):
        raise ValueError(f"state ({k}, {l}) out of bounds")
    return math.comb(m, k) * math.comb(n, l)


def induced_absorption_times(
    kernel: InducedKernel,
    initial: tuple[int, int],
    replicas: int,
    horizon: int | None = None,
    seed: int = 0,
    batch_size: int = 50_000,
    threads: int = 1,
) -> np.ndarray:
    """Absorption times of the lumped chain; -1 marks censoring.

    Batches are seeded ``seed + batch_index``, so results do not depend on
    ``threads``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    cum = np.cumsum(kernel.move_table(), axis=2)
    horizon = 10**9 if horizon is None else horizon
    jobs = [(i, min(batch_size, replicas - s)) for i, s in enumerate(range(0, replicas, batch_size))]

    def work(job):
        index, count = job
        return _induced_times_batch(kernel, cum, initial, count, horizon, make_rng(seed + index))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]
    return np.concatenate(parts)


def _induced_times_batch(kernel, cum, initial, count, horizon, rng):
    m, n = kernel.m, kernel.n
    if kernel.is_absorbing(*initial):
        return np.zeros(count, dtype=np.int64)
    width = n + 1
    flat_cum = np.ascontiguousarray(cum.reshape((m + 1) * width, 4))
    absorbing = np.zeros((m + 1) * width, dtype=np.bool_)
    absorbing[0] = absorbing[-1] = True
    start = initial[0] * width + initial[1]
    return _times_loop(rng, start, count, horizon, width, absorbing, flat_cum)


@numba.njit(cache=True, nogil=True)
def _times_loop(rng, start, count, horizon, width, absorbing, cum):
    times = np.full(count, -1, dtype=np.int64)
    dk = (width, -width, 1, -1)
    for r in range(count):
        cur = start
        for t in range(1, horizon + 1):
            u = rng.random()
            for j in range(4):
                if u < cum[cur, j]:
                    cur += dk[j]
                    break
            if absorbing[cur]:
                times[r] = t
                break
    return times


def lumpability_check(m: int, n: int, kernel: InducedKernel | None = None, size_cap: int = 5000) -> tuple[bool, float]:
    """Compare the lumped kernel against the full chain on {0,1}^(m+n).

    Every configuration is stepped along every directed edge; the block
    probabilities into each (k', l') must match ``kernel``. Returns
    ``(ok, max_defect)`` where ``ok`` means the defect is below 1e-13.
    """
    check_sizes(m, n)
    full_states = 2 ** (m + n)
    if full_states > size_cap:
        raise SizeCapError(f"full chain has {full_states} states, cap is {size_cap}")
    kernel = kernel or InducedKernel(m, n)
    g = Graph.complete_bipartite(m, n)
    rho = rho_invasion(g)
    edges = rho.as_dict()
    defect = 0.0
    for code in range(full_states):
        config = np.array([(code >> i) & 1 for i in range(m + n)], dtype=np.int8)
        k, l = project(g, config)
        blocks: dict[tuple[int, int], float] = {}
        for edge, w in edges.items():
            target = project(g, step(g, config, edge))
            blocks[target] = blocks.get(target, 0.0) + w
        probs = kernel.transition_probs(k, l)
        expected = {(k, l): probs.stay}
        for (dk, dl), p in zip(MOVES, probs[:4]):
            if p != 0.0:
                expected[(k + dk, l + dl)] = expected.get((k + dk, l + dl), 0.0) + p
        for target in blocks.keys() | expected.keys():
            defect = max(defect, abs(blocks.get(target, 0.0) - expected.get(target, 0.0)))
    return defect <= 1e-13, defect
