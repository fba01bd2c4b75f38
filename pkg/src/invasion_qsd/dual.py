"""Reverse opinion flow, coalescing chains and the pair chain on K_{m,n}.

Tracing opinions backwards in time gives one Markov chain per vertex; two
chains that meet move together from then on. For the invasion model on
K_{m,n} two uncoalesced chains live in one of three configurations:

* ``BOTH_LARGE`` both chains on the large side,
* ``BOTH_SMALL`` both on the small side,
* ``SPLIT`` one on each side,

and the substochastic matrix ``p`` over these three states (in that order)
governs their coalescence time. Its spectral radius equals the survival
rate of the forward dynamics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dynamics import EdgeDistribution, Graph, make_rng
from .induced import check_sizes
from .linalg import solve
from .spectral import perron_left


class PairState(enum.IntEnum):
    BOTH_LARGE = 0
    BOTH_SMALL = 1
    SPLIT = 2
    COALESCED = 3


@dataclass(frozen=True, eq=False)
class CoalescingSystem:
    """Positions ``X_t(u)`` of the reverse chain started at each vertex ``u``."""

    positions: np.ndarray
    time: int = 0

    @classmethod
    def start(cls, g: Graph) -> "CoalescingSystem":
        return cls(np.arange(g.vertex_count), 0)

    def blocks(self) -> set[frozenset[int]]:
        """Partition of the starting vertices by current position."""
        groups: dict[int, set[int]] = {}
        for u, x in enumerate(self.positions.tolist()):
            groups.setdefault(x, set()).add(u)
        return {frozenset(b) for b in groups.values()}

    @property
    def coalesced(self) -> bool:
        return bool(np.all(self.positions == self.positions[0]))


class ReverseSampler:
    """Two-stage sampler: target U ~ rho_2, then source V ~ rho(. | U)."""

    def __init__(self, rho: EdgeDistribution):
        from .dynamics import AliasTable

        self.rho = rho
        self.marginal = rho.target_marginal()
        self._targets = AliasTable(self.marginal)
        self._sources = {}
        for u in range(rho.graph.vertex_count):
            support, probs = rho.source_given_target(u)
            self._sources[u] = (support, AliasTable(probs))

    def sample(self, rng: np.random.Generator) -> tuple[int, int]:
        """Return (U, V)."""
        u = int(self._targets.sample(rng, 1)[0])
        support, table = self._sources[u]
        v = int(support[table.sample(rng, 1)[0]])
        return u, v

    def sample_many(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised :meth:`sample`; returns arrays (U, V)."""
        u = self._targets.sample(rng, size)
        v = np.empty(size, dtype=np.int64)
        for target, (support, table) in self._sources.items():
            hit = np.flatnonzero(u == target)
            if hit.size:
                v[hit] = support[table.sample(rng, hit.size)]
        return u, v


def reverse_step(sys: CoalescingSystem, rho: EdgeDistribution | ReverseSampler, rng) -> CoalescingSystem:
    """Move every chain sitting at U to V; all other chains stay."""
    sampler = rho if isinstance(rho, ReverseSampler) else ReverseSampler(rho)
    u, v = sampler.sample(make_rng(rng))
    pos = sys.positions.copy()
    pos[pos == u] = v
    return CoalescingSystem(pos, sys.time + 1)


def duality_trace(edge_log, u: int, T: int) -> int:
    """Vertex whose time-0 opinion vertex ``u`` holds at time ``T``.

    ``edge_log[t] = (v, w)`` is the edge used by the forward step t -> t+1.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if len(edge_log) < T:
        raise ValueError(f"edge log has {len(edge_log)} entries, need {T}")
    cur = u
    log = edge_log[:T].tolist() if isinstance(edge_log, np.ndarray) else list(edge_log[:T])
    for v, w in reversed(log):
        if cur == w:
            cur = v
    return cur


@dataclass(frozen=True, eq=False)
class PairMatrix:
    m: int
    n: int
    p: np.ndarray
    pbar: np.ndarray
    p_exact: tuple[tuple[Fraction, ...], ...]


def pair_matrix_exact(m: int, n: int) -> tuple[tuple[Fraction, ...], ...]:
    f = Fraction
    to_split_from_large = f(2 * m, (m + n) * n)
    to_split_from_small = f(2 * n, (m + n) * m)
    return (
        (1 - to_split_from_large, f(0), to_split_from_large),
        (f(0), 1 - to_split_from_small, to_split_from_small),
        (f(n - 1, (m + n) * m), f(m - 1, (m + n) * n), 1 - f(m * m + n * n, (m + n) * m * n)),
    )


def pair_matrix(m: int, n: int) -> PairMatrix:
    """Pair-chain matrix ``p`` and its generator scaling ``pbar = (p - I)(m+n)nm``.

    For m = 1 the BOTH_SMALL row is kept for completeness but is not a
    probability row; it is unreachable and dropped by every computation.
    """
    check_sizes(m, n)
    exact = pair_matrix_exact(m, n)
    p = np.array([[float(x) for x in row] for row in exact])
    scale = (m + n) * n * m
    pbar = np.array(
        [[float((x - (1 if i == j else 0)) * scale) for j, x in enumerate(row)] for i, row in enumerate(exact)]
    )
    return PairMatrix(m, n, p, pbar, exact)


def _live_block(pm: PairMatrix) -> np.ndarray:
    if pm.m == 1:
        keep = [PairState.BOTH_LARGE, PairState.SPLIT]
        return pm.p[np.ix_(keep, keep)]
    return pm.p


def lambda_cmc_numeric(m: int, n: int, tol: float = 1e-15) -> float:
    """Spectral radius of the pair-chain matrix by power iteration."""
    block = _live_block(pair_matrix(m, n))
    return perron_left(block, tol=tol, method="power").lam


def one_minus_lambda_closed_m1(n: int) -> float:
    """Survival gap 1 - lambda for m = 1, in conjugate form free of cancellation."""
    if n < 3:
        raise ValueError("closed form needs n >= 3")
    a = 3.0 + float(n) * n
    b = 8.0 * (n + 1)
    return 4.0 / (n * (a + math.sqrt(a * a - b)))


def lambda_closed_m1(n: int) -> float:
    return 1.0 - one_minus_lambda_closed_m1(n)


def lambda_asymptotic(m: int, n: int) -> float:
    return 1.0 - 2.0 * m / ((m + n) * n * n)


def lambda_voter(m: int, n: int) -> float:
    """Coalescence survival rate of the voter model on K_{m,n}."""
    return 1.0 - 2.0 / (m + n) * (1.0 - math.sqrt(1.0 - 1.0 / (2 * m) - 1.0 / (2 * n)))


def expected_absorption_times(m: int, n: int) -> tuple[float, float, float]:
    """Mean coalescence times (f1, f2, f3) of the continuous-time chain ``pbar``.

    From SPLIT the total rate is m^2 + n^2, of which m + n is coalescence;
    eliminating f1 = f3 + 1/(2m^2) and f2 = f3 + 1/(2n^2) leaves
    f3 (m + n) = 1 + (n-1)n/(2m^2) + (m-1)m/(2n^2).
    """
    check_sizes(m, n)
    if m == 1:
        raise ValueError("m = 1 has an unreachable state; use the two-state reduction")
    f3 = (1.0 + (n - 1) * n / (2.0 * m * m) + (m - 1) * m / (2.0 * n * n)) / (m + n)
    return f3 + 1.0 / (2 * m * m), f3 + 1.0 / (2 * n * n), f3


def expected_absorption_linear(m: int, n: int) -> np.ndarray:
    """-pbar^{-1} 1 by a direct dense solve."""
    return -solve(pair_matrix(m, n).pbar, np.ones(3))


def _pair_tables(m: int, n: int):
    p = pair_matrix(m, n).p
    stay = np.diag(p).copy()
    leave = 1.0 - stay
    # conditional jump law on leaving: columns (BOTH_LARGE, BOTH_SMALL, SPLIT, COALESCED)
    jump = np.zeros((3, 4))
    for i in range(3):
        if leave[i] <= 0:
            continue
        for j in range(3):
            if j != i:
                jump[i, j] = p[i, j] / leave[i]
        jump[i, 3] = max(0.0, 1.0 - p[i].sum()) / leave[i]
    return leave, np.cumsum(jump, axis=1)


def sample_sigma(m: int, n: int, start: PairState, rng) -> int:
    """Coalescence time of the pair chain started at ``start``."""
    return int(sample_sigma_many(m, n, start, 1, rng)[0])


def sample_sigma_many(m: int, n: int, start: PairState, count: int, rng) -> np.ndarray:
    """``count`` independent coalescence times, simulated jump by jump.

    Holding times are geometric, so the cost is proportional to the number
    of jumps rather than the number of steps.
    """
    check_sizes(m, n)
    rng = make_rng(rng)
    start = PairState(start)
    if m == 1 and start == PairState.BOTH_SMALL:
        raise ValueError("BOTH_SMALL is unreachable when m = 1")
    out = np.zeros(count, dtype=np.int64)
    if start == PairState.COALESCED:
        return out
    leave, cum = _pair_tables(m, n)
    state = np.full(count, int(start))
    ids = np.arange(count)
    while ids.size:
        out[ids] += rng.geometric(leave[state])
        u = rng.random(ids.size)
        state = (u[:, None] >= cum[state, :3]).sum(axis=1)
        alive = state != PairState.COALESCED
        ids, state = ids[alive], state[alive]
    return out
