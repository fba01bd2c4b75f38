"""Substochastic matrices, their Perron pair (the exact QSD) and spectra."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .errors import ConvergenceError, SizeCapError
from .induced import MOVES, InducedKernel
from .linalg import eigenvalues, lu_factor, lu_solve, lu_solve_transposed

DEFAULT_STATE_CAP = 10_000
SPECTRUM_CAP = 500


@dataclass(frozen=True, eq=False)
class SubstochasticMatrix:
    states: tuple[Hashable, ...]
    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.shape != (len(self.states), len(self.states)):
            raise ValueError("entries must be square with one row per state")
        if np.any(a < 0):
            raise ValueError("entries must be nonnegative")
        if np.any(a.sum(axis=1) > 1 + 1e-12):
            raise ValueError("row sums must not exceed 1")
        object.__setattr__(self, "entries", a)

    @property
    def size(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        return self.states.index(state)

    def is_irreducible(self) -> bool:
        """Strong connectivity of the positive pattern."""
        pattern = self.entries > 0
        return _reaches_all(pattern) and _reaches_all(pattern.T)


def _reaches_all(pattern: np.ndarray) -> bool:
    n = pattern.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = seen.copy()
    while frontier.any():
        nxt = pattern[frontier].any(axis=0) & ~seen
        seen |= nxt
        frontier = nxt
    return bool(seen.all())


@dataclass
class PerronResult:
    lam: float
    left_vector: np.ndarray
    iterations: int
    residual: float


def build_S(m: int, n: int, cap: int = DEFAULT_STATE_CAP) -> SubstochasticMatrix:
    """Lumped invasion kernel restricted to the transient states of K_{m,n}.

    Mass sent into the absorbing pair (0,0), (m,n) is dropped; the
    inaccessible pair (0,n), (m,0) is never entered.
    """
    kernel = InducedKernel(m, n)
    dim = (m + 1) * (n + 1) - 4
    if dim > cap:
        raise SizeCapError(f"{dim} transient states exceeds cap {cap}")
    states = kernel.transient_states()
    index = {s: i for i, s in enumerate(states)}
    table = kernel.move_table()
    entries = np.zeros((dim, dim))
    for i, (k, l) in enumerate(states):
        p = kernel.transition_probs(k, l)
        entries[i, i] = p.stay
        for j, (dk, dl) in enumerate(MOVES):
            target = index.get((k + dk, l + dl))
            if target is not None:
                entries[i, target] += table[k, l, j]
    return SubstochasticMatrix(tuple(states), entries)


def perron_left(
    matrix: SubstochasticMatrix | np.ndarray,
    tol: float = 1e-13,
    max_iter: int = 10**7,
    method: str = "fundamental",
) -> PerronResult:
    """Perron eigenvalue and normalised left eigenvector of a substochastic matrix.

    ``method="power"`` iterates ``nu <- nu S``. ``method="fundamental"``
    iterates with ``(I - S)^{-1}`` instead, which has the same Perron vector
    but a far better eigenvalue ratio when the spectrum crowds near 1;
    it needs spectral radius < 1.

    Returns once ``max|nu S - lam nu| <= tol``; raises
    :class:`ConvergenceError` after ``max_iter`` sweeps.
    """
    if isinstance(matrix, SubstochasticMatrix):
        s = matrix.entries
        if matrix.size > 1 and not matrix.is_irreducible():
            warnings.warn("matrix pattern is reducible; Perron vector may not be unique", stacklevel=2)
    else:
        s = np.asarray(matrix, dtype=float)
    dim = s.shape[0]
    nu = np.full(dim, 1.0 / dim)
    if method == "fundamental":
        factors = lu_factor(np.eye(dim) - s)
        advance = lambda x: lu_solve_transposed(factors, x)  # noqa: E731
    elif method == "power":
        advance = lambda x: x @ s  # noqa: E731
    else:
        raise ValueError(f"unknown method {method!r}")
    residual = np.inf
    for it in range(1, max_iter + 1):
        nxt = advance(nu)
        nu = np.abs(nxt) / np.abs(nxt).sum()
        image = nu @ s
        lam = float(image.sum())
        residual = float(np.abs(image - lam * nu).max())
        if residual <= tol:
            return PerronResult(lam, nu, it, residual)
    raise ConvergenceError(f"no convergence after {max_iter} sweeps (residual {residual:.3g})")


def full_spectrum(matrix: SubstochasticMatrix | np.ndarray, max_dim: int = SPECTRUM_CAP) -> np.ndarray:
    """All eigenvalues sorted by real part, largest first.

    Diagnostic accuracy only (about 1e-8 near clusters).
    """
    s = matrix.entries if isinstance(matrix, SubstochasticMatrix) else np.asarray(matrix, dtype=float)
    if s.shape[0] > max_dim:
        raise SizeCapError(f"dimension {s.shape[0]} exceeds spectrum cap {max_dim}")
    ev = eigenvalues(s)
    order = np.lexsort((-ev.imag, -ev.real))
    return ev[order]


def spectrum_symmetry(ev: np.ndarray) -> float:
    """Distance between the real spectrum and its reflection about the midpoint."""
    r = np.sort(np.real(ev))[::-1]
    reflected = np.sort(r[0] + r[-1] - r)[::-1]
    return float(np.abs(r - reflected).max())


def expected_absorption_fundamental(matrix: SubstochasticMatrix | np.ndarray) -> np.ndarray:
    """Expected absorption times x solving (I - S) x = 1."""
    s = matrix.entries if isinstance(matrix, SubstochasticMatrix) else np.asarray(matrix, dtype=float)
    dim = s.shape[0]
    return lu_solve(lu_factor(np.eye(dim) - s), np.ones(dim))


def exact_survival(matrix: SubstochasticMatrix, initial, horizon: int) -> np.ndarray:
    """P(tau > t) for t = 0..horizon started from a transient state."""
    mu = np.zeros(matrix.size)
    mu[matrix.index(tuple(initial))] = 1.0
    out = np.empty(horizon + 1)
    for t in range(horizon + 1):
        out[t] = mu.sum()
        mu = mu @ matrix.entries
    return out


def qsd_grid(states: Sequence[tuple[int, int]], nu: np.ndarray, m: int, n: int) -> np.ndarray:
    """Spread a vector indexed by ``states`` onto an (m+1) x (n+1) grid (zeros elsewhere)."""
    grid = np.zeros((m + 1, n + 1))
    for (k, l), p in zip(states, nu):
        grid[k, l] = p
    return grid


def exact_qsd(m: int, n: int, tol: float = 1e-13) -> tuple[SubstochasticMatrix, PerronResult]:
    s = build_S(m, n)
    return s, perron_left(s, tol=tol)

