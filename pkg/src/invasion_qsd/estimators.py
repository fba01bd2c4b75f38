"""Monte-Carlo QSD estimators and survival-rate regression.

Two estimators of the quasistationary distribution of the lumped chain:

* the restart estimator runs a single chain and, whenever it would be
  absorbed, resamples its next state from its own occupation measure;
* the conditional estimator runs independent replicas for a fixed time and
  keeps the survivors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .dynamics import make_rng
from .induced import TRANSIENT, InducedKernel


class NoSurvivorsError(RuntimeError):
    pass


@dataclass
class EmpiricalMeasure:
    """Occupation counts over the transient states of a lumped chain."""

    states: tuple[tuple[int, int], ...]
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def as_dict(self) -> dict[tuple[int, int], int]:
        return {s: int(c) for s, c in zip(self.states, self.counts) if c}


@dataclass
class RegressionReport:
    slope: float
    intercept: float
    lambda_hat: float
    t_range: tuple[int, int]
    points_kept: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "lambda_hat": self.lambda_hat,
            "one_minus_lambda_hat": 1.0 - self.lambda_hat,
            "t_range": list(self.t_range),
            "points_kept": self.points_kept,
        }


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def _state_maps(kernel: InducedKernel):
    m, n = kernel.m, kernel.n
    states = kernel.transient_states()
    code = np.full((m + 1) * (n + 1), -1, dtype=np.int64)
    for i, (k, l) in enumerate(states):
        code[k * (n + 1) + l] = i
    absorbing = np.zeros((m + 1) * (n + 1), dtype=np.bool_)
    absorbing[0] = True
    absorbing[(m + 1) * (n + 1) - 1] = True
    cum = np.cumsum(kernel.move_table(), axis=2).reshape((m + 1) * (n + 1), 4)
    return tuple(states), code, absorbing, cum


@numba.njit(cache=True)
def _fenwick_add(tree, i, delta):
    i += 1
    while i < tree.size:
        tree[i] += delta
        i += i & -i


@numba.njit(cache=True)
def _fenwick_find(tree, target):
    # smallest index whose prefix sum exceeds target
    pos = 0
    step = 1
    while step * 2 < tree.size:
        step *= 2
    while step:
        nxt = pos + step
        if nxt < tree.size and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step //= 2
    return pos


@numba.njit(cache=True)
def _restart_loop(rng, start, total_steps, burn_in, width, code, absorbing, cum, states_flat):
    n_states = states_flat.shape[0]
    tree = np.zeros(n_states + 1, dtype=np.int64)
    kept = np.zeros(n_states, dtype=np.int64)
    cur = start
    visits = 1
    _fenwick_add(tree, code[cur], 1)
    dk = (width, -width, 1, -1)
    for t in range(1, total_steps + 1):
        u = rng.random()
        nxt = cur
        for j in range(4):
            if u < cum[cur, j]:
                nxt = cur + dk[j]
                break
        if absorbing[nxt]:
            r = rng.integers(0, visits)
            idx = _fenwick_find(tree, r)
            nxt = states_flat[idx]
        cur = nxt
        _fenwick_add(tree, code[cur], 1)
        visits += 1
        if t > burn_in:
            kept[code[cur]] += 1
    return kept


def estimate_qsd_restart(
    kernel: InducedKernel,
    initial: tuple[int, int],
    total_steps: int,
    burn_in: int | None = None,
    seed: int | np.random.Generator | None = 0,
) -> EmpiricalMeasure:
    """Single-chain restart estimator.

    The occupation measure used for restarts counts every visited state
    from time 0 on; the returned estimate counts only steps after
    ``burn_in`` (default 1% of ``total_steps``).
    """
    if kernel.classify(*initial) != TRANSIENT:
        raise ValueError(f"initial state {initial} is not transient")
    if burn_in is None:
        burn_in = total_steps // 100
    if not total_steps > burn_in >= 0:
        raise ValueError("need total_steps > burn_in >= 0")
    states, code, absorbing, cum = _state_maps(kernel)
    width = kernel.n + 1
    flat = np.array([k * width + l for k, l in states], dtype=np.int64)
    start = initial[0] * width + initial[1]
    counts = _restart_loop(make_rng(seed), start, total_steps, burn_in, width, code, absorbing, cum, flat)
    return EmpiricalMeasure(states, counts)


@numba.njit(cache=True)
def _conditional_loop(rng, start, t_star, replicas, width, code, absorbing, cum, n_states):
    counts = np.zeros(n_states, dtype=np.int64)
    dk = (width, -width, 1, -1)
    for _ in range(replicas):
        cur = start
        alive = True
        for _t in range(t_star):
            u = rng.random()
            for j in range(4):
                if u < cum[cur, j]:
                    cur = cur + dk[j]
                    break
            if absorbing[cur]:
                alive = False
                break
        if alive:
            counts[code[cur]] += 1
    return counts


def estimate_qsd_conditional(
    kernel: InducedKernel,
    initial: tuple[int, int],
    t_star: int,
    replicas: int,
    seed: int | np.random.Generator | None = 0,
) -> EmpiricalMeasure:
    """Law at ``t_star`` of the replicas not yet absorbed."""
    if kernel.classify(*initial) != TRANSIENT:
        raise ValueError(f"initial state {initial} is not transient")
    if t_star < 0 or replicas < 1:
        raise ValueError("need t_star >= 0 and replicas >= 1")
    states, code, absorbing, cum = _state_maps(kernel)
    width = kernel.n + 1
    start = initial[0] * width + initial[1]
    counts = _conditional_loop(make_rng(seed), start, t_star, replicas, width, code, absorbing, cum, len(states))
    if counts.sum() == 0:
        raise NoSurvivorsError(f"0 of {replicas} replicas survived to t = {t_star}")
    return EmpiricalMeasure(states, counts)


def regress_lambda(tail, trim_fraction: float = 0.001) -> RegressionReport:
    """Survival rate from the slope of log P(tau > t) against t.

    Only times where the normalised tail lies strictly inside
    ``(trim_fraction, 1 - trim_fraction)`` are used, i.e. the extreme
    quantiles of the absorption-time sample are dropped. Plain least squares.
    """
    tail = np.asarray(tail, dtype=float)
    if tail.size == 0 or tail[0] <= 0:
        raise ValueError("tail must start with a positive value")
    if np.any(np.diff(tail) > 0):
        raise ValueError("tail must be nonincreasing")
    rel = tail / tail[0]
    keep = np.flatnonzero((rel > trim_fraction) & (rel < 1.0 - trim_fraction))
    if keep.size < 2:
        raise ValueError(f"only {keep.size} usable points after trimming")
    t = keep.astype(float)
    y = np.log(tail[keep])
    tm, ym = t.mean(), y.mean()
    slope = float(((t - tm) * (y - ym)).sum() / ((t - tm) ** 2).sum())
    intercept = float(ym - slope * tm)
    return RegressionReport(slope, intercept, float(np.exp(slope)), (int(keep[0]), int(keep[-1])), int(keep.size))
