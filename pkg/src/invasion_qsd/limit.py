"""Large-n limit of the QSD and the identities used to identify it.

As n grows the QSD of (k, l/n) approaches C(m,k) x^k (1-x)^(m-k) dx:
uniform in x, binomial in k given x, and Beta(k+1, m-k+1) in x given k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Func = Callable[[np.ndarray], np.ndarray]


def simpson(f: Func, a: float, b: float, intervals: int = 10_000) -> float:
    """Composite Simpson rule with a fixed (even) number of intervals."""
    if intervals % 2:
        intervals += 1
    x = np.linspace(a, b, intervals + 1)
    w = np.ones(intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((b - a) / (3 * intervals) * (w * f(x)).sum())


def _check_m(m: int) -> None:
    if m < 1:
        raise ValueError("m must be >= 1")


def limit_joint_density(m: int, k: int, x):
    """C(m,k) x^k (1-x)^(m-k)."""
    _check_m(m)
    if not 0 <= k <= m:
        raise ValueError(f"k = {k} outside 0..{m}")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    out = math.comb(m, k) * x**k * (1.0 - x) ** (m - k)
    return float(out) if out.ndim == 0 else out


def conditional_k_given_x(m: int, x: float) -> np.ndarray:
    """Binomial(m, x) mass function over k = 0..m."""
    return np.array([limit_joint_density(m, k, x) for k in range(m + 1)])


def conditional_x_given_k(m: int, k: int) -> Func:
    """Beta(k+1, m-k+1) density: the joint density divided by its x-integral 1/(m+1)."""
    _check_m(m)
    if not 0 <= k <= m:
        raise ValueError(f"k = {k} outside 0..{m}")
    return lambda x: (m + 1) * limit_joint_density(m, k, x)


def beta_cdf(k: int, m: int, x):
    """CDF of Beta(k+1, m-k+1) via P(Binomial(m+1, x) >= k+1)."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for j in range(k + 1, m + 2):
        total = total + math.comb(m + 1, j) * x**j * (1.0 - x) ** (m + 1 - j)
    return total


@dataclass(frozen=True)
class LimitDensity:
    m: int

    def __post_init__(self):
        _check_m(self.m)

    def joint(self, k: int, x):
        return limit_joint_density(self.m, k, x)

    def k_given_x(self, x: float) -> np.ndarray:
        return conditional_k_given_x(self.m, x)

    def x_given_k(self, k: int) -> Func:
        return conditional_x_given_k(self.m, k)


def _ks_discrete_vs(points: np.ndarray, weights: np.ndarray, cdf: Func) -> float:
    """Sup distance between a discrete law on sorted ``points`` and a continuous CDF."""
    w = weights / weights.sum()
    right = np.cumsum(w)
    left = right - w
    target = cdf(points)
    return float(max(np.abs(right - target).max(), np.abs(left - target).max()))


@dataclass
class LimitDiagnostics:
    ks_marginal: float
    ks_beta: list[float]
    tv_binomial: list[float]

    @property
    def max_ks_beta(self) -> float:
        return max(self.ks_beta)

    @property
    def max_tv_binomial(self) -> float:
        return max(self.tv_binomial)

    def as_dict(self) -> dict:
        return {"ks_marginal": self.ks_marginal, "ks_beta": self.ks_beta, "tv_binomial": self.tv_binomial}


def _as_grid(nu, m: int, n: int) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    if nu.shape == (m + 1, n + 1):
        return nu
    if nu.shape == ((m + 1) * (n + 1) - 4,):
        grid = np.zeros((m + 1, n + 1))
        mask = np.ones((m + 1, n + 1), dtype=bool)
        for k, l in ((0, 0), (m, n), (0, n), (m, 0)):
            mask[k, l] = False
        grid[mask] = nu  # row-major order matches the transient-state order
        return grid
    raise ValueError(f"nu has shape {nu.shape}; expected a grid or transient vector for m={m}, n={n}")


def compare_to_limit(nu, m: int, n: int, bins: int = 10) -> LimitDiagnostics:
    """Distances between a QSD on K_{m,n} (as a law of (k, l/n)) and the limit.

    * KS distance of the l/n marginal to Uniform[0, 1];
    * for each k, KS distance of l/n given k to Beta(k+1, m-k+1);
    * for each decile bin of x, total variation between the law of k given
      x in the bin and the matching mixture of Binomial(m, l/n).
    """
    grid = _as_grid(nu, m, n)
    grid = grid / grid.sum()
    x = np.arange(n + 1) / n
    marginal = grid.sum(axis=0)
    ks_marginal = _ks_discrete_vs(x, marginal, lambda t: t)
    ks_beta = []
    for k in range(m + 1):
        row = grid[k]
        ks_beta.append(_ks_discrete_vs(x, row, lambda t, k=k: beta_cdf(k, m, t)) if row.sum() > 0 else 0.0)
    which = np.minimum((x * bins).astype(int), bins - 1)
    binom = np.array([conditional_k_given_x(m, xi) for xi in x]).T  # (k, l)
    tv = []
    for b in range(bins):
        cols = which == b
        mass = marginal[cols].sum()
        if mass <= 0:
            tv.append(0.0)
            continue
        observed = grid[:, cols].sum(axis=1) / mass
        expected = (binom[:, cols] * marginal[cols]).sum(axis=1) / mass
        tv.append(0.5 * float(np.abs(observed - expected).sum()))
    return LimitDiagnostics(ks_marginal, ks_beta, tv)


def discretized_limit(m: int, n: int) -> np.ndarray:
    """Limit density evaluated on the (k, l/n) grid and normalised."""
    x = np.arange(n + 1) / n
    grid = np.array([limit_joint_density(m, k, x) for k in range(m + 1)])
    return grid / grid.sum()


@dataclass
class SLDecomposition:
    """Telescoping split of the QSD eigen-equation.

    ``S`` collects small-side moves and ``L`` large-side moves, so that
    (lam - 1) nu = S + L + (lam - 1)/2 on the absorbing pair.
    Arrays are indexed ``[k, l]``; ``D`` has an extra row for k = m + 1.
    """

    S: np.ndarray
    L: np.ndarray
    D: np.ndarray
    lam: float
    residual: float
    s_sums: np.ndarray = field(repr=False)
    l_sums: np.ndarray = field(repr=False)

    @property
    def s_telescoping(self) -> float:
        return float(np.abs(self.s_sums).max())

    @property
    def l_telescoping(self) -> float:
        return float(np.abs(self.l_sums).max())


def sl_decompose(nu, lam: float, m: int, n: int) -> SLDecomposition:
    grid = _as_grid(nu, m, n)
    # pad so that nu(k, l) = 0 for k in {-1, m+1}, l in {-1, n+1}
    pad = np.zeros((m + 3, n + 3))
    pad[1:-1, 1:-1] = grid

    def v(dk: int, dl: int) -> np.ndarray:
        return pad[1 + dk : 1 + dk + m + 1, 1 + dl : 1 + dl + n + 1]

    k = np.arange(m + 1, dtype=float)[:, None]
    l = np.arange(n + 1, dtype=float)[None, :]
    cs = 1.0 / ((m + n) * m)
    cl = 1.0 / ((m + n) * n)

    kk = np.arange(m + 2, dtype=float)[:, None]
    lower = np.zeros((m + 2, n + 1))
    lower[1:] = grid
    here = np.zeros((m + 2, n + 1))
    here[: m + 1] = grid
    D = cs * (lower * l * (m - kk + 1) - here * (n - l) * kk)
    S = D[:-1] - D[1:]
    L = cl * k * (v(0, -1) * (n - l + 1) - grid * (n - l)) + cl * (m - k) * (v(0, 1) * (l + 1) - grid * l)

    delta = np.zeros((m + 1, n + 1))
    delta[0, 0] = delta[m, n] = 1.0
    resid = (lam - 1.0) * grid - S - L - 0.5 * (lam - 1.0) * delta
    return SLDecomposition(S, L, D, lam, float(np.abs(resid).max()), S.sum(axis=0), L.sum(axis=1))


def stein_check(f: Func, d2f: Func, marginal=None, intervals: int = 10_000) -> tuple[float, float, float]:
    """Both sides of  int x(1-x) f''(x) + 2 f(x) d mu = f(0) + f(1).

    ``marginal=None`` integrates against Uniform[0, 1] with Simpson's rule;
    otherwise ``marginal`` holds weights on the grid l/n, l = 0..n.
    """

    def integrand(x):
        return x * (1.0 - x) * d2f(x) + 2.0 * f(x)

    if marginal is None:
        lhs = simpson(integrand, 0.0, 1.0, intervals)
    else:
        w = np.asarray(marginal, dtype=float)
        w = w / w.sum()
        x = np.arange(w.size) / (w.size - 1)
        lhs = float((integrand(x) * w).sum())
    rhs = float(f(np.array(0.0)) + f(np.array(1.0)))
    return lhs, rhs, abs(lhs - rhs)


def _v1(t):
    return t * t - 1.0


def _log_ratio(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log1p(-t) - np.log1p(t)


def _v2(t):
    t = np.asarray(t, dtype=float)
    inner = np.abs(t) < 1.0
    # (t^2 - 1) log((1-t)/(1+t)) -> 0 at t = +-1
    term = np.where(inner, (t * t - 1.0) * _log_ratio(np.where(inner, t, 0.0)), 0.0)
    return 2.0 * t + term


class OdeSolution:
    """Bounded solution of x(1-x) f'' + 2 f = F on [0, 1].

    Built in the variable t = 2x - 1 from the homogeneous pair
    v1 = t^2 - 1 and v2 = 2t + (t^2 - 1) log((1-t)/(1+t)), whose Wronskian
    is the constant -4. Variation of parameters from t = 0 gives
    c1' = -v2 G / (4 v1) and c2' = G / 4.
    """

    def __init__(self, F: Func, support: tuple[float, float], intervals: int = 2000):
        a, b = support
        if not 0.0 < a < b < 1.0:
            raise ValueError("support of F must be a closed interval inside (0, 1)")
        self.F = F
        self.support = (a, b)
        self.intervals = intervals
        self._ta, self._tb = 2 * a - 1, 2 * b - 1

    def _G(self, t):
        return self.F((np.asarray(t) + 1.0) / 2.0)

    def _c1_rate(self, t):
        return -_v2(t) * self._G(t) / (4.0 * _v1(t))

    def _c2_rate(self, t):
        return self._G(t) / 4.0

    def _integral_from_zero(self, rate: Func, t: np.ndarray) -> np.ndarray:
        # integrate over the support only; rate vanishes elsewhere
        lo = np.clip(0.0, self._ta, self._tb)
        hi = np.clip(t, self._ta, self._tb)
        steps = self.intervals
        s = np.linspace(0.0, 1.0, steps + 1)
        w = np.ones(steps + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        nodes = lo + (hi - lo)[:, None] * s[None, :]
        vals = rate(nodes)
        return (hi - lo) / (3 * steps) * (vals * w).sum(axis=1)

    def coefficients(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = 2.0 * x - 1.0
        return t, self._integral_from_zero(self._c1_rate, t), self._integral_from_zero(self._c2_rate, t)

    def __call__(self, x):
        t, c1, c2 = self.coefficients(x)
        return c1 * _v1(t) + c2 * _v2(t)

    def derivative(self, x):
        """f'(x) = 2 (c1 v1' + c2 v2')."""
        t, c1, c2 = self.coefficients(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            dv2 = 4.0 + 2.0 * t * _log_ratio(t)
        return 2.0 * (c1 * 2.0 * t + c2 * dv2)

    def weighted_second_derivative(self, x):
        """x(1-x) f''(x), finite up to the endpoints.

        f'' = 4 v'' with v'' = c1 v1'' + c2 v2'' + G / (1 - t^2), and
        (1 - t^2) v2'' = 2 (1 - t^2) log((1-t)/(1+t)) - 4t.
        """
        t, c1, c2 = self.coefficients(x)
        one_m = 1.0 - t * t
        inner = one_m > 0
        logterm = np.where(inner, one_m * _log_ratio(np.where(inner, t, 0.0)), 0.0)
        return one_m * 2.0 * c1 + c2 * (2.0 * logterm - 4.0 * t) + self._G(t) * inner

    def residual(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.weighted_second_derivative(x) + 2.0 * self(x) - self.F(x)


def solve_ode(F: Func, support: tuple[float, float], intervals: int = 2000) -> OdeSolution:
    return OdeSolution(F, support, intervals)


@dataclass
class TaylorCheck:
    lhs: float
    rhs: float
    gap: float


def taylor_identity_check(nu, lam: float, m: int, n: int, f: Func, df: Func, d2f: Func) -> TaylorCheck:
    """Second-order expansion of the large-side moves, tested on an exact QSD.

    lhs = (lam - 1) int f d nu;
    rhs = drift term / ((m+n) n) + diffusion term / (2 (m+n) n^2)
          + (lam - 1)/2 (f(0) + f(1)).
    The gap is the remainder of the expansion.
    """
    grid = _as_grid(nu, m, n)
    x = np.arange(n + 1) / n
    k = np.arange(m + 1, dtype=float)[:, None]
    lhs = (lam - 1.0) * float((grid * f(x)[None, :]).sum())
    drift = float((grid * (k * (1 - x) - (m - k) * x) * df(x)[None, :]).sum())
    diffusion = float((grid * (k * (1 - x) + (m - k) * x) * d2f(x)[None, :]).sum())
    boundary = 0.5 * (lam - 1.0) * float(f(np.array(0.0)) + f(np.array(1.0)))
    rhs = drift / ((m + n) * n) + diffusion / (2.0 * (m + n) * n * n) + boundary
    return TaylorCheck(lhs, rhs, abs(lhs - rhs))
