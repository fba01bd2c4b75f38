from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invasion_qsd.dual import (
    CoalescingSystem,
    PairState,
    ReverseSampler,
    duality_trace,
    expected_absorption_linear,
    expected_absorption_times,
    lambda_asymptotic,
    lambda_closed_m1,
    lambda_cmc_numeric,
    lambda_voter,
    pair_matrix,
    reverse_step,
    sample_sigma_many,
)
from invasion_qsd.dynamics import Graph, rho_invasion, simulate, tail_from_times
from invasion_qsd.estimators import regress_lambda
from invasion_qsd.linalg import solve
from invasion_qsd.spectral import exact_qsd


def test_pair_matrix_k23():
    pm = pair_matrix(2, 3)
    assert np.allclose(pm.p * 30, [[22, 0, 8], [0, 12, 18], [6, 2, 17]], atol=1e-12)
    assert np.allclose(pm.pbar, [[-8, 0, 8], [0, -18, 18], [6, 2, -13]], atol=1e-12)
    # coalescence only from SPLIT
    assert [sum(row) for row in pm.p_exact] == [1, 1, Fraction(25, 30)]


@pytest.mark.parametrize("m,n", [(2, 2), (3, 3), (7, 7)])
def test_pair_matrix_symmetric_sides(m, n):
    p = pair_matrix(m, n).p
    assert p[0, 0] == p[1, 1] and p[0, 2] == p[1, 2] and p[2, 0] == p[2, 1]


def test_lambda_cubic_oracle():
    p = pair_matrix(2, 3).p
    roots = np.roots(np.poly(p))
    assert lambda_cmc_numeric(2, 3) == pytest.approx(max(roots.real), abs=1e-13)


@pytest.mark.parametrize("n", [3, 10, 100, 1000])
def test_m1_closed_form(n):
    assert abs(lambda_closed_m1(n) - lambda_cmc_numeric(1, n)) <= 1e-12


def test_m1_leading_order():
    n = 100
    gap = 1 - lambda_cmc_numeric(1, n)
    assert gap / (2 / ((3 + n * n) * n)) == pytest.approx(1.0, rel=1e-4)
    assert abs(lambda_asymptotic(1, n) - lambda_closed_m1(n)) <= 2 / n * gap


def test_reference_values():
    assert lambda_closed_m1(3) == pytest.approx(1 - (12 - 112**0.5) / 24, abs=1e-15)
    # the 8-digit decimal in circulation is 1.2e-8 below the surd above
    assert lambda_closed_m1(3) == pytest.approx(0.94095854, abs=2e-8)
    assert lambda_asymptotic(2, 11) == pytest.approx(1 - 4 / 1573, abs=1e-15)
    assert lambda_asymptotic(2, 11) == pytest.approx(0.99745709, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30).flatmap(lambda m: st.tuples(st.just(m), st.integers(max(m, 3), 300))))
def test_split_row_deficit_and_lambda_bounds(mn):
    m, n = mn
    pm = pair_matrix(m, n)
    assert sum(pm.p_exact[2]) == 1 - Fraction(1, m * n)
    if m > 1:
        assert sum(pm.p_exact[0]) == sum(pm.p_exact[1]) == 1
    lam = lambda_cmc_numeric(m, n)
    assert 1 - 2 / (m * n) < lam < 1


@pytest.mark.parametrize("m", [2, 3, 5, 20])
def test_voter_matches_invasion_on_balanced_graphs(m):
    assert abs(lambda_voter(m, m) - lambda_cmc_numeric(m, m)) <= 1e-12


def test_asymptotic_rate():
    n = 400
    ratio = (1 - lambda_cmc_numeric(3, n)) / (1 - lambda_asymptotic(3, n))
    assert ratio == pytest.approx(1.0, rel=0.02)


def test_mean_coalescence_times():
    f = expected_absorption_times(2, 3)
    assert np.allclose(f, expected_absorption_linear(2, 3), rtol=1e-12)
    assert f == pytest.approx((0.49722222, 0.42777778, 0.37222222), abs=1e-7)
    with pytest.raises(ValueError):
        expected_absorption_times(1, 5)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12).flatmap(lambda m: st.tuples(st.just(m), st.integers(m, 60))))
def test_mean_times_equal_linear_solve(mn):
    m, n = mn
    assert np.allclose(expected_absorption_times(m, n), expected_absorption_linear(m, n), rtol=1e-10)


def test_split_time_scale():
    m, n = 2, 10_000
    assert expected_absorption_times(m, n)[2] == pytest.approx(n / (2 * m * m), rel=0.05)


def test_target_marginal_star():
    rho = rho_invasion(Graph.complete_bipartite(1, 3))
    assert np.allclose(rho.target_marginal(), [3 / 4, 1 / 12, 1 / 12, 1 / 12], atol=1e-15)


def test_reverse_sampler_frequencies():
    g = Graph.complete_bipartite(2, 3)
    rho = rho_invasion(g)
    sampler = ReverseSampler(rho)
    rng = np.random.default_rng(9)
    draws = 20_000
    counts = {}
    for _ in range(draws):
        u, v = sampler.sample(rng)
        counts[(v, u)] = counts.get((v, u), 0) + 1
    for edge, w in rho.as_dict().items():
        assert abs(counts.get(edge, 0) / draws - w) < 4 * np.sqrt(w / draws)


def test_single_trajectory_follows_kappa():
    # one reverse step from x: jump to y with probability rho(y, x), else stay
    g = Graph.complete_bipartite(2, 3)
    rho = rho_invasion(g)
    sampler = ReverseSampler(rho)
    draws = 10**6
    u, v = sampler.sample_many(np.random.default_rng(12), draws)
    for x in range(g.vertex_count):
        nxt = np.where(u == x, v, x)
        freq = np.bincount(nxt, minlength=g.vertex_count) / draws
        kappa = np.array([rho.weight(y, x) for y in range(g.vertex_count)])
        kappa[x] = 1 - rho.target_marginal()[x]
        sd = np.sqrt(kappa * (1 - kappa) / draws)
        assert np.all(np.abs(freq - kappa) <= 4 * sd + 1e-15)


def test_coalesced_system_is_fixed():
    g = Graph.complete_bipartite(2, 3)
    sys = CoalescingSystem(np.full(5, 3), 7)
    sampler = ReverseSampler(rho_invasion(g))
    rng = np.random.default_rng(0)
    for _ in range(50):
        nxt = reverse_step(sys, sampler, rng)
        assert nxt.coalesced and nxt.time == sys.time + 1
        sys = nxt


def test_pathwise_duality_sample():
    g = Graph.complete_bipartite(3, 5)
    rho = rho_invasion(g)
    rng = np.random.default_rng(3)
    for _ in range(200):
        init = rng.integers(0, 2, g.vertex_count)
        T = int(rng.integers(0, 120))
        traj = simulate(g, rho, init, T, seed=rng)
        for u in range(g.vertex_count):
            assert traj.final_config[u] == init[duality_trace(traj.edge_log, u, T)]


def test_duality_trace_small_cases():
    log = np.array([[4, 1]])
    assert duality_trace(log, 2, 0) == 2
    assert duality_trace(log, 1, 1) == 4
    assert duality_trace(log, 3, 1) == 3


def test_duality_trace_rejects_short_log():
    with pytest.raises(ValueError):
        duality_trace(np.zeros((3, 2), dtype=int), 0, 4)


def test_coalescence_is_monotone():
    g = Graph.complete_bipartite(2, 4)
    sampler = ReverseSampler(rho_invasion(g))
    rng = np.random.default_rng(0)
    sys = CoalescingSystem.start(g)
    sizes = [len(sys.blocks())]
    while not sys.coalesced:
        sys = reverse_step(sys, sampler, rng)
        blocks = sys.blocks()
        assert len(blocks) <= sizes[-1]
        sizes.append(len(blocks))
    assert sizes[0] == 6 and sizes[-1] == 1


def test_met_chains_stay_together():
    g = Graph.complete_bipartite(3, 4)
    sampler = ReverseSampler(rho_invasion(g))
    rng = np.random.default_rng(1)
    sys = CoalescingSystem.start(g)
    met = np.zeros((7, 7), dtype=bool)
    for _ in range(400):
        sys = reverse_step(sys, sampler, rng)
        same = sys.positions[:, None] == sys.positions[None, :]
        assert not np.any(met & ~same)
        met |= same


def test_sigma_mean_from_split():
    m, n = 2, 11
    p = pair_matrix(m, n).p
    exact = solve(np.eye(3) - p, np.ones(3))[PairState.SPLIT]
    # discrete time runs (m+n)nm times slower than pbar
    assert exact == pytest.approx(expected_absorption_times(m, n)[2] * (m + n) * n * m, rel=1e-12)
    draws = sample_sigma_many(m, n, PairState.SPLIT, 50_000, 8)
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - exact) < 3 * se


def test_sigma_tail_rate():
    m, n = 2, 11
    tail = tail_from_times(sample_sigma_many(m, n, PairState.SPLIT, 100_000, 1))
    rep = regress_lambda(tail)
    gap = 1 - lambda_cmc_numeric(m, n)
    assert abs((1 - rep.lambda_hat) / gap - 1) < 0.1


def test_sigma_from_coalesced_is_zero():
    assert sample_sigma_many(2, 5, PairState.COALESCED, 4, 0).tolist() == [0, 0, 0, 0]


def test_sigma_m1_rejects_small_pair():
    with pytest.raises(ValueError):
        sample_sigma_many(1, 5, PairState.BOTH_SMALL, 10, 0)


@settings(max_examples=12, deadline=None)
@given(st.integers(1, 6).flatmap(lambda m: st.tuples(st.just(m), st.integers(max(m, 3), 600 // (m + 1) - 1))))
def test_same_lambda_both_routes(mn):
    m, n = mn
    _, perron = exact_qsd(m, n)
    assert abs(perron.lam - lambda_cmc_numeric(m, n)) <= 1e-10
