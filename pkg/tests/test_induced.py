from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invasion_qsd.dynamics import Graph, bipartite_config
from invasion_qsd.errors import SizeCapError
from invasion_qsd.induced import (
    ABSORBING,
    INACCESSIBLE,
    TRANSIENT,
    InducedKernel,
    binomial_weight,
    check_sizes,
    induced_absorption_times,
    lumpability_check,
    project,
    step_induced,
    transition_probs,
)

sizes = st.integers(min_value=1, max_value=6).flatmap(
    lambda m: st.tuples(st.just(m), st.integers(min_value=max(m, 3 if m == 1 else 2), max_value=40))
)


def test_interior_example_k23():
    p = InducedKernel(2, 3).transition_probs_exact(1, 1)
    assert p == (Fraction(1, 10), Fraction(1, 5), Fraction(2, 15), Fraction(1, 15), Fraction(1, 2))


def test_gamma_state_never_stays():
    p = transition_probs(InducedKernel(2, 3), (2, 0))
    assert p.stay == 0.0
    assert p.down_k == pytest.approx(0.6)
    assert p.up_l == pytest.approx(0.4)


@settings(max_examples=80, deadline=None)
@given(sizes)
def test_rows_are_exact_distributions(mn):
    m, n = mn
    kern = InducedKernel(m, n)
    for k in range(m + 1):
        for l in range(n + 1):
            assert sum(kern.transition_probs_exact(k, l)) == 1


@settings(max_examples=40, deadline=None)
@given(sizes)
def test_yes_no_symmetry(mn):
    # relabelling yes <-> no maps (k, l) to (m-k, n-l) and swaps up with down
    m, n = mn
    kern = InducedKernel(m, n)
    for k in range(m + 1):
        for l in range(n + 1):
            a = kern.transition_probs_exact(k, l)
            b = kern.transition_probs_exact(m - k, n - l)
            assert (a[0], a[1], a[2], a[3], a[4]) == (b[1], b[0], b[3], b[2], b[4])


def test_absorbing_rows():
    kern = InducedKernel(2, 3)
    assert kern.transition_probs(0, 0) == (0.0, 0.0, 0.0, 0.0, 1.0)
    assert kern.transition_probs(2, 3) == (0.0, 0.0, 0.0, 0.0, 1.0)


def test_classification():
    kern = InducedKernel(2, 5)
    assert kern.classify(0, 0) == kern.classify(2, 5) == ABSORBING
    assert kern.classify(0, 5) == kern.classify(2, 0) == INACCESSIBLE
    assert kern.classify(1, 0) == TRANSIENT
    assert len(kern.transient_states()) == 3 * 6 - 4


def test_no_transient_state_feeds_gamma():
    kern = InducedKernel(3, 7)
    table = kern.move_table()
    for k, l in kern.transient_states():
        for j, (dk, dl) in enumerate(((1, 0), (-1, 0), (0, 1), (0, -1))):
            if (k + dk, l + dl) in ((0, 7), (3, 0)):
                assert table[k, l, j] == 0.0


@pytest.mark.parametrize("m,n", [(1, 2), (0, 5), (3, 2), (1, 1)])
def test_size_condition(m, n):
    with pytest.raises(ValueError):
        check_sizes(m, n)


def test_lumpability_small_cases():
    for m, n in ((1, 3), (2, 3)):
        ok, defect = lumpability_check(m, n)
        assert ok and defect <= 1e-14


def test_lumpability_detects_a_corrupted_kernel():
    class Shifted(InducedKernel):
        def transition_probs(self, k, l):
            p = super().transition_probs(k, l)
            if (k, l) == (1, 1):
                return p._replace(up_k=p.up_k + 1e-3, stay=p.stay - 1e-3)
            return p

    ok, defect = lumpability_check(2, 3, kernel=Shifted(2, 3))
    assert not ok and defect >= 9e-4


def test_lumpability_cap():
    with pytest.raises(SizeCapError):
        lumpability_check(5, 10, size_cap=1000)


def test_binomial_weights():
    assert binomial_weight(2, 3, (1, 2)) == 6
    assert binomial_weight(2, 3, (0, 0)) == binomial_weight(2, 3, (2, 3)) == 1
    assert sum(binomial_weight(4, 9, (k, l)) for k in range(5) for l in range(10)) == 2**13
    big = binomial_weight(30, 200, (15, 100))
    assert big > 2**63  # exact integer, no overflow


def test_project_counts_each_side():
    g = Graph.complete_bipartite(3, 5)
    assert project(g, bipartite_config(g, 2, 4)) == (2, 4)
    k23 = Graph.complete_bipartite(2, 3)
    assert project(k23, [1, 0, 1, 1, 0]) == (1, 2)
    assert project(k23, [0] * 5) == (0, 0)
    assert project(k23, [1] * 5) == (2, 3)
    with pytest.raises(ValueError):
        project(Graph.path(4), [0, 1, 0, 1])


def test_step_frequencies():
    kern = InducedKernel(2, 3)
    rng = np.random.default_rng(4)
    draws = 10**6
    counts = {}
    for _ in range(draws):
        s = step_induced(kern, (1, 1), rng)
        counts[s] = counts.get(s, 0) + 1
    p = kern.transition_probs(1, 1)
    expect = {(2, 1): p.up_k, (0, 1): p.down_k, (1, 2): p.up_l, (1, 0): p.down_l, (1, 1): p.stay}
    for state, q in expect.items():
        sd = np.sqrt(q * (1 - q) / draws)
        assert abs(counts.get(state, 0) / draws - q) < 4 * sd


def test_step_is_deterministic():
    kern = InducedKernel(3, 8)
    walk = []
    for seed in (5, 5):
        rng = np.random.default_rng(seed)
        state, path = (1, 4), []
        for _ in range(200):
            state = kern.step(*state, rng)
            path.append(state)
        walk.append(path)
    assert walk[0] == walk[1]


def test_absorbing_step_is_fixed():
    kern = InducedKernel(2, 3)
    assert kern.step(0, 0, 1) == (0, 0)
    assert kern.step(2, 3, 1) == (2, 3)


def test_induced_times_thread_invariant():
    kern = InducedKernel(2, 11)
    a = induced_absorption_times(kern, (1, 6), 5000, seed=2, batch_size=1200)
    b = induced_absorption_times(kern, (1, 6), 5000, seed=2, batch_size=1200, threads=4)
    assert np.array_equal(a, b)


def test_csv_layout():
    text = InducedKernel(1, 3).to_csv().splitlines()
    assert text[0] == "k,l,up_k,down_k,up_l,down_l,stay"
    assert len(text) == 1 + 2 * 4
