import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import block_chain, random_chain
from lund.diagnostics import (Partition, bound_curve, conductance_bruteforce, default_t_grid,
                              gamma, gamma_from_difference, lambda_star, mesoscopic_constants,
                              mesoscopic_report, relative_pointwise_distance,
                              stochastic_complement, telescoping_identity_check,
                              telescoping_residual, theorem11_verify, time_window)
from lund.errors import InvalidParameterError, UnsupportedSizeError
from lund.markov_graph import MarkovChain, build_chain, lazify
from lund.spectral import eig_markov

P4 = np.array([[0.5, 0.3, 0.2, 0.0],
               [0.3, 0.4, 0.1, 0.2],
               [0.2, 0.1, 0.4, 0.3],
               [0.0, 0.2, 0.3, 0.5]])


def test_four_state_complement_by_hand():
    ch = MarkovChain.from_transition(P4)
    red = stochastic_complement(ch, Partition.from_labels([1, 1, 2, 2]))
    # (I - P22)^{-1} = [[.5, .3], [.3, .6]] / .21, and symmetrically for block 1
    hand = np.array([[25, 17], [17, 25]]) / 42
    np.testing.assert_allclose(red.complements[0], hand, atol=1e-14)
    np.testing.assert_allclose(red.complements[1], hand, atol=1e-14)
    np.testing.assert_allclose(red.S_inf[:2, :2], 0.5)
    assert np.all(red.S_inf[:2, 2:] == 0)


def test_singleton_blocks():
    ch = random_chain(5, 0)
    red = stochastic_complement(ch, Partition.from_labels(np.arange(1, 6)))
    for S in red.complements:
        assert S.shape == (1, 1) and S[0, 0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(red.S_inf, np.eye(5), atol=1e-12)


def _reducible(sizes, seed):
    rng = np.random.default_rng(seed)
    n = sum(sizes)
    P = np.zeros((n, n))
    pi = np.zeros(n)
    start = 0
    for m in sizes:
        A = rng.uniform(0.1, 1, size=(m, m))
        A = A + A.T
        P[start:start + m, start:start + m] = A / A.sum(axis=1, keepdims=True)
        pi[start:start + m] = A.sum(axis=1) / A.sum() * m / n
        start += m
    labels = np.repeat(np.arange(1, len(sizes) + 1), sizes)
    return MarkovChain.from_transition(P, pi, require_irreducible=False), labels


def test_exactly_reducible_complement_is_p():
    ch, labels = _reducible([3, 4], 1)
    red = stochastic_complement(ch, Partition.from_labels(labels))
    np.testing.assert_array_equal(red.S, ch.dense())
    delta, kappa, lam = mesoscopic_constants(ch, red)
    assert delta == 0.0
    t = np.array([1, 10, 100])
    np.testing.assert_allclose(bound_curve(t, delta, kappa, lam), kappa * lam**t.astype(float))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 4), st.integers(2, 8), st.floats(1e-4, 0.3), st.integers(0, 10**6))
def test_complement_invariants(K, m, eps, seed):
    ch, labels = block_chain([m] * K, eps, seed)
    red = stochastic_complement(ch, Partition.from_labels(labels))
    np.testing.assert_allclose(red.S.sum(axis=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(red.S_inf.sum(axis=1), 1.0, atol=1e-12)
    # block equilibria have disjoint supports
    supp = red.S_inf > 0
    for k in range(1, K + 1):
        rows = labels == k
        assert not supp[np.ix_(rows, ~rows)].any()
    # a Neumann series cross-check is available on tiny chains
    if ch.n <= 10:
        stochastic_complement(ch, Partition.from_labels(labels), neumann_check=True)


def test_bound_on_fifty_state_chain():
    ch, labels = block_chain([25, 25], 1e-3, 8)
    part = Partition.from_labels(labels)
    rep = mesoscopic_report(ch, part, [1, 2, 5, 10, 30, 100, 300, 10**3, 10**4, 10**5, 10**7])
    assert np.all(rep.empirical_curve <= rep.bound_curve * (1 + 1e-9) + 1e-12)
    assert np.all((rep.gamma_curve >= 1) & (rep.gamma_curve <= math.sqrt(50)))
    doc = json.loads(rep.dumps())
    assert doc["K"] == 2 and len(doc["bound_curve"]) == 11


def test_report_rejects_empty_grid():
    ch, labels = block_chain([3, 3], 0.1, 0)
    with pytest.raises(InvalidParameterError):
        mesoscopic_report(ch, Partition.from_labels(labels), [])


def test_default_grid():
    g = default_t_grid()
    assert g[0] == 1 and g[-1] == 10**16 and np.all(np.diff(g) > 0)


def test_gamma_uniform_and_one_hot():
    n = 9
    assert gamma_from_difference(np.full((1, n), 0.3) * np.sign(np.arange(n) - 4.5)) == pytest.approx(1.0)
    e = np.zeros((1, n))
    e[0, 4] = -0.7
    assert gamma_from_difference(e) == pytest.approx(3.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 50), st.integers(0, 10**6))
def test_balance_identity(n, seed):
    v = np.random.default_rng(seed).normal(size=n)
    c = gamma_from_difference(v[None, :])
    assert np.linalg.norm(v) == pytest.approx(c / math.sqrt(n) * np.abs(v).sum(), rel=1e-10)
    assert 1 - 1e-12 <= c <= math.sqrt(n) + 1e-12


def test_gamma_range_on_chain():
    ch, labels = block_chain([6, 6], 0.01, 3)
    red = stochastic_complement(ch, Partition.from_labels(labels))
    for t in (1, 5, 50, 5000):
        assert 1 <= gamma(ch, red, t) <= math.sqrt(12)


def test_relative_pointwise_distance():
    assert relative_pointwise_distance(build_chain(np.ones((2, 2))), 1) == 0.0
    ch = random_chain(20, 4)
    assert relative_pointwise_distance(ch, 2**16) <= 1e-6
    pi_min = ch.stationary.min()
    ls = lambda_star(ch)
    for t in (1, 2, 3, 5, 8):
        assert relative_pointwise_distance(ch, t) <= ls**t / pi_min * (1 + 1e-9)


def test_two_state_conductance():
    P = np.array([[0.7, 0.3], [0.6, 0.4]])
    ch = MarkovChain.from_transition(P)
    pi = ch.stationary
    assert conductance_bruteforce(ch) == pytest.approx(pi[0] * 0.3 / min(pi), rel=1e-12)
    assert conductance_bruteforce(ch) == pytest.approx(0.6)


def test_conductance_limits():
    with pytest.raises(UnsupportedSizeError):
        conductance_bruteforce(random_chain(21, 0))


def _conductance_by_loops(ch):
    P, pi, n = ch.dense(), ch.stationary, ch.n
    best = math.inf
    for code in range(1, 2**n - 1):
        S = [i for i in range(n) if code >> i & 1]
        T = [i for i in range(n) if not code >> i & 1]
        flow = sum(pi[i] * P[i, j] for i in S for j in T)
        best = min(best, flow / min(pi[S].sum(), pi[T].sum()))
    return best


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6))
def test_cheeger_and_mixing_bounds(n, seed):
    ch = random_chain(n, seed)
    phi = conductance_bruteforce(ch)
    assert phi == pytest.approx(_conductance_by_loops(ch), rel=1e-10)
    lam2 = eig_markov(ch, n).eigenvalues[1]
    assert phi**2 / 2 <= 1 - lam2 + 1e-12
    assert 1 - lam2 <= 2 * phi + 1e-12
    lz = lazify(ch)
    phi_l = conductance_bruteforce(lz)
    for t in (1, 3, 10):
        assert relative_pointwise_distance(lz, t) <= (1 - phi_l**2 / 2) ** t / lz.stationary.min() + 1e-12


@pytest.mark.parametrize("t", [1, 2, 17])
def test_telescoping_identity(t):
    n = 6 if t == 2 else 12
    ch, labels = block_chain([n // 2, n - n // 2], 0.05, t)
    red = stochastic_complement(ch, Partition.from_labels(labels))
    assert telescoping_residual(ch, red, t) <= 1e-10
    assert telescoping_identity_check(ch, red, t)


def test_telescoping_rejects_large_t():
    ch, labels = block_chain([3, 3], 0.05, 0)
    red = stochastic_complement(ch, Partition.from_labels(labels))
    with pytest.raises(InvalidParameterError):
        telescoping_residual(ch, red, 65)


def test_power_difference_within_t_delta():
    ch, labels = block_chain([5, 7], 0.01, 9)
    red = stochastic_complement(ch, Partition.from_labels(labels))
    delta, _, _ = mesoscopic_constants(ch, red)
    P, S = ch.dense(), red.S
    for t in (1, 4, 16, 64):
        diff = np.linalg.matrix_power(P, t) - np.linalg.matrix_power(S, t)
        assert np.abs(diff).sum(axis=1).max() <= t * delta * (1 + 1e-9)


def test_time_window():
    lo, hi = time_window(1e-6, 10.0, 0.5, 1e-2)
    assert lo == pytest.approx(math.log(2000) / math.log(2))
    assert hi == pytest.approx(5e3)
    assert time_window(0.0, 10.0, 0.5, 1e-2)[1] == math.inf


def test_distance_bounds_outside_window_are_a_notice():
    ch, labels = block_chain([5, 5], 0.05, 1)
    r = theorem11_verify(ch, Partition.from_labels(labels), 1, 1e-6)
    assert not r.in_window and r.holds_in is None and "outside" in r.notice


def test_within_bound_and_corrected_between_bound():
    ch, labels = block_chain([10, 10], 1e-6, 2)
    part = Partition.from_labels(labels)
    red = stochastic_complement(ch, part)
    d, k, lam = mesoscopic_constants(ch, red)
    eps = 1e-3
    lo, hi = time_window(d, k, lam, eps)
    t = int(math.sqrt(max(lo, 1) * hi))
    r = theorem11_verify(ch, part, t, eps, reduced=red)
    assert r.in_window and r.holds_in and r.slack_in > 0
    assert r.holds_btw_l2
    assert r.sup_norm < eps


def test_exactly_reducible_limits():
    # rank-one blocks: P^t = S_inf for all t >= 1
    pi1 = np.array([0.2, 0.3, 0.5])
    pi2 = np.array([0.25, 0.75])
    P = np.zeros((5, 5))
    P[:3, :3] = pi1
    P[3:, 3:] = pi2
    ch = MarkovChain.from_transition(P, np.r_[pi1, pi2] / 2, require_irreducible=False)
    part = Partition.from_labels([1, 1, 1, 2, 2])
    r = theorem11_verify(ch, part, 3, 1e-12)
    assert r.d_in == 0.0
    assert r.d_btw == pytest.approx(math.sqrt(pi1 @ pi1 + pi2 @ pi2), rel=1e-14)
    assert r.holds_btw_l2
