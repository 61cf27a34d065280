import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_chain, two_blobs
from lund.density import DensityEstimate
from lund.diffusion import DiffusionOperator, pairwise_diffusion_oracle
from lund.errors import DegenerateScoreError, EstimationError, InvalidParameterError
from lund.evaluation import score
from lund.lund_core import (LundConfig, estimate_modes_and_k, label, lund, lund_from_parts,
                            nearest_higher_density, prepare)
from lund.point_store import EuclideanMetric, PointCloud
from lund.spectral import eig_markov
from lund.synth_data import DatasetSpec, generate

SCORES = np.array([10, 8, 6, 0.1, 0.09, 0.08])


def test_ratio_argmax_example():
    k, modes = estimate_modes_and_k(SCORES, LundConfig(t=1))
    assert k == 3 and modes.tolist() == [0, 1, 2]


@pytest.mark.parametrize("tau", [5.0, 0.2])
def test_tau_threshold_example(tau):
    k, _ = estimate_modes_and_k(SCORES, LundConfig(t=1, k_estimator="tau_threshold", tau=tau))
    assert k == 3


def test_tau_threshold_takes_first_crossing():
    s = np.array([10, 1, 0.5, 0.001])
    k, _ = estimate_modes_and_k(s, LundConfig(t=1, k_estimator="tau_threshold", tau=5))
    assert k == 1
    k, _ = estimate_modes_and_k(s, LundConfig(t=1))
    assert k == 3


def test_ratio_ties_go_to_smallest_k():
    k, _ = estimate_modes_and_k(np.array([8.0, 4.0, 2.0, 1.0]), LundConfig(t=1))
    assert k == 1


def test_estimator_errors():
    with pytest.raises(EstimationError):
        estimate_modes_and_k(SCORES, LundConfig(t=1, k_estimator="tau_threshold", tau=100))
    with pytest.raises(DegenerateScoreError):
        estimate_modes_and_k(np.zeros(4), LundConfig(t=1))
    with pytest.raises(DegenerateScoreError):
        estimate_modes_and_k(np.zeros(4), LundConfig(t=1, k_estimator="tau_threshold", tau=2))
    with pytest.raises(InvalidParameterError):
        LundConfig(t=1, k_estimator="tau_threshold")
    with pytest.raises(InvalidParameterError):
        LundConfig(t=1.5)


def test_zero_scores_give_infinite_ratio():
    s = np.array([3.0, 1.0, 0.0, 0.0, 2.9])
    k, modes = estimate_modes_and_k(s, LundConfig(t=1))
    assert k == 3 and modes.tolist() == [0, 4, 1]
    k, _ = estimate_modes_and_k(s, LundConfig(t=1, k_estimator="tau_threshold", tau=5))
    assert k == 3


def test_floor_caps_sub_resolution_ratios():
    # three clear modes, then one resolved score, then rounding noise
    s = np.array([1.0, 0.9, 0.8, 1e-11, 1e-40, 1e-90])
    assert estimate_modes_and_k(s, LundConfig(t=1))[0] == 5
    floor = np.full(6, 1e-12)
    assert estimate_modes_and_k(s, LundConfig(t=1), floor)[0] == 3
    # zero scores over a positive floor are finite ratios too
    s0 = np.array([1.0, 0.9, 1e-9, 0.0, 0.0])
    assert estimate_modes_and_k(s0, LundConfig(t=1), np.full(5, 1e-10))[0] == 2


def test_fixed_estimator():
    k, modes = estimate_modes_and_k(SCORES[::-1], LundConfig(t=1, k_estimator="fixed", k=2))
    assert k == 2 and modes.tolist() == [5, 4]


def _chain_op(n, seed, t):
    ch = random_chain(n, seed)
    return ch, DiffusionOperator(eig_markov(ch, n), t)


def test_two_point_rho():
    _, op = _chain_op(2, 0, 3)
    dens = DensityEstimate.from_values([0.6, 0.4])
    rho, parent = nearest_higher_density(op, dens)
    assert rho[0] == rho[1] > 0
    assert parent.tolist() == [-1, 0]


def test_rho_matches_brute_force_oracle():
    ch, op = _chain_op(10, 3, 4)
    rng = np.random.default_rng(3)
    dens = DensityEstimate.from_values(rng.uniform(1, 2, 10))
    D = pairwise_diffusion_oracle(ch, 4)
    ref = np.empty(10)
    for i in range(10):
        higher = [j for j in range(10) if dens.rank[j] < dens.rank[i]]
        ref[i] = max(D[i, j] for j in range(10)) if not higher else min(D[i, j] for j in higher)
    rho, _ = nearest_higher_density(op, dens)
    np.testing.assert_allclose(rho, ref, rtol=1e-8)
    second = dens.order[1]
    assert rho[second] == pytest.approx(D[second, dens.argmax], rel=1e-8)


def test_label_path_by_hand():
    c = PointCloud(np.arange(5.0)[:, None])
    dens = DensityEstimate.from_values([5, 3, 1, 2, 4])
    labels = label(EuclideanMetric(c), dens, [0, 4], 2)
    assert labels.tolist() == [1, 1, 1, 2, 2]


def test_label_single_cluster():
    c = PointCloud(np.random.default_rng(0).normal(size=(20, 2)))
    dens = DensityEstimate.from_values(np.arange(1, 21.0))
    assert np.all(label(EuclideanMetric(c), dens, [dens.argmax], 1) == 1)


def test_label_two_blobs_follow_modes(blobs):
    res = lund(blobs, 1.0, LundConfig(t=10, kde_knn=10))
    assert res.k_hat == 2
    assert score(res.labels, blobs.ground_truth).overall == 1.0
    # each point's nearest higher-density neighbour lies in its own blob
    _, dec, dens = prepare(blobs, 1.0, LundConfig(t=10, kde_knn=10))
    _, parent = nearest_higher_density(DiffusionOperator(dec, 10), dens)
    ok = parent >= 0
    gt = blobs.ground_truth
    cross = np.flatnonzero(ok & (gt != gt[np.where(ok, parent, 0)]))
    assert set(cross.tolist()) <= set(res.modes.tolist())


def test_two_point_dataset():
    c = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0]]))
    res = lund(c, 1.0, LundConfig(t=1))
    assert res.k_hat == 1
    assert set(res.labels.tolist()) == {1}


def test_result_contract(blobs):
    res = lund(blobs, 1.0, LundConfig(t=5, kde_knn=10))
    top = np.lexsort((np.arange(blobs.n), -res.score))[:res.k_hat]
    assert res.modes.tolist() == top.tolist()
    assert set(res.labels.tolist()) == set(range(1, res.k_hat + 1))
    assert res.labels[res.modes].tolist() == list(range(1, res.k_hat + 1))
    assert np.all(np.diff(res.sorted_scores) <= 0)
    np.testing.assert_allclose(res.score, res.density.values * res.rho)


def test_deterministic(blobs):
    a = lund(blobs, 1.0, LundConfig(t=7, kde_knn=10))
    b = lund(blobs, 1.0, LundConfig(t=7, kde_knn=10))
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.score, b.score)


def test_gaussian_pair_window():
    c = generate(DatasetSpec("gaussian_pair", 1000, 0))
    _, dec, dens = prepare(c, 0.2, LundConfig(t=1))
    accs = []
    for t in (10, 100, 1000):
        r = lund_from_parts(DiffusionOperator(dec, t), dens, LundConfig(t=t))
        accs.append(score(r.labels, c.ground_truth).overall if r.k_hat == 2 else 0.0)
    assert max(accs) == 1.0


def test_bottleneck_khat_at_reference_cell():
    c = generate(DatasetSpec("bottleneck", 2000, 0))
    res = lund(c, 0.15, LundConfig(t=10**6))
    assert res.k_hat == 3
    assert score(res.labels, c.ground_truth).overall == 1.0


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 25), st.integers(0, 10**6), st.integers(0, 30))
def test_labels_valid_on_random_chains(n, seed, t):
    _, op = _chain_op(n, seed, t)
    rng = np.random.default_rng(seed)
    dens = DensityEstimate.from_values(rng.uniform(0.5, 1.5, n))
    k = int(rng.integers(1, n + 1))
    res = lund_from_parts(op, dens, LundConfig(t=t, k_estimator="fixed", k=k))
    assert sorted(set(res.labels.tolist())) == list(range(1, k + 1))
    # the density maximizer is always labeled through a mode or is one
    assert res.labels.min() >= 1
