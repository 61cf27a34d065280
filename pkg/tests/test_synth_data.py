import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lund.errors import InvalidParameterError
from lund.synth_data import DatasetSpec, cloud_digest, default_specs, generate, spec_json

# frozen at n=500, seed=0
DIGESTS = {
    "bottleneck": "5093185f7178eaed97dab6b00b9bd637cfc92acb5a85bd4c470f7bce22fcca93",
    "nonlinear_circles": "0b8889ff4f334c814cb18c31d8d7ec91179ad6ba614725809dfd911fc42a6f4d",
    "nadler_gaussians": "4e26961c8ac33addb15aa106e9eac30338723e0a4260f3d5945df6528dfe09dc",
    "gaussian_pair": "c2c3177c1bc6fdbe2df7ee34eb97aacc6fafe312dc1d2fc407d7699ad91f91b6",
}


@pytest.mark.parametrize("name", sorted(DIGESTS))
def test_snapshot_digests(name):
    assert cloud_digest(generate(default_specs(500, 0)[name])) == DIGESTS[name]


def test_default_specs_have_three_clusters():
    specs = default_specs()
    for name in ("bottleneck", "nonlinear_circles", "nadler_gaussians"):
        c = generate(specs[name])
        assert c.n == 2000 and c.n_classes == 3
        assert np.unique(c.ground_truth).tolist() == [1, 2, 3]


def test_gaussian_pair_sqrt2_means():
    s = np.sqrt(2)
    c = generate(DatasetSpec("gaussian_pair", 2000, 0, params={"separation": s}))
    assert c.n_classes == 2
    for k, mu in ((1, [s, 0]), (2, [0, s])):
        pts = c.points[c.ground_truth == k]
        np.testing.assert_allclose(pts.mean(axis=0), mu, atol=0.05)
        np.testing.assert_allclose(pts.var(axis=0), 0.1, rtol=0.15)


def test_degenerate_weights_single_label():
    c = generate(DatasetSpec("nadler_gaussians", 50, 1, weights=(1.0, 0.0, 0.0)))
    assert np.all(c.ground_truth == 1)


def test_class_proportions_within_three_sigma():
    w = np.array([0.5, 0.25, 0.25])
    n = 2000
    for seed in range(20):
        c = generate(DatasetSpec("nadler_gaussians", n, seed))
        frac = np.bincount(c.ground_truth, minlength=4)[1:] / n
        assert np.all(np.abs(frac - w) <= 3 * np.sqrt(w * (1 - w) / n))


def test_invalid_specs():
    with pytest.raises(InvalidParameterError):
        DatasetSpec("spiral")
    with pytest.raises(InvalidParameterError):
        DatasetSpec("bottleneck", weights=(0.5, 0.6, -0.1))
    with pytest.raises(InvalidParameterError):
        generate(DatasetSpec("bottleneck", 10, weights=(0.5, 0.5)))
    with pytest.raises(InvalidParameterError):
        generate(DatasetSpec("custom_mixture", 10))


def test_custom_mixture_and_json_round_trip():
    spec = DatasetSpec("custom_mixture", 300, 4, params={"means": [[0, 0, 0], [5, 5, 5]], "stds": [1, 2]})
    c = generate(spec)
    assert c.D == 3 and c.n_classes == 2
    back = DatasetSpec.from_json(json.loads(spec_json(spec)))
    assert cloud_digest(generate(back)) == cloud_digest(c)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["bottleneck", "nonlinear_circles", "nadler_gaussians", "gaussian_pair"]),
       st.integers(3, 400), st.integers(0, 2**31))
def test_determinism_and_labels(family, n, seed):
    spec = DatasetSpec(family, n, seed)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.ground_truth, b.ground_truth)
    assert a.n == n
    assert a.n_classes == np.unique(a.ground_truth).size
