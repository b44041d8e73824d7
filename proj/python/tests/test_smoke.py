import math

import numpy as np
import pytest

import rwseg


def random_stochastic(rng, rows, cols):
    m = rng.random((rows, cols)) + 1e-3
    return m / m.sum(axis=1, keepdims=True)


def test_global_affinity_is_cosine():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(16, 4))
    k = rng.normal(size=(16, 4))
    expected = (q / np.linalg.norm(q, axis=1, keepdims=True)) @ (
        k / np.linalg.norm(k, axis=1, keepdims=True)
    ).T
    np.testing.assert_allclose(rwseg.global_affinity(q, k), expected, atol=1e-12)


def test_local_affinity_neighborhoods():
    rng = np.random.default_rng(1)
    a = rwseg.local_affinity(rng.normal(size=(9, 3)), rng.normal(size=(9, 3)), 3, 3, 0.02)
    assert a[0, 0] == pytest.approx(0.02)
    assert np.count_nonzero(a[4]) <= 9
    assert a[0, 8] == 0.0


def test_exact_walk_matches_numpy_inverse():
    rng = np.random.default_rng(2)
    s = random_stochastic(rng, 12, 12)
    g = random_stochastic(rng, 12, 3)
    alpha = 0.9
    expected = (1 - alpha) * np.linalg.solve(np.eye(12) - alpha * s, g)
    out = rwseg.exact_walk_dense(s, g, alpha)
    np.testing.assert_allclose(out["p"], expected, atol=1e-10)
    long_walk = rwseg.truncated_walk(s, g, alpha, 300)
    np.testing.assert_allclose(long_walk["p"], expected, atol=1e-9)
    assert long_walk["residual_bound"] == pytest.approx(12 * alpha**301)


def test_woodbury_matches_dense():
    rng = np.random.default_rng(3)
    q = rng.random((20, 3)) + 0.1
    k = rng.random((20, 3)) + 0.1
    q = q / (q @ k.T).sum(axis=1, keepdims=True)
    g = random_stochastic(rng, 20, 4)
    dense = rwseg.exact_walk_dense(q @ k.T, g, 0.8)["p"]
    np.testing.assert_allclose(rwseg.exact_walk_woodbury(q, k, g, 0.8)["p"], dense, atol=1e-10)


def test_head_weights_and_entropy():
    w = rwseg.head_weights([0.0, math.log(2.0)], 1.0)
    assert w == pytest.approx([2 / 3, 1 / 3])
    assert rwseg.head_entropy(np.full((3, 4), 0.25)) == pytest.approx(math.log(4))


def test_steps_for_tolerance():
    assert rwseg.steps_for_tolerance(0.5, 4, 0.25) == 3
    assert rwseg.residual_l1(0.5, 3, 4) == pytest.approx(0.25)


def test_errors_carry_the_error_name():
    with pytest.raises(rwseg.RwsegError) as info:
        rwseg.g_from_probabilities(np.array([[1.01, -0.01]]))
    assert info.value.name == "NotAProbability"
    with pytest.raises(rwseg.RwsegError, match="IoFailure"):
        rwseg.refine("/nonexistent/file.nrvf")


def test_synth_and_refine(tmp_path):
    path = tmp_path / "scene.nrvf"
    truth = rwseg.synth(str(path), grid_h=12, grid_w=10, heads=3, seed=5)
    assert truth.shape == (12, 10)

    zero = rwseg.refine(str(path), steps=0)
    g = zero["p"]
    np.testing.assert_array_equal(zero["mask"], rwseg.argmax_mask(g, 12, 10))

    out = rwseg.refine(str(path), fusion="single")
    assert out["mask"].shape == (12, 10)
    np.testing.assert_allclose(out["p"].sum(axis=1), 1.0, atol=1e-9)
    assert out["selected_head"] == int(np.argmin(out["entropies"]))
    assert '"fusion": "single"' in out["manifest"]


def test_verify_suite_passes():
    results = rwseg.verify(seed=7)
    assert len(results) == 5
    assert all(r["passed"] for r in results), results
