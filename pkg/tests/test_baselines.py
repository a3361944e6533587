import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import KMeans

from asymmix.baselines import (
    KMeansModel,
    fit_flat_gmm,
    fit_minibatch_kmeans,
    inertia,
    kmeans_predict,
)
from asymmix.exceptions import ContractViolation


def two_blobs(seed=0, n=2000):
    rng = np.random.default_rng(seed)
    return np.concatenate([rng.normal(-5, 1, (n, 2)), rng.normal(5, 1, (n, 2))])


class TestMiniBatchKMeans:
    def test_single_centroid_is_mean(self):
        X = np.random.default_rng(0).uniform(size=(10_000, 2))
        model = fit_minibatch_kmeans(X, 1, seed=0)
        assert np.max(np.abs(model.centroids[0] - X.mean(axis=0))) < 0.01

    def test_inertia_close_to_lloyd(self):
        X = two_blobs()
        ours = inertia(X, fit_minibatch_kmeans(X, 2, seed=1).centroids)
        lloyd = KMeans(2, n_init=10, random_state=0).fit(X).inertia_
        assert ours <= 1.05 * lloyd

    def test_deterministic(self):
        X = two_blobs(1)
        a = fit_minibatch_kmeans(X, 3, seed=5)
        b = fit_minibatch_kmeans(X, 3, seed=5)
        assert np.array_equal(a.centroids, b.centroids)
        assert np.array_equal(a.counts, b.counts)

    def test_inertia_not_worse_than_seeding(self):
        X = two_blobs(2)
        for seed in range(5):
            start = fit_minibatch_kmeans(X, 4, iters=0, seed=seed)
            end = fit_minibatch_kmeans(X, 4, seed=seed)
            assert inertia(X, end.centroids) <= inertia(X, start.centroids)

    def test_counts(self):
        X = two_blobs(3)
        model = fit_minibatch_kmeans(X, 2, batch_size=100, iters=7, seed=0)
        assert model.counts.sum() == 700

    def test_too_few_samples(self):
        with pytest.raises(ContractViolation):
            fit_minibatch_kmeans(np.zeros((2, 1)), 3)


class TestPredict:
    def test_point_on_centroid(self):
        c = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]])
        assert kmeans_predict([[5.0, 5.0]], c)[0] == 2

    def test_tie_lowest_index(self):
        c = np.array([[-1.0], [1.0], [1.0]])
        assert kmeans_predict([[0.0], [1.0]], c).tolist() == [0, 1]

    def test_brute_force_scan(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            c = rng.normal(size=(5, 3))
            X = rng.normal(size=(50, 3))
            expected = [
                min(range(5), key=lambda k: (sum((x[d] - c[k][d]) ** 2 for d in range(3)), k))
                for x in X
            ]
            assert kmeans_predict(X, KMeansModel(c, np.zeros(5))).tolist() == expected

    def test_feature_mismatch(self):
        with pytest.raises(ContractViolation):
            kmeans_predict(np.zeros((3, 2)), np.zeros((2, 3)))


class TestFlatGMM:
    def test_one_gaussian_per_cluster(self):
        model, _ = fit_flat_gmm(two_blobs(), 3, seed=0)
        assert model.dims == (3, 1, 2)

    def test_recovers_blob_means(self):
        X = two_blobs(5, n=5000)
        model, trace = fit_flat_gmm(X, 2, seed=0)
        fitted = model.means[:, 0]
        true = np.array([[-5.0, -5.0], [5.0, 5.0]])
        rows, cols = linear_sum_assignment(np.linalg.norm(fitted[:, None] - true[None], axis=2))
        assert np.max(np.abs(fitted[rows] - true[cols])) < 0.05
        assert np.all(np.diff(trace.loglik) >= -1e-8)
