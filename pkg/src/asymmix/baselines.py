"""Reference clusterers: mini-batch k-means and a flat Gaussian mixture."""

from dataclasses import dataclass

import numpy as np

from ._seeding import kmeans_plusplus
from ._validation import check_count, check_data
from .exceptions import ContractViolation
from .mixture import fit_em


@dataclass(frozen=True, eq=False)
class KMeansModel:
    centroids: np.ndarray
    counts: np.ndarray

    @property
    def n_clusters(self):
        return self.centroids.shape[0]


def _sq_distances(X, centroids):
    # explicit differences keep exact ties exact (no |x|^2 - 2xc + |c|^2 cancellation)
    return np.stack([np.sum((X - c) ** 2, axis=1) for c in centroids], axis=1)


def kmeans_predict(X, model):
    """Index of the nearest centroid; ties go to the lowest index."""
    centroids = model.centroids if isinstance(model, KMeansModel) else np.atleast_2d(model)
    X = check_data(X, n_features=centroids.shape[1])
    return np.argmin(_sq_distances(X, centroids), axis=1)


def inertia(X, centroids):
    """Sum of squared distances to the nearest centroid."""
    X = check_data(X, n_features=np.shape(centroids)[1])
    return float(np.sum(np.min(_sq_distances(X, centroids), axis=1)))


def fit_minibatch_kmeans(X, K, batch_size=1024, iters=100, seed=0):
    """Mini-batch k-means with per-centre learning rate ``1 / count``.

    Centres start from k-means++ seeding. Each iteration draws
    ``batch_size`` rows with replacement, assigns them to their nearest
    centre and moves every centre to the running mean of all points it has
    absorbed so far.
    """
    X = check_data(X)
    K = check_count(K, "K")
    batch_size = check_count(batch_size, "batch_size")
    iters = check_count(iters, "iters", minimum=0)
    if X.shape[0] < K:
        raise ContractViolation(f"need at least K={K} samples, got {X.shape[0]}")
    rng = np.random.default_rng(seed)
    centroids = X[kmeans_plusplus(X, K, rng)].copy()
    counts = np.zeros(K, dtype=np.int64)
    for _ in range(iters):
        batch = X[rng.integers(0, X.shape[0], size=batch_size)]
        labels = np.argmin(_sq_distances(batch, centroids), axis=1)
        for k in range(K):
            members = batch[labels == k]
            if members.shape[0] == 0:
                continue
            new_count = counts[k] + members.shape[0]
            centroids[k] += (members - centroids[k]).sum(axis=0) / new_count
            counts[k] = new_count
    centroids.setflags(write=False)
    counts.setflags(write=False)
    return KMeansModel(centroids, counts)


def fit_flat_gmm(X, K, max_iters=200, rel_tol=1e-6, reg=None, seed=0):
    """Ordinary Gaussian mixture: the hierarchical model with one Gaussian per cluster."""
    return fit_em(X, K, 1, max_iters=max_iters, rel_tol=rel_tol, reg=reg, seed=seed)
