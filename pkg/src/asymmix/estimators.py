"""scikit-learn style estimators over the functional core."""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, DensityMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_data, check_image, seed_from
from .baselines import _sq_distances, fit_minibatch_kmeans, inertia, kmeans_predict
from .mixture import (
    DEFAULT_K,
    DEFAULT_M,
    cluster_posteriors,
    PILOT_RESTARTS,
    fit_em,
    predict_cluster,
    sample,
    score_samples,
)


class AsymmetricMixtureModel(ClusterMixin, DensityMixin, BaseEstimator):
    """Mixture of Gaussian mixtures fitted by EM.

    Parameters
    ----------
    n_components : int, default=3
        Number of clusters K.
    n_subcomponents : int, default=2
        Gaussians per cluster M.
    max_iter : int, default=200
    tol : float, default=1e-6
        Relative log-likelihood change that stops EM.
    reg_covar : float or None, default=None
        Added to every covariance diagonal; ``None`` picks 1e-6 times the
        mean per-feature variance.
    init : {"split", "kmeans++"}, default="split"
    n_init : int, default=5
        Restarts of the flat pilot fit behind ``init="split"``.
    random_state : int, RandomState, Generator or None, default=0

    Attributes
    ----------
    model_ : AsymmetricMixture
    trace_ : FitTrace
    converged_ : bool
    n_iter_ : int
    lower_bound_ : float
        Mean per-sample log-likelihood at the last iteration.
    """

    def __init__(self, n_components=DEFAULT_K, n_subcomponents=DEFAULT_M, max_iter=200,
                 tol=1e-6, reg_covar=None, init="split", n_init=PILOT_RESTARTS, random_state=0):
        self.n_components = n_components
        self.n_subcomponents = n_subcomponents
        self.max_iter = max_iter
        self.tol = tol
        self.reg_covar = reg_covar
        self.init = init
        self.n_init = n_init
        self.random_state = random_state

    def _sub(self):
        return self.n_subcomponents

    def _init(self):
        return self.init

    def _restarts(self):
        return self.n_init

    def fit(self, X, y=None):
        X = check_data(X)
        model, trace = fit_em(
            X, self.n_components, self._sub(), max_iters=self.max_iter, rel_tol=self.tol,
            reg=self.reg_covar, seed=seed_from(self.random_state), init=self._init(),
            restarts=self._restarts(),
        )
        self.model_, self.trace_ = model, trace
        self.converged_ = trace.converged
        self.n_iter_ = trace.n_iter
        self.lower_bound_ = trace.loglik[-1] / X.shape[0]
        self.n_features_in_ = X.shape[1]
        self.labels_ = predict_cluster(X, model)
        return self

    @property
    def weights_(self):
        check_is_fitted(self, "model_")
        return np.asarray(self.model_.weights)

    @property
    def means_(self):
        """(K, M, D) Gaussian means."""
        check_is_fitted(self, "model_")
        return np.asarray(self.model_.means)

    @property
    def covariances_(self):
        check_is_fitted(self, "model_")
        return np.asarray(self.model_.covariances)

    def predict(self, X):
        check_is_fitted(self, "model_")
        return predict_cluster(X, self.model_)

    def predict_proba(self, X):
        """Cluster posteriors z, shape (N, K)."""
        check_is_fitted(self, "model_")
        return cluster_posteriors(X, self.model_)

    def transform(self, X):
        return self.predict_proba(X)

    def score_samples(self, X):
        check_is_fitted(self, "model_")
        return score_samples(X, self.model_)

    def score(self, X, y=None):
        return float(np.mean(self.score_samples(X)))

    def sample(self, n_samples=1, random_state=None):
        """Draw ``(X, labels)``; labels are (j, m) pairs."""
        check_is_fitted(self, "model_")
        seed = seed_from(self.random_state if random_state is None else random_state)
        return sample(self.model_, n_samples, seed=seed)


class FlatGaussianMixture(AsymmetricMixtureModel):
    """Ordinary full-covariance Gaussian mixture (one Gaussian per cluster)."""

    def __init__(self, n_components=DEFAULT_K, max_iter=200, tol=1e-6, reg_covar=None,
                 random_state=0):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.reg_covar = reg_covar
        self.random_state = random_state

    def _sub(self):
        return 1

    def _init(self):
        return "kmeans++"

    def _restarts(self):
        return 1


class MiniBatchKMeansClusterer(ClusterMixin, BaseEstimator):
    """Mini-batch k-means with per-centre ``1 / count`` step sizes."""

    def __init__(self, n_clusters=DEFAULT_K, batch_size=1024, max_iter=100, random_state=0):
        self.n_clusters = n_clusters
        self.batch_size = batch_size
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_data(X)
        self.model_ = fit_minibatch_kmeans(
            X, self.n_clusters, batch_size=self.batch_size, iters=self.max_iter,
            seed=seed_from(self.random_state),
        )
        self.cluster_centers_ = np.asarray(self.model_.centroids)
        self.n_features_in_ = X.shape[1]
        self.labels_ = kmeans_predict(X, self.model_)
        self.inertia_ = inertia(X, self.cluster_centers_)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return kmeans_predict(X, self.model_)

    def transform(self, X):
        """Euclidean distance to every centre, shape (N, K)."""
        check_is_fitted(self, "model_")
        X = check_data(X, n_features=self.n_features_in_)
        return np.sqrt(_sq_distances(X, self.cluster_centers_))


class DeepAsymmetricSegmenter(BaseEstimator):
    """Posterior network trained with closed-form mixture updates.

    ``fit`` takes a list of (H, W, 3) images; ``predict`` returns an (H, W)
    label map for one image.
    """

    def __init__(self, n_components=DEFAULT_K, n_subcomponents=DEFAULT_M, learning_rate=1e-4,
                 gamma=0.97, beta=0.5, steps=100, augment=False, random_state=0):
        self.n_components = n_components
        self.n_subcomponents = n_subcomponents
        self.learning_rate = learning_rate
        self.gamma = gamma
        self.beta = beta
        self.steps = steps
        self.augment = augment
        self.random_state = random_state

    def fit(self, images, y=None):
        from .toynet import TrainConfig, train_loop

        config = TrainConfig(
            lr=self.learning_rate, gamma=self.gamma, beta=self.beta, steps=self.steps,
            seed=seed_from(self.random_state), K=self.n_components, M=self.n_subcomponents,
            augment=self.augment,
        )
        result = train_loop(list(images), config)
        self.net_, self.model_ = result.net, result.model
        self.trace_ = result.trace
        self.best_step_ = result.best_step
        return self

    def predict_proba(self, image):
        """(H, W, K) cluster posterior map."""
        from .toynet import net_forward

        check_is_fitted(self, "net_")
        return net_forward(check_image(image), self.net_)[0]

    def predict(self, image):
        return np.argmax(self.predict_proba(image), axis=-1)


__all__ = [
    "AsymmetricMixtureModel",
    "FlatGaussianMixture",
    "MiniBatchKMeansClusterer",
    "DeepAsymmetricSegmenter",
]
