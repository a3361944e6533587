"""Hierarchical Gaussian mixture ("mixture of mixtures").

The model has K sub-mixtures with weights ``pi``; sub-mixture ``j`` is itself
a Gaussian mixture with M components, weights ``alpha[j]``, means
``mu[j, m]`` and covariances ``Sigma[j, m]``::

    f(x) = sum_j pi_j * sum_m alpha_jm * N(x | mu_jm, Sigma_jm)

Each sub-mixture can represent a skewed cluster that a single Gaussian
cannot. Everything below works in log space; covariances are only ever used
through their Cholesky factors.

Responsibilities come in two layers: ``z[i, j]`` is the posterior of
sub-mixture ``j`` for point ``i`` and ``y[i, j, m]`` the posterior of
Gaussian ``m`` within sub-mixture ``j``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp, softmax

from ._seeding import kmeans_plusplus
from ._validation import check_count, check_data, check_point
from .exceptions import ContractViolation
from .gaussian import GaussianParams, log_gaussian_rows

WEIGHT_TOL = 1e-9
DEFAULT_K = 3
DEFAULT_M = 2


def _check_weights(w, name):
    w = np.array(w, dtype=np.float64, copy=True)
    if w.ndim != 1 or w.size == 0:
        raise ContractViolation(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ContractViolation(f"{name} must be finite and non-negative")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ContractViolation(f"{name} must sum to 1, got {w.sum():.17g}")
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class SubMixture:
    """One cluster: a Gaussian mixture with weights ``alpha``."""

    weights: np.ndarray
    gaussians: tuple

    def __post_init__(self):
        weights = _check_weights(self.weights, "alpha")
        gaussians = tuple(self.gaussians)
        if len(gaussians) != weights.size:
            raise ContractViolation("alpha length must equal the number of Gaussians")
        if len({g.dim for g in gaussians}) != 1:
            raise ContractViolation("all Gaussians of a sub-mixture must share D")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "gaussians", gaussians)

    @property
    def n_gaussians(self):
        return len(self.gaussians)

    @property
    def dim(self):
        return self.gaussians[0].dim


@dataclass(frozen=True, eq=False)
class AsymmetricMixture:
    """Immutable parameter set of the hierarchical mixture.

    Build one from nested :class:`SubMixture` objects or, more commonly, from
    stacked arrays via :meth:`from_arrays`.
    """

    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        weights = _check_weights(self.weights, "pi")
        components = tuple(self.components)
        if len(components) != weights.size:
            raise ContractViolation("pi length must equal the number of sub-mixtures")
        if len({c.dim for c in components}) != 1:
            raise ContractViolation("all sub-mixtures must share D")
        if len({c.n_gaussians for c in components}) != 1:
            raise ContractViolation("all sub-mixtures must share M")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)

    @classmethod
    def from_arrays(cls, pi, alpha, means, covariances):
        """``pi`` (K,), ``alpha`` (K, M), ``means`` (K, M, D), ``covariances`` (K, M, D, D)."""
        alpha = np.asarray(alpha, dtype=np.float64)
        means = np.asarray(means, dtype=np.float64)
        covariances = np.asarray(covariances, dtype=np.float64)
        if alpha.ndim != 2 or means.ndim != 3 or covariances.ndim != 4:
            raise ContractViolation("expected alpha (K,M), means (K,M,D), covariances (K,M,D,D)")
        K, M = alpha.shape
        if means.shape[:2] != (K, M) or covariances.shape[:2] != (K, M):
            raise ContractViolation("alpha, means and covariances disagree on (K, M)")
        comps = [
            SubMixture(alpha[j], [GaussianParams(means[j, m], covariances[j, m]) for m in range(M)])
            for j in range(K)
        ]
        return cls(pi, comps)

    @property
    def n_components(self):
        return len(self.components)

    @property
    def n_subcomponents(self):
        return self.components[0].n_gaussians

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def dims(self):
        """``(K, M, D)``."""
        return self.n_components, self.n_subcomponents, self.dim

    @cached_property
    def alpha(self):
        return _stack([c.weights for c in self.components])

    @cached_property
    def means(self):
        return _stack([[g.mean for g in c.gaussians] for c in self.components])

    @cached_property
    def covariances(self):
        return _stack([[g.covariance for g in c.gaussians] for c in self.components])

    @cached_property
    def choleskys(self):
        return _stack([[g.cholesky for g in c.gaussians] for c in self.components])

    @cached_property
    def logdets(self):
        return _stack([[g.logdet for g in c.gaussians] for c in self.components])

    @cached_property
    def cluster_means(self):
        """Overall mean of each sub-mixture, ``sum_m alpha_jm mu_jm`` (K, D)."""
        return _stack(np.einsum("km,kmd->kd", self.alpha, self.means))

    def permuted(self, order):
        """Same density with sub-mixtures reordered."""
        order = list(order)
        return AsymmetricMixture(self.weights[order], [self.components[j] for j in order])


def _stack(values):
    a = np.array(values, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Responsibilities:
    """Posterior tables ``z`` (N, K) and ``y`` (N, K, M)."""

    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if z.ndim != 2 or y.ndim != 3 or y.shape[:2] != z.shape:
            raise ContractViolation(f"inconsistent shapes z{z.shape}, y{y.shape}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)

    def validate(self, atol=1e-9):
        """Raise unless every z row and y[i, j] row is a probability vector."""
        for name, a in (("z", self.z), ("y", self.y)):
            if np.any(a < 0.0) or not np.all(np.isfinite(a)):
                raise ContractViolation(f"{name} has negative or non-finite entries")
            if np.max(np.abs(a.sum(axis=-1) - 1.0)) > atol:
                raise ContractViolation(f"{name} rows do not sum to 1")
        return self


@dataclass
class FitTrace:
    """Per-iteration log-likelihood record of an EM run.

    ``reinit_iterations`` lists the iterations whose M-step had to rescue an
    empty Gaussian; those steps are exempt from the monotonicity guarantee.
    """

    loglik: list = field(default_factory=list)
    converged: bool = False
    seed: int = 0
    reinit_iterations: list = field(default_factory=list)

    @property
    def n_iter(self):
        return len(self.loglik)


# --------------------------------------------------------------------------
# densities


def _check_model_data(X, model):
    return check_data(X, n_features=model.dim)


def component_log_densities(X, model):
    """``log phi(x_i | mu_jm, Sigma_jm)`` for all i, j, m as an (N, K, M) array."""
    K, M, _ = model.dims
    out = np.empty((X.shape[0], K, M))
    for j in range(K):
        for m in range(M):
            out[:, j, m] = log_gaussian_rows(
                X, model.means[j, m], model.choleskys[j, m], model.logdets[j, m]
            )
    return out


def _log_weights(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def _joint_tables(X, model):
    """Return ``log(alpha phi)`` (N,K,M), ``log p(x|C_j)`` (N,K), ``log(pi p)`` (N,K)."""
    log_aphi = component_log_densities(X, model) + _log_weights(model.alpha)[None]
    log_sub = logsumexp(log_aphi, axis=2)
    log_joint = log_sub + _log_weights(model.weights)[None]
    return log_aphi, log_sub, log_joint


def sub_mixture_log_pdf(x, component):
    """``log sum_m alpha_m phi(x | mu_m, Sigma_m)`` for a single point."""
    x = check_point(x, component.dim)[None, :]
    terms = [
        log_gaussian_rows(x, g.mean, g.cholesky, g.logdet)[0] for g in component.gaussians
    ]
    return float(logsumexp(np.array(terms) + _log_weights(component.weights)))


def score_samples(X, model):
    """Per-row log-density of the full model, shape (N,)."""
    X = _check_model_data(X, model)
    return logsumexp(_joint_tables(X, model)[2], axis=1)


def amm_log_pdf(x, model):
    """Log-density of a single point under the full model."""
    x = check_point(x, model.dim)
    return float(score_samples(x[None, :], model)[0])


def log_likelihood(X, model):
    """Total data log-likelihood, ``sum_i log f(x_i)``."""
    return float(np.sum(score_samples(X, model)))


def _xlogy(a, logb):
    # 0 * log(0) := 0
    return np.where(a == 0.0, 0.0, a * np.where(a == 0.0, 0.0, logb))


def expected_complete_ll(X, model, resp):
    """Expected complete-data log-likelihood for fixed responsibilities.

    ``sum_i sum_j z_ij [log pi_j + sum_m y_ijm (log alpha_jm + log phi_ijm)]``.
    Terms with a zero responsibility contribute exactly zero even when the
    paired log is ``-inf``.
    """
    X = _check_model_data(X, model)
    K, M, _ = model.dims
    if resp.z.shape != (X.shape[0], K) or resp.y.shape != (X.shape[0], K, M):
        raise ContractViolation(
            f"responsibility shapes z{resp.z.shape}, y{resp.y.shape} do not match (N, K, M)"
        )
    log_aphi = component_log_densities(X, model) + _log_weights(model.alpha)[None]
    inner = np.sum(_xlogy(resp.y, log_aphi), axis=2)
    outer = _log_weights(model.weights)[None] + inner
    return float(np.sum(_xlogy(resp.z, outer)))


# --------------------------------------------------------------------------
# EM steps


def _e_step(X, model):
    log_aphi, log_sub, log_joint = _joint_tables(X, model)
    log_norm = logsumexp(log_joint, axis=1)
    y = np.exp(log_aphi - log_sub[:, :, None])
    y /= y.sum(axis=2, keepdims=True)
    z = np.exp(log_joint - log_norm[:, None])
    z /= z.sum(axis=1, keepdims=True)
    return Responsibilities(z, y), log_norm


def e_step(X, model):
    """Exact posteriors ``z`` and ``y`` under ``model``."""
    X = _check_model_data(X, model)
    return _e_step(X, model)[0]


def cluster_posteriors(X, model):
    """Cluster posteriors ``z`` (N, K) alone; cheaper than :func:`e_step`."""
    X = _check_model_data(X, model)
    log_aphi = component_log_densities(X, model) + _log_weights(model.alpha)[None]
    log_joint = np.logaddexp.reduce(log_aphi, axis=2) + _log_weights(model.weights)[None]
    return softmax(log_joint, axis=1)


def default_reg(X):
    """Covariance floor: 1e-6 times the mean per-dimension variance of ``X``."""
    v = float(np.mean(np.var(X, axis=0)))
    return 1e-6 * v if v > 0.0 else 1e-9


def _global_covariance(X):
    return np.atleast_2d(np.cov(X, rowvar=False, bias=True)) if X.shape[0] > 1 else np.zeros(
        (X.shape[1], X.shape[1])
    )


def _init_covariance(X, n_gauss, reg):
    d = X.shape[1]
    return _global_covariance(X) * float(n_gauss) ** (-2.0 / d) + reg * np.eye(d)


def _symmetrize(c):
    return 0.5 * (c + np.swapaxes(c, -1, -2))


def _m_step(X, resp, reg, log_density=None):
    """Closed-form parameter update. Returns ``(model, n_reinitialized)``."""
    N, D = X.shape
    z, y = resp.z, resp.y
    if z.shape[0] != N:
        raise ContractViolation("responsibilities and data disagree on N")
    K, M = y.shape[1:]
    w = z[:, :, None] * y  # (N, K, M)
    mass = w.sum(axis=0)
    z_mass = z.sum(axis=0)
    threshold = 10.0 * np.finfo(np.float64).eps * N
    dead = mass < threshold
    safe_mass = np.where(dead, 1.0, mass)

    means = np.einsum("nkm,nd->kmd", w, X) / safe_mass[:, :, None]
    eye = np.eye(D)
    covs = np.empty((K, M, D, D))
    for j in range(K):
        for m in range(M):
            diff = X - means[j, m]
            scatter = (w[:, j, m, None] * diff).T @ diff
            covs[j, m] = _symmetrize(scatter / safe_mass[j, m] + reg * eye)

    pi = z_mass / N
    alpha = mass / np.where(z_mass > 0.0, z_mass, 1.0)[:, None]

    n_dead = int(dead.sum())
    if n_dead:
        if log_density is None:
            g = GaussianParams(X.mean(axis=0), _symmetrize(_global_covariance(X) + reg * eye))
            log_density = log_gaussian_rows(X, g.mean, g.cholesky, g.logdet)
        # stable order so reinitialisation is deterministic
        candidates = np.argsort(log_density, kind="stable")
        init_cov = _symmetrize(_init_covariance(X, K * M, reg))
        for idx, (j, m) in enumerate(zip(*np.nonzero(dead))):
            means[j, m] = X[candidates[idx % N]]
            covs[j, m] = init_cov
            alpha[j, m] = 1.0 / M
            if z_mass[j] < threshold:
                pi[j] = 1.0 / K
    pi = pi / pi.sum()
    alpha = alpha / alpha.sum(axis=1, keepdims=True)
    return AsymmetricMixture.from_arrays(pi, alpha, means, covs), n_dead


def m_step(X, resp, reg):
    """Closed-form update of ``pi``, ``alpha``, means and covariances.

    Means and covariances are responsibility-weighted (weight ``z_ij *
    y_ijm``); the covariance is the biased scatter about the new mean plus
    ``reg * I``. ``alpha_jm = sum_i z_ij y_ijm / sum_i z_ij`` and ``pi_j`` is
    the column mean of ``z``. A Gaussian whose mass falls below
    ``10 * eps * N`` is re-seeded on the lowest-density point.
    """
    X = check_data(X)
    return _m_step(X, resp, float(reg))[0]


# --------------------------------------------------------------------------
# initialisation and the EM driver


def seed_means(X, K, M, seed=0):
    """Two-level k-means++ seeding, returns (K, M, D) starting means.

    K anchors come from k-means++ over all rows. Each anchor then claims the
    rows closest to it and its remaining M-1 means are drawn by continuing
    k-means++ inside that cell, so every group holds M nearby means.
    """
    rng = np.random.default_rng(seed)
    anchors = X[kmeans_plusplus(X, K, rng)]
    cell = np.argmin(np.stack([np.sum((X - a) ** 2, axis=1) for a in anchors], axis=1), axis=1)
    means = np.empty((K, M, X.shape[1]))
    for j in range(K):
        means[j, 0] = anchors[j]
        if M > 1:
            members = X[cell == j]
            # a cell too small to seed from falls back to all rows
            pool = members if members.shape[0] >= M else X
            means[j, 1:] = pool[kmeans_plusplus(pool, M - 1, rng, initial=[anchors[j]])]
    return means


INIT_STRATEGIES = ("kmeans++", "split")
PILOT_RESTARTS = 5


def restart_seed(seed, r):
    """Seed of restart ``r``; restart 0 reuses ``seed`` itself."""
    return seed if r == 0 else int(np.random.SeedSequence([seed, r]).generate_state(1)[0])


def _pilot(X, K, seed, reg, max_iters, rel_tol, restarts):
    best, best_ll = None, -np.inf
    for r in range(restarts):
        flat, trace = fit_em(X, K, 1, max_iters=max_iters, rel_tol=rel_tol, reg=reg,
                             seed=restart_seed(seed, r), init="kmeans++")
        if trace.loglik[-1] > best_ll:
            best, best_ll = flat, trace.loglik[-1]
    return best


def _split_means(X, K, M, seed, reg, max_iters, rel_tol, restarts):
    """Fit a flat K-Gaussian mixture, then split each hard cluster into M parts."""
    flat = _pilot(X, K, seed, reg, max_iters, rel_tol, restarts)
    labels = predict_cluster(X, flat)
    D = X.shape[1]
    eye = np.eye(D)
    means = np.empty((K, M, D))
    covs = np.empty((K, M, D, D))
    alpha = np.empty((K, M))
    rng = np.random.default_rng(seed)
    for j in range(K):
        members = X[labels == j]
        if members.shape[0] < M:
            # starved cluster: fall back to plain seeding over all rows
            members = X
        centers = members[kmeans_plusplus(members, M, rng)]
        for _ in range(20):
            sub = np.argmin(
                np.stack([np.sum((members - c) ** 2, axis=1) for c in centers], axis=1), axis=1
            )
            for m in range(M):
                if np.any(sub == m):
                    centers[m] = members[sub == m].mean(axis=0)
        for m in range(M):
            part = members[sub == m]
            means[j, m] = centers[m]
            scatter = _global_covariance(part) if part.shape[0] > 1 else np.zeros((D, D))
            covs[j, m] = _symmetrize(scatter + reg * eye)
            alpha[j, m] = max(part.shape[0], 1)
        alpha[j] /= alpha[j].sum()
    pi = np.bincount(labels, minlength=K).astype(np.float64) + 1.0
    return AsymmetricMixture.from_arrays(pi / pi.sum(), alpha, means, covs)


def init_model(X, K=DEFAULT_K, M=DEFAULT_M, seed=0, reg=None, strategy="kmeans++",
               max_iters=200, rel_tol=1e-6, restarts=PILOT_RESTARTS):
    """Deterministic starting point for EM.

    ``strategy="kmeans++"``: means come from :func:`seed_means`, every
    covariance starts at the global data covariance scaled by
    ``(K*M) ** (-2/D)`` plus ``reg * I`` and all weights are uniform.

    ``strategy="split"``: fit an ordinary K-Gaussian mixture first, then
    split each of its hard clusters into M parts with a short k-means run;
    the parts give the means, covariances and ``alpha`` of that cluster's
    sub-mixture. Because a hierarchical mixture's likelihood does not depend
    on how Gaussians are grouped, this is what ties each sub-mixture to one
    coherent cluster. The flat fit is run ``restarts`` times and the one with
    the highest likelihood is kept. With ``M == 1`` it is the same as
    ``"kmeans++"``.
    """
    K = check_count(K, "K")
    M = check_count(M, "M")
    X = check_data(X)
    N, D = X.shape
    if N < K * M:
        raise ContractViolation(f"need at least K*M={K * M} samples, got {N}")
    if strategy not in INIT_STRATEGIES:
        raise ContractViolation(f"unknown init strategy {strategy!r}")
    restarts = check_count(restarts, "restarts")
    reg = default_reg(X) if reg is None else float(reg)
    if strategy == "split" and M > 1:
        return _split_means(X, K, M, seed, reg, max_iters, rel_tol, restarts)
    means = seed_means(X, K, M, seed)
    cov = _symmetrize(_init_covariance(X, K * M, reg))
    covs = np.broadcast_to(cov, (K, M, D, D))
    return AsymmetricMixture.from_arrays(
        np.full(K, 1.0 / K), np.full((K, M), 1.0 / M), means, covs
    )


def fit_em(X, K=DEFAULT_K, M=DEFAULT_M, max_iters=200, rel_tol=1e-6, reg=None, seed=0,
           init="split", restarts=PILOT_RESTARTS):
    """Fit the hierarchical mixture by exact EM.

    ``init`` is an :func:`init_model` strategy name or a ready
    :class:`AsymmetricMixture`; ``restarts`` is passed to it. Returns
    ``(model, trace)``.
    ``trace.loglik[t]`` is the data log-likelihood of the model after
    iteration ``t``; the returned model is the last iterate. Iteration stops
    when the relative improvement ``|dL| / |L|`` drops below ``rel_tol`` or
    after ``max_iters`` steps.
    """
    X = check_data(X)
    reg = default_reg(X) if reg is None else float(reg)
    if isinstance(init, AsymmetricMixture):
        if init.dims != (K, M, X.shape[1]):
            raise ContractViolation(f"initial model has dims {init.dims}, expected {(K, M, X.shape[1])}")
        model = init
    else:
        model = init_model(X, K, M, seed=seed, reg=reg, strategy=init,
                           max_iters=max_iters, rel_tol=rel_tol, restarts=restarts)
    trace = FitTrace(seed=seed)
    resp, log_norm = _e_step(X, model)
    prev = float(np.sum(log_norm))
    for t in range(max_iters):
        model, n_dead = _m_step(X, resp, reg, log_density=log_norm)
        if n_dead:
            trace.reinit_iterations.append(t)
        resp, log_norm = _e_step(X, model)
        current = float(np.sum(log_norm))
        trace.loglik.append(current)
        if not n_dead and abs(current - prev) <= rel_tol * abs(current):
            trace.converged = True
            break
        prev = current
    return model, trace


def predict_cluster(X, model):
    """Hard sub-mixture assignment; ties go to the lowest index."""
    return np.argmax(cluster_posteriors(X, model), axis=1)


def sample(model, n, seed=0):
    """Ancestral sampling. Returns ``(X, labels)`` with ``labels[:, 0] = j``
    and ``labels[:, 1] = m``."""
    n = check_count(n, "n")
    rng = np.random.default_rng(seed)
    K, M, D = model.dims
    j = rng.choice(K, size=n, p=model.weights)
    m = np.empty(n, dtype=np.int64)
    for k in range(K):
        idx = np.flatnonzero(j == k)
        m[idx] = rng.choice(M, size=idx.size, p=model.alpha[k])
    eps = rng.standard_normal((n, D))
    X = model.means[j, m] + np.einsum("nde,ne->nd", model.choleskys[j, m], eps)
    return X, np.stack([j, m], axis=1)


__all__ = [
    "GaussianParams", "SubMixture", "AsymmetricMixture", "Responsibilities", "FitTrace",
    "component_log_densities", "sub_mixture_log_pdf", "amm_log_pdf", "score_samples",
    "log_likelihood", "expected_complete_ll", "e_step", "m_step", "init_model", "fit_em",
    "predict_cluster", "sample", "default_reg",
]
