"""k-means++ seeding that can resume from already chosen centres."""

import numpy as np


def _min_sq_dist(X, centers):
    d = np.full(X.shape[0], np.inf)
    for c in centers:
        d = np.minimum(d, np.sum((X - c) ** 2, axis=1))
    return d


def kmeans_plusplus(X, n_centers, rng, initial=(), n_local_trials=None):
    """Greedy k-means++: each new centre is the best of ``2 + log(k)`` D^2 draws.

    Returns row indices into ``X``. ``initial`` holds centres that are
    already fixed; the first centre is uniform only when it is empty.
    """
    N = X.shape[0]
    if n_local_trials is None:
        n_local_trials = 2 + int(np.log(max(n_centers + len(initial), 2)))
    centers = [np.asarray(c, dtype=np.float64) for c in initial]
    chosen = []
    if not centers:
        first = int(rng.integers(N))
        chosen.append(first)
        centers.append(X[first])
    closest = _min_sq_dist(X, centers)
    while len(chosen) < n_centers:
        total = closest.sum()
        if total <= 0.0:
            # every point already coincides with a centre
            cand = rng.integers(N, size=n_local_trials)
        else:
            cand = np.searchsorted(np.cumsum(closest), rng.uniform(size=n_local_trials) * total)
            cand = np.minimum(cand, N - 1)
        best, best_pot, best_closest = None, np.inf, None
        for c in cand:
            new_closest = np.minimum(closest, np.sum((X - X[c]) ** 2, axis=1))
            pot = new_closest.sum()
            if pot < best_pot:
                best, best_pot, best_closest = int(c), pot, new_closest
        chosen.append(best)
        centers.append(X[best])
        closest = best_closest
    return np.array(chosen, dtype=np.int64)
