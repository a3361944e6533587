"""Per-pixel clustering of images and foreground selection."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_image, check_same_shape
from .baselines import KMeansModel, kmeans_predict
from .exceptions import ContractViolation
from .imageops import flatten
from .metrics import dice
from .mixture import AsymmetricMixture, cluster_posteriors

LUMA = np.array([0.299, 0.587, 0.114])
POLICIES = ("darkest-mean", "index", "best-dice")


def _is_net(source):
    from .toynet import ToyNet

    return isinstance(source, ToyNet)


def segment(image, source):
    """Cluster every pixel of ``image``.

    ``source`` is a fitted :class:`AsymmetricMixture`, a :class:`KMeansModel`
    or a trained ``ToyNet``. Returns ``(labels, zmap)`` with labels of shape
    (H, W) and the (H, W, K) posterior map; k-means gives a one-hot map.
    Ties go to the lowest cluster index.
    """
    image = check_image(image)
    H, W = image.shape[:2]
    if isinstance(source, AsymmetricMixture):
        if source.dim != 3:
            raise ContractViolation(f"model expects {source.dim} features, images have 3")
        z = cluster_posteriors(flatten(image), source)
        zmap = z.reshape(H, W, -1)
    elif isinstance(source, KMeansModel):
        labels = kmeans_predict(flatten(image), source)
        zmap = np.eye(source.n_clusters)[labels].reshape(H, W, -1)
    elif _is_net(source):
        from .toynet import net_forward

        zmap, _ = net_forward(image, source)
    else:
        raise ContractViolation(f"cannot segment with a {type(source).__name__}")
    return np.argmax(zmap, axis=-1), zmap


def cluster_colors(source, image=None):
    """Mean colour of each cluster.

    Models carry their own means. For a posterior map the means are the
    posterior-weighted averages of ``image``.
    """
    if isinstance(source, AsymmetricMixture):
        return source.cluster_means
    if isinstance(source, KMeansModel):
        return np.asarray(source.centroids)
    zmap = np.asarray(source, dtype=np.float64)
    if image is None:
        raise ContractViolation("a posterior map needs the image to compute cluster colours")
    image = check_image(image)
    z = zmap.reshape(-1, zmap.shape[-1])
    mass = z.sum(axis=0)
    colors = z.T @ flatten(image)
    with np.errstate(invalid="ignore", divide="ignore"):
        colors = colors / mass[:, None]
    # empty clusters can never be the darkest
    return np.where(mass[:, None] > 0, colors, np.inf)


@dataclass(frozen=True, eq=False)
class Foreground:
    mask: np.ndarray
    index: int


def parse_policy(policy):
    """``"darkest-mean"``, ``"best-dice"`` or ``"index:k"`` -> (name, k)."""
    if isinstance(policy, tuple):
        return policy
    if policy in ("darkest-mean", "best-dice"):
        return policy, None
    if isinstance(policy, str) and policy.startswith("index:"):
        try:
            return "index", int(policy[len("index:"):])
        except ValueError:
            pass
    raise ContractViolation(f"unknown foreground policy {policy!r}")


def select_foreground(labels, source=None, policy="darkest-mean", image=None, reference=None):
    """Pick the cluster that represents cells.

    ``darkest-mean`` takes the cluster whose mean colour has the lowest
    luminance (nuclei stain dark). ``index:k`` takes cluster ``k``.
    ``best-dice`` takes the cluster with the highest Dice against
    ``reference`` and is meant for evaluation only.
    """
    labels = np.asarray(labels)
    name, k = parse_policy(policy)
    if name == "index":
        if k < 0:
            raise ContractViolation(f"cluster index must be non-negative, got {k}")
        index = k
    elif name == "darkest-mean":
        if source is None:
            raise ContractViolation("darkest-mean needs a model or posterior map")
        colors = np.asarray(cluster_colors(source, image), dtype=np.float64)
        index = int(np.argmin(colors @ LUMA))
    else:
        if reference is None:
            raise ContractViolation("best-dice needs a reference mask")
        reference = np.asarray(reference, dtype=bool)
        check_same_shape(labels, reference, "label map and reference")
        n_clusters = int(labels.max()) + 1
        if source is not None and not isinstance(source, np.ndarray):
            n_clusters = max(n_clusters, _n_clusters(source))
        scores = [dice(labels == j, reference).score for j in range(n_clusters)]
        index = int(np.argmax(scores))
    return Foreground(labels == index, index)


def _n_clusters(source):
    if isinstance(source, AsymmetricMixture):
        return source.n_components
    if isinstance(source, KMeansModel):
        return source.n_clusters
    return source.K


OVERLAY_COLORS = {
    "tp": (0.0, 1.0, 0.0),
    "fp": (1.0, 1.0, 0.0),
    "fn": (1.0, 0.0, 0.0),
}


def render_overlay(pred, gt):
    """Colour-code agreement: TP green, FP yellow, FN red, TN black."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    check_same_shape(pred, gt, "masks")
    out = np.zeros(pred.shape + (3,))
    out[pred & gt] = OVERLAY_COLORS["tp"]
    out[pred & ~gt] = OVERLAY_COLORS["fp"]
    out[~pred & gt] = OVERLAY_COLORS["fn"]
    return out
