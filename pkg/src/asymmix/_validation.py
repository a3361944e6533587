"""Input validation helpers.

Thin wrappers over :func:`sklearn.utils.check_array` that translate sklearn's
generic ``ValueError`` into :class:`~asymmix.exceptions.ContractViolation` so
callers can tell a broken precondition apart from a numerical failure.
"""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import ContractViolation


def check_data(X, n_features=None, min_samples=1):
    """Validate a feature matrix and return it as C-contiguous float64.

    1-D input is treated as a single column (N samples, D=1).
    """
    X = np.asarray(X) if not hasattr(X, "__array__") else X
    if np.ndim(X) == 1:
        X = np.reshape(X, (-1, 1))
    try:
        X = check_array(X, dtype=np.float64, order="C", ensure_min_samples=min_samples)
    except ValueError as exc:
        raise ContractViolation(str(exc)) from exc
    if n_features is not None and X.shape[1] != n_features:
        raise ContractViolation(
            f"data has {X.shape[1]} features but the model expects {n_features}"
        )
    return X


def check_point(x, n_features):
    """Validate a single D-vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1 or x.shape[0] != n_features:
        raise ContractViolation(
            f"point has shape {x.shape} but the model expects ({n_features},)"
        )
    if not np.all(np.isfinite(x)):
        raise ContractViolation("point contains non-finite values")
    return x


def check_count(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise ContractViolation(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ContractViolation(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_image(image):
    """Validate an RGB image array of shape (H, W, 3) with values in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ContractViolation(f"expected an (H, W, 3) image, got shape {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ContractViolation("image must be at least 1x1")
    if not np.all(np.isfinite(image)) or image.min() < 0.0 or image.max() > 1.0:
        raise ContractViolation("image values must lie in [0, 1]")
    return image


def check_same_shape(a, b, what="arrays"):
    if np.shape(a) != np.shape(b):
        raise ContractViolation(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")


def seed_from(random_state):
    """Turn an sklearn-style ``random_state`` into an integer seed.

    Integers pass through unchanged so fixed-seed runs stay reproducible;
    ``None`` and ``RandomState`` instances draw a fresh seed.
    """
    if isinstance(random_state, numbers.Integral) and not isinstance(random_state, bool):
        return int(random_state)
    if random_state is None:
        return int(np.random.SeedSequence().generate_state(1)[0])
    if isinstance(random_state, np.random.RandomState):
        return int(random_state.randint(0, 2**31 - 1))
    if isinstance(random_state, np.random.Generator):
        return int(random_state.integers(0, 2**31 - 1))
    raise ContractViolation(f"cannot derive a seed from {random_state!r}")
