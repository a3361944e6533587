"""Deterministic synthetic data: skewed feature samples and H&E-like cell images."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_count
from .exceptions import ContractViolation
from .mixture import sample


def gen_amm_dataset(model, n, seed=0):
    """Draw ``n`` labelled rows from a hierarchical mixture."""
    return sample(model, n, seed=seed)


def _sum_of_exponentials(rng, shape, scale, size):
    return scale * rng.standard_exponential(size=size + (shape,)).sum(axis=-1)


def gen_skewed_dataset(kind, params, n, seed=0, dims=1):
    """I.i.d. right-skewed draws, shape ``(n, dims)``.

    ``kind="gamma"`` takes ``{"shape", "scale"}``; integer shapes are built
    as sums of exponentials. ``kind="lognormal"`` takes ``{"mu", "sigma"}``
    and exponentiates a normal draw.
    """
    n = check_count(n, "n")
    dims = check_count(dims, "dims")
    rng = np.random.default_rng(seed)
    size = (n, dims)
    if kind == "gamma":
        shape, scale = float(params["shape"]), float(params["scale"])
        if shape <= 0 or scale <= 0:
            raise ContractViolation("gamma shape and scale must be positive")
        if shape.is_integer():
            return _sum_of_exponentials(rng, int(shape), scale, size)
        return rng.gamma(shape, scale, size=size)
    if kind == "lognormal":
        mu, sigma = float(params.get("mu", 0.0)), float(params["sigma"])
        if sigma <= 0:
            raise ContractViolation("lognormal sigma must be positive")
        return np.exp(mu + sigma * rng.standard_normal(size))
    raise ContractViolation(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class ColorDistribution:
    """Pixel colours ``base + t * direction + noise`` with ``t ~ Gamma``.

    ``skew_scale = 0`` gives a plain Gaussian around ``base``. A positive
    scale pushes a right-skewed tail along ``direction``.
    """

    base: tuple
    noise: float = 0.03
    direction: tuple = (0.0, 0.0, 0.0)
    skew_shape: float = 2.0
    skew_scale: float = 0.0

    def draw(self, rng, n):
        base = np.asarray(self.base, dtype=np.float64)
        colors = base + self.noise * rng.standard_normal((n, 3))
        if self.skew_scale > 0:
            t = rng.gamma(self.skew_shape, self.skew_scale, size=(n, 1))
            colors += t * np.asarray(self.direction, dtype=np.float64)
        return np.clip(colors, 0.0, 1.0)


def _unit(frm, to):
    v = np.subtract(to, frm)
    return tuple((v / np.linalg.norm(v)).tolist())


PALE_PINK = (0.93, 0.78, 0.86)
DARK_PURPLE = (0.28, 0.14, 0.42)
DEEP_PINK = (0.85, 0.45, 0.70)
NEAR_WHITE = (0.97, 0.96, 0.98)

# Every class is right-skewed so that one Gaussian per class misfits:
# nuclei fade toward pink, stroma deepens toward eosin, lumen tints pink.
NUCLEUS = ColorDistribution(
    base=DARK_PURPLE, noise=0.025, direction=_unit(DARK_PURPLE, PALE_PINK),
    skew_shape=1.5, skew_scale=0.2,
)
BACKGROUND = ColorDistribution(
    base=PALE_PINK, noise=0.03, direction=_unit(PALE_PINK, DEEP_PINK),
    skew_shape=1.5, skew_scale=0.08,
)
LUMEN = ColorDistribution(
    base=NEAR_WHITE, noise=0.015, direction=_unit(NEAR_WHITE, PALE_PINK),
    skew_shape=1.5, skew_scale=0.04,
)


@dataclass(frozen=True)
class Ellipse:
    cy: float
    cx: float
    a: float  # semi-axis along the rotated x direction
    b: float
    angle: float

    def contains(self, y, x):
        dy, dx = y - self.cy, x - self.cx
        c, s = np.cos(self.angle), np.sin(self.angle)
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.a) ** 2 + (v / self.b) ** 2 <= 1.0


MIN_AXIS, MAX_AXIS = 5.0, 20.0


def sample_ellipses(W, H, count, rng):
    """Random ellipses with full axis lengths in [5, 20] px, centred inside the image."""
    out = []
    for _ in range(count):
        a, b = rng.uniform(MIN_AXIS, MAX_AXIS, size=2) / 2.0
        out.append(Ellipse(
            cy=float(rng.uniform(0, H - 1)), cx=float(rng.uniform(0, W - 1)),
            a=float(a), b=float(b), angle=float(rng.uniform(0, np.pi)),
        ))
    return out


def _sample_lumens(W, H, count, rng):
    out = []
    for _ in range(count):
        a = rng.uniform(0.125, 0.25) * W
        b = rng.uniform(0.125, 0.25) * H
        out.append(Ellipse(
            cy=float(rng.uniform(0, H - 1)), cx=float(rng.uniform(0, W - 1)),
            a=float(a), b=float(b), angle=float(rng.uniform(0, np.pi)),
        ))
    return out


def rasterize(ellipses, W, H):
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    mask = np.zeros((H, W), dtype=bool)
    for e in ellipses:
        mask |= e.contains(yy, xx)
    return mask


def gen_synthetic_cells(W=64, H=64, cell_count=12, fg_distribution=NUCLEUS,
                        bg_distribution=BACKGROUND, seed=0, return_ellipses=False,
                        lumen_count=2, lumen_distribution=LUMEN):
    """H&E-like image with dark elliptical "nuclei" on a pale background.

    Returns ``(image, mask)`` where image is (H, W, 3) in [0, 1] and mask is
    the union of the ellipses. Overlapping cells are allowed. ``lumen_count``
    large near-white background regions (axes of a quarter to a half of the
    image) can be added under the cells as a third tissue class.
    """
    W = check_count(W, "W")
    H = check_count(H, "H")
    cell_count = check_count(cell_count, "cell_count", minimum=0)
    if cell_count and min(W, H) < MIN_AXIS:
        raise ContractViolation(f"a {W}x{H} image cannot hold cells of axis >= {MIN_AXIS:g} px")
    rng = np.random.default_rng(seed)
    ellipses = sample_ellipses(W, H, cell_count, rng)
    mask = rasterize(ellipses, W, H)
    lumen = rasterize(_sample_lumens(W, H, lumen_count, rng), W, H) & ~mask
    stroma = ~mask & ~lumen
    image = np.empty((H, W, 3))
    image[stroma] = bg_distribution.draw(rng, int(stroma.sum()))
    image[lumen] = lumen_distribution.draw(rng, int(lumen.sum()))
    image[mask] = fg_distribution.draw(rng, int(mask.sum()))
    if return_ellipses:
        return image, mask, ellipses
    return image, mask
