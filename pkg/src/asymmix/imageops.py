"""Image arrays: file I/O, flattening, flips, colour jitter and patch cropping.

Images are ``(H, W, 3)`` float64 arrays in [0, 1]; masks are ``(H, W)``
booleans. Pixels are flattened in row-major order, so row ``i`` of the
feature matrix is pixel ``(i // W, i % W)``.
"""

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv
from PIL import Image as PILImage
from PIL import UnidentifiedImageError
from scipy import ndimage

from ._validation import check_image
from .exceptions import ContractViolation, ImageReadError, UnsupportedDepthError

FLIPS = ("H", "V")
_EIGHT_BIT_MODES = {"RGB", "RGBA", "L", "LA", "P", "1", "CMYK", "YCbCr"}


# --------------------------------------------------------------------------
# files


def _open(path):
    try:
        img = PILImage.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise ImageReadError(f"no such image: {path}") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageReadError(f"cannot decode image {path}: {exc}") from exc
    if img.mode not in _EIGHT_BIT_MODES:
        raise UnsupportedDepthError(f"{path}: mode {img.mode!r} is not 8 bits per channel")
    return img


def load_image(path):
    """Read an 8-bit PNG or binary PPM as an (H, W, 3) float image."""
    img = _open(path)
    return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


def to_uint8(image):
    return np.rint(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path, image):
    PILImage.fromarray(to_uint8(check_image(image)), mode="RGB").save(path, format="PNG")


def save_mask(path, mask):
    """Write a boolean mask as single-channel PNG, foreground 255."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ContractViolation(f"mask must be 2-D, got shape {mask.shape}")
    PILImage.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def load_mask(path):
    """Read a mask image; any non-zero pixel is foreground."""
    img = _open(path)
    return np.asarray(img.convert("L")) > 0


# --------------------------------------------------------------------------
# flattening


def flatten(image):
    """``(H, W, C)`` -> ``(H*W, C)`` in row-major pixel order."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise ContractViolation(f"expected an (H, W, C) array, got shape {image.shape}")
    return image.reshape(-1, image.shape[2])


def unflatten(values, W, H):
    """Inverse of :func:`flatten` for per-pixel labels or feature rows."""
    values = np.asarray(values)
    if values.shape[0] != W * H:
        raise ContractViolation(f"{values.shape[0]} values cannot fill a {W}x{H} image")
    return values.reshape((H, W) + values.shape[1:])


# --------------------------------------------------------------------------
# geometry


def apply_flip(array, flip):
    """Mirror an (H, W, ...) array: ``"H"`` left-right, ``"V"`` top-bottom,
    ``None`` or ``"I"`` leaves it untouched."""
    if flip in (None, "I"):
        return np.array(array, copy=True)
    if flip == "H":
        return np.ascontiguousarray(np.asarray(array)[:, ::-1])
    if flip == "V":
        return np.ascontiguousarray(np.asarray(array)[::-1])
    raise ContractViolation(f"unknown flip {flip!r}; expected 'H', 'V' or 'I'")


def resize_image(image, H, W):
    """Bilinear resize of an (h, w, 3) image."""
    image = np.asarray(image, dtype=np.float64)
    zoom = (H / image.shape[0], W / image.shape[1], 1)
    out = ndimage.zoom(image, zoom, order=1, mode="nearest", grid_mode=True)
    return np.clip(out, 0.0, 1.0)


def resize_mask(mask, H, W):
    """Nearest-neighbour resize of a boolean mask."""
    mask = np.asarray(mask, dtype=np.uint8)
    zoom = (H / mask.shape[0], W / mask.shape[1])
    return ndimage.zoom(mask, zoom, order=0, mode="nearest", grid_mode=True).astype(bool)


def _starts(length, size):
    if length <= size:
        return [0]
    starts = list(range(0, length - size + 1, size))
    if starts[-1] != length - size:
        starts.append(length - size)
    return starts


def crop_patches(image, mask=None, size=512):
    """Sliding-window ``size`` x ``size`` patches.

    Images smaller than ``size`` along either axis are first resized up
    (bilinear for the image, nearest for the mask). The last window on each
    axis is shifted back so it ends at the border. Yields ``(image, mask)``
    pairs; ``mask`` is ``None`` when none was given.
    """
    image = check_image(image)
    h, w = image.shape[:2]
    if h < size or w < size:
        nh, nw = max(h, size), max(w, size)
        image = resize_image(image, nh, nw)
        mask = None if mask is None else resize_mask(mask, nh, nw)
        h, w = nh, nw
    for r in _starts(h, size):
        for c in _starts(w, size):
            patch = image[r:r + size, c:c + size]
            yield patch, (None if mask is None else mask[r:r + size, c:c + size])


# --------------------------------------------------------------------------
# colour jitter

PHOTOMETRIC_DEFAULTS = {"hue": 0.12, "saturation": 0.5, "brightness": 0.15}


def adjust_hsv(image, hue_shift=0.0, saturation_scale=1.0, value_scale=1.0):
    """Rotate hue (wrapping, in turns) and scale saturation and value."""
    hsv = rgb_to_hsv(check_image(image))
    hsv[..., 0] = np.mod(hsv[..., 0] + hue_shift, 1.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * saturation_scale, 0.0, 1.0)
    hsv[..., 2] = np.clip(hsv[..., 2] * value_scale, 0.0, 1.0)
    return np.clip(hsv_to_rgb(hsv), 0.0, 1.0)


def photometric_augment(image, factors=None, seed=0):
    """Random hue/saturation/brightness jitter.

    Each delta is uniform in ``[-factor, factor]``. Hue is shifted by the
    delta; saturation and brightness are scaled by ``1 + delta``.
    """
    factors = dict(PHOTOMETRIC_DEFAULTS if factors is None else factors)
    for name in ("hue", "saturation", "brightness"):
        f = float(factors.get(name, 0.0))
        if not 0.0 <= f <= 1.0:
            raise ContractViolation(f"{name} factor must lie in [0, 1], got {f}")
        factors[name] = f
    rng = np.random.default_rng(seed)
    dh, ds, dv = (rng.uniform(-factors[n], factors[n]) for n in ("hue", "saturation", "brightness"))
    return adjust_hsv(image, dh, 1.0 + ds, 1.0 + dv)
