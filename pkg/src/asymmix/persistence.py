"""Versioned plain-text formats for fitted models and network checkpoints.

Mixture model layout, one record per line::

    asymmix-model
    format_version 1
    K <int>
    M <int>
    D <int>
    pi <K floats>
    alpha <M floats>            # repeated per sub-mixture j, followed by
    mean <D floats>             #   per Gaussian m: mean ...
    covariance <D*D floats>     #   ... and row-major covariance
    end

Floats use 17 significant digits so a dump/load cycle is bit-exact. A
checkpoint is a model block followed by an ``asymmix-weights`` block holding
named arrays (``array <name> <shape...>`` then a ``values`` line).
"""

import numpy as np

from .exceptions import (
    ContractViolation,
    MalformedModelError,
    ModelInvariantError,
    ModelVersionError,
)
from .mixture import AsymmetricMixture

FORMAT_VERSION = 1
MODEL_MAGIC = "asymmix-model"
KMEANS_MAGIC = "asymmix-kmeans"
WEIGHTS_MAGIC = "asymmix-weights"


def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


class _Reader:
    """Line cursor that raises :class:`MalformedModelError` on any surprise."""

    def __init__(self, data):
        if isinstance(data, (bytes, bytearray)):
            try:
                data = bytes(data).decode("ascii")
            except UnicodeDecodeError as exc:
                raise MalformedModelError("stream is not ASCII text") from exc
        self.lines = data.splitlines()
        self.pos = 0

    def at_end(self):
        return self.pos >= len(self.lines)

    def next(self):
        if self.at_end():
            raise MalformedModelError("unexpected end of stream")
        line = self.lines[self.pos].split()
        self.pos += 1
        if not line:
            raise MalformedModelError(f"blank line at {self.pos}")
        return line

    def expect(self, key, count=None, cast=float):
        fields = self.next()
        if fields[0] != key:
            raise MalformedModelError(f"line {self.pos}: expected {key!r}, found {fields[0]!r}")
        values = fields[1:]
        if count is not None and len(values) != count:
            raise MalformedModelError(
                f"line {self.pos}: {key!r} needs {count} values, found {len(values)}"
            )
        try:
            return [cast(v) for v in values]
        except ValueError as exc:
            raise MalformedModelError(f"line {self.pos}: bad number in {key!r}") from exc

    def header(self, magic):
        fields = self.next()
        if fields != [magic]:
            raise MalformedModelError(f"missing {magic!r} header")
        (version,) = self.expect("format_version", 1, int)
        if version != FORMAT_VERSION:
            raise ModelVersionError(
                f"format_version {version} is not supported (expected {FORMAT_VERSION})"
            )

    def count(self, key):
        (n,) = self.expect(key, 1, int)
        if n < 1:
            raise MalformedModelError(f"{key} must be positive")
        return n


# --------------------------------------------------------------------------
# mixture models


def model_to_text(model):
    K, M, D = model.dims
    lines = [MODEL_MAGIC, f"format_version {FORMAT_VERSION}", f"K {K}", f"M {M}", f"D {D}"]
    lines.append("pi " + _fmt(model.weights))
    for comp in model.components:
        lines.append("alpha " + _fmt(comp.weights))
        for g in comp.gaussians:
            lines.append("mean " + _fmt(g.mean))
            lines.append("covariance " + _fmt(g.covariance))
    lines.append("end")
    return "\n".join(lines) + "\n"


def persist_model(model):
    """Serialise a model to bytes."""
    return model_to_text(model).encode("ascii")


def _read_model(reader):
    reader.header(MODEL_MAGIC)
    K, M, D = reader.count("K"), reader.count("M"), reader.count("D")
    pi = reader.expect("pi", K)
    alpha = np.empty((K, M))
    means = np.empty((K, M, D))
    covs = np.empty((K, M, D, D))
    for j in range(K):
        alpha[j] = reader.expect("alpha", M)
        for m in range(M):
            means[j, m] = reader.expect("mean", D)
            covs[j, m] = np.reshape(reader.expect("covariance", D * D), (D, D))
    reader.expect("end", 0)
    try:
        return AsymmetricMixture.from_arrays(pi, alpha, means, covs)
    except ContractViolation as exc:
        raise ModelInvariantError(str(exc)) from exc


def load_model(data):
    """Parse bytes (or text) written by :func:`persist_model`.

    Raises :class:`MalformedModelError`, :class:`ModelVersionError` or
    :class:`ModelInvariantError`.
    """
    reader = _Reader(data)
    model = _read_model(reader)
    if not reader.at_end():
        raise MalformedModelError("trailing data after model")
    return model


def save_model(path, model):
    with open(path, "wb") as fh:
        fh.write(persist_model(model))


def read_model_file(path):
    with open(path, "rb") as fh:
        return load_model(fh.read())


# --------------------------------------------------------------------------
# k-means centroids


def persist_kmeans(centroids):
    centroids = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    K, D = centroids.shape
    lines = [KMEANS_MAGIC, f"format_version {FORMAT_VERSION}", f"K {K}", f"D {D}"]
    lines += ["centroid " + _fmt(c) for c in centroids]
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("ascii")


def load_kmeans(data):
    reader = _Reader(data)
    reader.header(KMEANS_MAGIC)
    K, D = reader.count("K"), reader.count("D")
    centroids = np.array([reader.expect("centroid", D) for _ in range(K)])
    reader.expect("end", 0)
    if not np.all(np.isfinite(centroids)):
        raise ModelInvariantError("centroids must be finite")
    return centroids


# --------------------------------------------------------------------------
# checkpoints: model + named weight arrays


def persist_checkpoint(model, arrays):
    """``arrays`` is an ordered mapping of layer name to ndarray."""
    lines = [WEIGHTS_MAGIC, f"format_version {FORMAT_VERSION}", f"arrays {len(arrays)}"]
    for name, a in arrays.items():
        a = np.asarray(a, dtype=np.float64)
        lines.append(f"array {name} " + " ".join(str(s) for s in a.shape))
        lines.append("values " + _fmt(a))
    lines.append("end")
    return persist_model(model) + ("\n".join(lines) + "\n").encode("ascii")


def load_checkpoint(data):
    """Inverse of :func:`persist_checkpoint`; returns ``(model, arrays)``."""
    reader = _Reader(data)
    model = _read_model(reader)
    reader.header(WEIGHTS_MAGIC)
    (n,) = reader.expect("arrays", 1, int)
    arrays = {}
    for _ in range(n):
        fields = reader.next()
        if fields[0] != "array" or len(fields) < 2:
            raise MalformedModelError(f"line {reader.pos}: expected an array record")
        try:
            shape = tuple(int(s) for s in fields[2:])
        except ValueError as exc:
            raise MalformedModelError(f"line {reader.pos}: bad shape") from exc
        size = int(np.prod(shape)) if shape else 1
        arrays[fields[1]] = np.reshape(np.array(reader.expect("values", size)), shape)
    reader.expect("end", 0)
    if not reader.at_end():
        raise MalformedModelError("trailing data after checkpoint")
    return model, arrays
