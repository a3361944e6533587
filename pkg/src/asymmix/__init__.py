"""Hierarchical Gaussian mixtures for unsupervised pixel clustering and cell segmentation."""

from .estimators import (
    AsymmetricMixtureModel,
    DeepAsymmetricSegmenter,
    FlatGaussianMixture,
    MiniBatchKMeansClusterer,
)
from .exceptions import (
    AsymmixError,
    ContractViolation,
    ImageReadError,
    MalformedModelError,
    ModelInvariantError,
    ModelLoadError,
    ModelVersionError,
    UnsupportedDepthError,
)
from .mixture import (
    AsymmetricMixture,
    FitTrace,
    Responsibilities,
    amm_log_pdf,
    cluster_posteriors,
    e_step,
    expected_complete_ll,
    fit_em,
    init_model,
    log_likelihood,
    m_step,
    predict_cluster,
    sample,
)

__version__ = "0.1.0"

__all__ = [
    "AsymmetricMixture",
    "AsymmetricMixtureModel",
    "AsymmixError",
    "ContractViolation",
    "DeepAsymmetricSegmenter",
    "FitTrace",
    "FlatGaussianMixture",
    "ImageReadError",
    "MalformedModelError",
    "MiniBatchKMeansClusterer",
    "ModelInvariantError",
    "ModelLoadError",
    "ModelVersionError",
    "Responsibilities",
    "UnsupportedDepthError",
    "amm_log_pdf",
    "cluster_posteriors",
    "e_step",
    "expected_complete_ll",
    "fit_em",
    "init_model",
    "log_likelihood",
    "m_step",
    "predict_cluster",
    "sample",
]
