"""
dtscat - DTCWT scattering features with OLS selection and Gaussian SVM.

Extracts translation-invariant scattering features from small colour
images with the dual-tree complex wavelet transform, selects
class-discriminative dimensions by orthogonal least squares and classifies
them with one-versus-all kernel SVMs.
"""

__version__ = "0.1.0"

from .config import Resolution, RunManifest, ScatterConfig, load_config
from .dtcwt import DtcwtPyramid, FilterSet, forward, inverse, load_default_filters
from .errors import DataError, DtscatError, NumericalError, UsageError
from .scatternet import ScatterFeatureVector, extract_features, feature_index, normalize_features
from .featsel import OlsSelection, apply_selection, ols_select, select_all_classes
from .classify import SvmModel, cross_validate, predict, train
from .data import LabeledImageSet, load_cifar, stratified_subsample

__all__ = [
    "Resolution",
    "RunManifest",
    "ScatterConfig",
    "load_config",
    "DtcwtPyramid",
    "FilterSet",
    "forward",
    "inverse",
    "load_default_filters",
    "DtscatError",
    "UsageError",
    "DataError",
    "NumericalError",
    "ScatterFeatureVector",
    "extract_features",
    "feature_index",
    "normalize_features",
    "OlsSelection",
    "apply_selection",
    "ols_select",
    "select_all_classes",
    "SvmModel",
    "cross_validate",
    "predict",
    "train",
    "LabeledImageSet",
    "load_cifar",
    "stratified_subsample",
]
