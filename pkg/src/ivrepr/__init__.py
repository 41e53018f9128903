"""Instrument-guided treatment representations: LIRR, IRAE and soft interventions."""

from .dgp import Dims, NoiseScales, Variant, generate
from .ivreg import ols_fit, pca_fit, tsls_fit
from .lirr import lirr_fit, lirr_intervene, pca_repr_fit

__version__ = "0.1.0"

__all__ = [
    "Dims",
    "NoiseScales",
    "Variant",
    "generate",
    "ols_fit",
    "pca_fit",
    "tsls_fit",
    "lirr_fit",
    "lirr_intervene",
    "pca_repr_fit",
]
