"""Gaussian-mixture decomposition of MALDI-ToF mass spectra.

The main entry points are :func:`msgmm.pipeline.run_pipeline` for whole
spectra, :func:`msgmm.em.select_model` for single fragments and the
``msgmm`` command-line tool.
"""

from .core import GaussianComponent, MixtureModel, Spectrum, SpectrumSet
from .errors import ConfigError, DataError, MsgmmError, NumericalFailure
from .pipeline import PipelineConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "GaussianComponent",
    "MixtureModel",
    "MsgmmError",
    "NumericalFailure",
    "PipelineConfig",
    "Spectrum",
    "SpectrumSet",
    "run_pipeline",
]
