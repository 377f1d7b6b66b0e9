"""Low-rank multivariate autoregressive factor decomposition with variational Bayes."""

from .core import (
    DimensionError,
    LaggedDesign,
    ModelSpec,
    NumericalError,
    TimeSeries,
    ValidationError,
    center,
    embed_lags,
)
from .vb import (
    FittedModel,
    FreeEnergyReport,
    GammaFamily,
    fit,
    free_energy,
    predict_one_step,
    reconstruct,
    transform,
)

__version__ = "0.1.0"
