"""Shiryaev-Roberts changepoint detection with exact operating characteristics.

Modules: ``model`` (pre/post-change laws), ``detectors`` (SR, SR-r, SRP),
``numerics`` (quadrature and integral-equation kernels), ``oc`` (operating
characteristics by integral equations), ``asymptotics`` (overshoot and
stationary-law constants), ``montecarlo`` (independent simulation checks)
and ``cli``.
"""

__version__ = "0.1.0"

from .detectors import SR, SR_R, SRP, Procedure, ShiryaevRoberts, run_detector, sr_step  # noqa: E402
from .exceptions import (  # noqa: E402
    CalibrationError,
    ConfigurationError,
    DesignError,
    DomainError,
    NumericalError,
    ResolutionError,
    SRDetectError,
    UnsupportedModelError,
)
from .model import ChangepointModel, beta_model, custom_model, exponential_model, gaussian_model, get_model  # noqa: E402
from .oc import (  # noqa: E402
    OcResult,
    QuasiStationary,
    arl,
    calibrate_threshold,
    lower_bound,
    operating_characteristics,
    quasi_stationary,
)

__all__ = [
    "__version__",
    "SR",
    "SR_R",
    "SRP",
    "Procedure",
    "ShiryaevRoberts",
    "run_detector",
    "sr_step",
    "ChangepointModel",
    "beta_model",
    "gaussian_model",
    "exponential_model",
    "custom_model",
    "get_model",
    "OcResult",
    "QuasiStationary",
    "arl",
    "calibrate_threshold",
    "lower_bound",
    "operating_characteristics",
    "quasi_stationary",
    "SRDetectError",
    "ConfigurationError",
    "DomainError",
    "UnsupportedModelError",
    "NumericalError",
    "CalibrationError",
    "ResolutionError",
    "DesignError",
]
