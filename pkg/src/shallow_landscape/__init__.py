"""Training landscape of one-hidden-layer networks: derivatives, gradient
descent, certificates, and phase-transition experiments.
"""
__version__ = "0.1.0"

from .activations import ActivationSpec, gaussian_moments, parse_activation  # noqa: E402
from .errors import (  # noqa: E402
    ConvergenceError,
    DimensionError,
    DivergenceError,
    LandscapeError,
    ParseError,
    RankDeficiencyError,
    SizeCapError,
    UnsupportedActivationError,
)
from .kernels import BACKEND  # noqa: E402
from .network import Dataset, NetworkParams, PlantedModel  # noqa: E402
from .optimizer import GdConfig, gd_run  # noqa: E402
from .rng import Stream  # noqa: E402

__all__ = [
    "ActivationSpec", "BACKEND", "ConvergenceError", "Dataset", "DimensionError",
    "DivergenceError", "GdConfig", "LandscapeError", "NetworkParams", "ParseError",
    "PlantedModel", "RankDeficiencyError", "SizeCapError", "Stream",
    "UnsupportedActivationError", "gaussian_moments", "gd_run", "parse_activation",
    "__version__",
]
