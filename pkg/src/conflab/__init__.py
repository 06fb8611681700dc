"""conflab: a numerical laboratory for the conformality energy of maps
between constant-curvature manifolds."""

import jax

# Every jet, residual and quadrature in the package assumes double precision.
jax.config.update("jax_enable_x64", True)

from .errors import (  # noqa: E402
    ChartSingularity,
    ConfigError,
    ConflabError,
    DegenerateBasis,
    NonFiniteDerivative,
    NotASphere,
    NotEmbedded,
    ResolutionTooSmall,
    StepFailure,
    UnknownPreset,
)
from .geometry import (  # noqa: E402
    ManifoldDescriptor,
    QuadratureGrid,
    circle_product,
    quadrature_grid,
    sphere,
)
from .calculus import SmoothMap, conformality_state, div_sigma, jet, phi  # noqa: E402
from .presets import make_preset  # noqa: E402

__version__ = "0.1.0"

__all__ = [
    "ChartSingularity",
    "ConfigError",
    "ConflabError",
    "DegenerateBasis",
    "ManifoldDescriptor",
    "NonFiniteDerivative",
    "NotASphere",
    "NotEmbedded",
    "QuadratureGrid",
    "ResolutionTooSmall",
    "SmoothMap",
    "StepFailure",
    "UnknownPreset",
    "circle_product",
    "conformality_state",
    "div_sigma",
    "jet",
    "make_preset",
    "phi",
    "quadrature_grid",
    "sphere",
]
