"""Mean-field supercurrent simulator on the periodic square.

The package evolves a nonnegative vortex density ``omega`` transported by a
supercurrent ``v`` that is reconstructed from ``omega`` (and, in the
compressible model, from ``zeta = div(a v)``) through weighted elliptic
problems with weight ``a = exp(h)``.  An independent characteristic solver
covers the degenerate parabolic regime.

Modules
-------
fields       grid, spectral calculus, pinning weight, parameters and state
elliptic     variable-coefficient Poisson solver and velocity reconstruction
evolution    finite-volume transport, ``zeta`` update, time stepping, Picard
degenerate   characteristic solver for the degenerate parabolic regime
diagnostics  conserved quantities, identities, decay bounds, CSV rows
cli          configuration files and the ``meanvort`` command
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketFailure,
    CflViolation,
    Divergence,
    InsufficientSnapshots,
    MeanvortError,
    NonConvergence,
    OutOfRange,
    RegimeMismatch,
)
from .fields import Grid2D, ModelParams, PinningProfile, Regime, State, flat_pinning, make_pinning  # noqa: E402

__all__ = [
    "__version__",
    "BracketFailure",
    "CflViolation",
    "Divergence",
    "Grid2D",
    "InsufficientSnapshots",
    "MeanvortError",
    "ModelParams",
    "NonConvergence",
    "OutOfRange",
    "PinningProfile",
    "Regime",
    "RegimeMismatch",
    "State",
    "flat_pinning",
    "make_pinning",
]
