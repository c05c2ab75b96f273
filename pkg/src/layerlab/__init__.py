"""Boundary- and corner-layer asymptotics for ``-eps^2 Lap u + b(x, u) = 0``
on a convex sector, with numerical verification of the expansion's claims."""

from .errors import (
    AllZero,
    ArcSensitivity,
    ConfigError,
    LayerlabError,
    MissingProfiles,
    NewtonDiverged,
    QuadratureFailure,
    SingularSystem,
    WindowTooShort,
)
from .expansion import ExpansionBundle, ExpansionSettings, ExpansionWorkspace
from .geometry import SectorGeometry
from .problem import FIXTURES, SemilinearProblem, builtin_fixture, validate_assumptions

__version__ = "0.1.0"

__all__ = [
    "AllZero",
    "ArcSensitivity",
    "ConfigError",
    "ExpansionBundle",
    "ExpansionSettings",
    "ExpansionWorkspace",
    "FIXTURES",
    "LayerlabError",
    "MissingProfiles",
    "NewtonDiverged",
    "QuadratureFailure",
    "SectorGeometry",
    "SemilinearProblem",
    "SingularSystem",
    "WindowTooShort",
    "builtin_fixture",
    "validate_assumptions",
    "__version__",
]
