"""Exception types raised by the solvers and checkers."""


class LayerlabError(Exception):
    """Base class for all package errors."""


class ConfigError(LayerlabError):
    """Invalid run configuration (maps to exit code 2)."""


class NewtonDiverged(LayerlabError):
    """A damped Newton iteration failed to converge."""


class SingularSystem(LayerlabError):
    """A linear system could not be solved."""


class QuadratureFailure(LayerlabError):
    """The first-integral quadrature hit a nonpositive potential."""


class WindowTooShort(LayerlabError):
    """A decay-rate fit window contains too few nodes."""


class AllZero(LayerlabError):
    """Every value handed to an order fit is below the zero threshold."""


class MissingProfiles(LayerlabError):
    """Profiles for a requested perturbation parameter were not prepared."""


class ArcSensitivity(LayerlabError):
    """The corner solution depends on the truncation radius more than allowed."""
