"""Exception hierarchy."""


class SpinoptoError(Exception):
    """Base class for all package errors."""


class DomainError(SpinoptoError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class UnsupportedConfigurationError(SpinoptoError):
    """The requested analysis does not support this parameter configuration."""


class IntegrationError(SpinoptoError, ArithmeticError):
    """Time integration produced a non-finite state.

    Attributes
    ----------
    t_reached : float
        Last simulation time at which the state was finite.
    """

    def __init__(self, message, t_reached=float("nan")):
        super().__init__(message)
        self.t_reached = t_reached


class FitQualityError(SpinoptoError):
    """A ringdown or spectral fit did not meet its quality requirements."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class PoleProximityError(DomainError):
    """Frequency too close to the adiabatic-elimination pole."""


class ConfigError(SpinoptoError, ValueError):
    """Invalid run configuration document."""

    def __init__(self, message, path=""):
        prefixed = not path or message.startswith(path)
        super().__init__(message if prefixed else f"{path}: {message}")
        self.path = path
