"""Exception types shared across the package."""


class LowRankVlasovError(Exception):
    """Base class for all errors raised by this package."""


class MeshValidationError(LowRankVlasovError, ValueError):
    """Invalid mesh input (inverted element, inconsistent normals, bad file)."""

    def __init__(self, message, element=None, facet=None):
        super().__init__(message)
        self.element = element
        self.facet = facet


class NotPositiveDefiniteError(LowRankVlasovError, ValueError):
    pass


class RankDeficientError(LowRankVlasovError, ValueError):
    def __init__(self, message, column=None, substep=None):
        super().__init__(message)
        self.column = column
        self.substep = substep


class GaugeError(LowRankVlasovError, ValueError):
    pass


class NumericalBlowupError(LowRankVlasovError, ArithmeticError):
    """Non-finite values produced during time integration."""

    def __init__(self, message, t=None, substep=None):
        super().__init__(message)
        self.t = t
        self.substep = substep


class ConfigError(LowRankVlasovError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
