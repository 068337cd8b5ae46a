"""Exception and warning types raised across the package."""


class LenardError(Exception):
    """Base class for all errors raised by :mod:`lenard`."""


class NotExact(LenardError, ArithmeticError):
    """A differential polynomial has no antiderivative inside the ring."""


class OrderMismatch(LenardError, ValueError):
    """The requested operator order is not supported by the chosen builder."""


class SingularPoint(LenardError, ValueError):
    """A sample point hits an excluded point or leaves the potential's domain."""


class Blowup(LenardError, RuntimeError):
    """An ODE solution exceeded the overflow guard before the interval end."""

    def __init__(self, message, abscissa=None):
        super().__init__(message)
        self.abscissa = abscissa


class NotConstant(LenardError, ValueError):
    """A first integral drifts beyond tolerance along the interval."""


class XiVanishes(LenardError, ValueError):
    """The symmetry coefficient xi has a zero inside the requested interval."""


class UnknownName(LenardError, KeyError):
    """No catalog entry is registered under the requested name."""


class IllConditioned(UserWarning):
    """Emitted when a least-squares design matrix is close to rank deficient."""
