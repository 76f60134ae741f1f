"""Exception hierarchy shared by the library and the command line."""


class WasserCLTError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(WasserCLTError, ValueError):
    """Invalid parameters, shapes or configuration documents."""


class DomainError(ConfigurationError):
    """A state lies outside the state space of the chain."""


class NonUniqueStationaryError(ConfigurationError):
    """The transition matrix has more than one closed communicating class."""

    def __init__(self, msg="non-unique invariant distribution"):
        super().__init__(msg)


class NumericalError(WasserCLTError, ArithmeticError):
    """A computation produced non-finite values or failed a residual check."""


class VerdictRefused(WasserCLTError):
    """Too few replicates to issue a statistical pass/fail verdict."""
