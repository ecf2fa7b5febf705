"""Exception types raised across the package.

Each class carries a ``category`` string; the CLI reports it verbatim so
callers can branch on failures without parsing messages.
"""


class SpinvaultError(Exception):
    category = "Error"


class ConfigError(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class ParseError(ConfigError):
    def __init__(self, msg, line=None, offset=None):
        super().__init__(msg if line is None else f"{msg} (line {line}, column {offset})")
        self.line = line
        self.offset = offset


class UnknownKey(ConfigError):
    pass


class MissingRequired(ConfigError):
    pass


class EmptyEnsemble(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class NonPositiveCoupling(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class InvalidCount(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class NotExplicit(SpinvaultError, TypeError):
    category = "ConfigInvalid"


class TruncationTooSmall(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class NonPositiveDuration(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class OutOfRange(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class UnsupportedKind(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class StepTooLarge(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class UnsupportedState(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class NotNormalized(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class EmptyGrid(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class InsufficientData(SpinvaultError, ValueError):
    category = "NumericalFailure"


class NonDecayingTrace(SpinvaultError, ValueError):
    category = "NumericalFailure"


class BothRatesZero(SpinvaultError, ValueError):
    category = "ConfigInvalid"


class NumericalFailure(SpinvaultError, RuntimeError):
    category = "NumericalFailure"

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class OutputUnwritable(SpinvaultError, OSError):
    category = "OutputUnwritable"
