"""Exception hierarchy.

Configuration problems map to CLI exit code 2, numerical failures to 3.
"""


class KlucrlError(Exception):
    pass


class ConfigError(KlucrlError, ValueError):
    """Invalid model, environment or agent configuration."""


class InvalidConfig(ConfigError):
    pass


class DomainError(ConfigError):
    """Argument outside the domain where a formula is defined."""


class ReducibleChain(ConfigError):
    """The induced Markov chain has more than one closed class."""


class NotCommunicating(ConfigError):
    """Some state cannot be reached from some other state under any policy."""


class NumericalError(KlucrlError, ArithmeticError):
    pass


class NoConvergence(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class NumericalFailure(NumericalError):
    pass
