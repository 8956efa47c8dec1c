"""Exception hierarchy shared by all modules."""


class SafeguardError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(SafeguardError):
    """Configuration problems; the CLI maps these to exit code 2."""


class ParseError(ConfigError):
    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        self.reason = reason
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {reason}")


class ValidationError(ConfigError):
    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class DimensionMismatch(SafeguardError, ValueError):
    pass


class UnsupportedPair(SafeguardError, ValueError):
    pass


class DegenerateConfiguration(SafeguardError, ValueError):
    """Signed-distance gradient undefined (coincident centers)."""

    def __init__(self, message, pair_id=None):
        self.pair_id = pair_id
        super().__init__(message if pair_id is None else f"{message} (pair {pair_id})")


class DegenerateGradient(DegenerateConfiguration):
    pass


class NonFiniteState(SafeguardError, FloatingPointError):
    pass


class NonFiniteProblem(SafeguardError, FloatingPointError):
    pass


class InfeasibleScenario(SafeguardError, RuntimeError):
    pass


class EmptyLog(SafeguardError, ValueError):
    pass


class MismatchedSeedSets(SafeguardError, ValueError):
    pass
