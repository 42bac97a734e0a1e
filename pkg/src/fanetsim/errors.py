"""Exception types raised by the simulator."""


class FanetSimError(Exception):
    """Base class for all simulator errors."""


class InvalidScenarioError(FanetSimError, ValueError):
    pass


class UnknownMcsError(FanetSimError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DomainError(FanetSimError, ValueError):
    pass


class ProtocolError(FanetSimError):
    pass


class UndefinedMetricError(FanetSimError, ArithmeticError):
    pass


class ConfigError(FanetSimError, ValueError):
    """Bad configuration text; carries the offending key and line number."""

    def __init__(self, message, key=None, line=None):
        self.message = message
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
