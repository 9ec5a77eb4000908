"""
errors.py

Exceptions raised across the tilearray packages. Everything derives from
TileArrayError so the CLI can turn any simulator failure into exit code 1.
"""


class TileArrayError(Exception):
    pass


class TraceSyntaxError(TileArrayError):
    """
    Raised by the trace parser. Carries the 1-based line and column of the offending token.
    """

    def __init__(self, line, column, message):
        self.line = line
        self.column = column
        self.message = message
        super(TraceSyntaxError, self).__init__("line %d, column %d: %s" % (line, column, message))


class TraceValidationError(TileArrayError):
    """
    Raised when a caller asks for a validated trace and validate() reported violations.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super(TraceValidationError, self).__init__("; ".join(str(v) for v in self.violations))


class LayerError(TileArrayError):
    pass


class DescriptorSyntaxError(LayerError):

    def __init__(self, line, message):
        self.line = line
        super(DescriptorSyntaxError, self).__init__("line %d: %s" % (line, message))


class TilingError(TileArrayError):
    pass


class RegisterPressureError(TilingError):
    pass


class PolicyError(TileArrayError):
    pass


class EngineConsistencyError(TileArrayError):
    """
    Fatal diagnostic from the cycle engine, e.g. two ops claiming one PE multiplier in the same cycle.
    """

    def __init__(self, cycle, message):
        self.cycle = cycle
        super(EngineConsistencyError, self).__init__("cycle %d: %s" % (cycle, message))


class MemoryAccessError(TileArrayError):
    pass


class DeadlockError(TileArrayError):

    def __init__(self, cycle, blocked):
        self.cycle = cycle
        self.blocked = blocked
        super(DeadlockError, self).__init__("no progress by cycle %d; blocked: %s" % (cycle, blocked))


class TraceMismatchError(TileArrayError):
    pass
