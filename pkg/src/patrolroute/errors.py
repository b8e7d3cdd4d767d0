"""Exception hierarchy.

``ConfigError`` subclasses map to CLI exit code 2, ``DataError`` subclasses to 3.
"""


class PatrolError(Exception):
    pass


class ConfigError(PatrolError):
    pass


class DataError(PatrolError):
    pass


class InvalidSpec(ConfigError):
    pass


class InvalidConfig(ConfigError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.field = field


class InvariantViolation(DataError):
    def __init__(self, invariant, detail=""):
        super().__init__(f"invariant violated: {invariant}" + (f": {detail}" if detail else ""))
        self.invariant = invariant


class EmptyGraph(DataError):
    pass


class UnknownNode(PatrolError, IndexError):
    pass


class TooManyAgents(ConfigError):
    pass


class IllegalAction(PatrolError):
    def __init__(self, agent, target):
        super().__init__(f"agent {agent} cannot move to node {target}")
        self.agent = agent
        self.target = target


class EpisodeFinished(PatrolError):
    pass


class EmptyMonitoredSet(DataError):
    pass


class MixedGraphs(DataError):
    pass


class DivergedTraining(PatrolError):
    pass


class SchemaMismatch(DataError):
    pass
