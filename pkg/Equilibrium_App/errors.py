# errors.py - Exception hierarchy shared by the engine, compiler, explorer and CLI


class EquilibriumError(Exception):
    """Base class for every error raised by the package"""


class ModelSyntaxError(EquilibriumError):
    """Mini-language parse or resolution failure with a source position"""

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class RuleError(EquilibriumError):
    """Malformed rule (unmatched action or under-specified deletion)"""


class ActionError(EquilibriumError):
    """A rule action found the graph in a shape its lhs does not allow"""


class MissingEdgeError(EquilibriumError):
    pass


class NonContiguousPathError(EquilibriumError):
    pass


class AsymmetricSupportError(EquilibriumError):
    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"edge {edge[0]!r} -> {edge[1]!r} has no reverse edge")


class StateMismatchError(EquilibriumError):
    pass


class InvalidInstanceError(EquilibriumError):
    pass


class InvalidStateError(EquilibriumError):
    pass


class DivergenceError(EquilibriumError):
    pass


class EmptyOccupancyError(EquilibriumError):
    pass


class StateCapExceeded(EquilibriumError):
    """Exploration hit its state cap; the partial chain is kept on the exception"""

    def __init__(self, cap, partial=None, frontier_size=0):
        self.cap = cap
        self.partial = partial
        self.frontier_size = frontier_size
        super().__init__(f"state cap {cap} exceeded with {frontier_size} states still queued")
