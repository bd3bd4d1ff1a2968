"""Exception hierarchy shared by the compiler, simulator and CLI."""


class StreamCNNError(Exception):
    pass


class ArchitectureError(StreamCNNError):
    """Malformed or dimensionally inconsistent architecture document."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class ContainerError(StreamCNNError):
    """Corrupt parameter or tensor container."""


class AccumulatorOverflowError(StreamCNNError):
    pass


class InfeasibleBudgetError(StreamCNNError):
    pass


class PlanMismatchError(StreamCNNError):
    pass


class DeadlockError(StreamCNNError):
    """The pipeline stopped making progress; almost always a FIFO sizing problem."""
