from typing import Optional


class RydbergSolverError(Exception):
    """Base class for every error raised by the solver pipeline."""


# ---------- Parsing ----------

class ParseError(RydbergSolverError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        self.message = message
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class MalformedHeaderError(ParseError):
    pass


class IndexOutOfRangeError(ParseError):
    pass


class UnterminatedClauseError(ParseError):
    pass


class SelfLoopError(ParseError):
    pass


class DuplicateEdgeError(ParseError):
    pass


class EmptySubsetError(ParseError):
    pass


# ---------- Pipeline ----------

class UnsupportedError(RydbergSolverError):
    """Unsupported kind/flag combination or a missing threshold."""


class CircuitError(RydbergSolverError):
    """A circuit builder was called outside its preconditions."""


class LayerOverlapError(CircuitError):
    pass


class RoleConflictError(CircuitError):
    pass


class PlacementError(RydbergSolverError):
    pass


class SimulationCapError(RydbergSolverError):
    def __init__(self, width: int, cap: int):
        self.width = width
        self.cap = cap
        super().__init__(f"{width} qubits exceed the simulation cap of {cap}")


class NormDriftError(RydbergSolverError):
    pass
