"""Exception hierarchy shared across the package."""


class LinediagError(Exception):
    """Base class for all package errors."""


class ValidationError(LinediagError):
    """A domain object violates one of its invariants."""


class UnknownVariable(LinediagError):
    """A variable name does not resolve in the catalog or graph."""


class EmptyDataset(LinediagError):
    """No usable rows remain after cleaning."""


class NonNumericInput(LinediagError):
    """A numeric-only operation received non-numeric columns."""


class InsufficientData(LinediagError):
    """Too few samples for the requested computation."""


class MissingColumn(LinediagError):
    """A required column is absent from the table or row."""


class ModelUnavailable(LinediagError):
    """No fitted model exists and none can be fitted from the input."""


class SingularCondSet(LinediagError):
    """Correlation submatrix for a conditioning set is singular."""


class UndirectedGraphError(LinediagError):
    """An operation requires a fully directed graph."""


class GraphUnavailable(LinediagError):
    """No causal graph was supplied and none can be derived."""


class InvalidCard(LinediagError):
    """An agent card fails validation."""


class ConflictError(LinediagError):
    """A registration conflicts with an existing card's schema."""


class NoAgentForCapability(LinediagError):
    """No registered agent offers the requested capability."""


class AgentTimeout(LinediagError):
    """A downstream agent did not answer within the deadline."""

    def __init__(self, message: str, partial_events: list | None = None):
        super().__init__(message)
        self.partial_events = partial_events or []


class ChainMappingError(LinediagError):
    """A postprocess rule's input mapping references a missing field."""


class UnknownTask(LinediagError):
    """No events exist for the given task id."""


class UnplannableQuery(LinediagError):
    """No workflow template matches the query."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
