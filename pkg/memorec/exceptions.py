"""
Error types raised by the toolkit.

Every module raises a subclass of MemorecError; the management command turns
them into a diagnostic and exit status 1.
"""


class MemorecError(Exception):
    """Base class for all toolkit errors."""


class DocumentError(MemorecError):
    """A JSON document failed validation."""

    def __init__(self, document, details):
        self.document = document
        self.details = details
        super().__init__(f"Invalid {document}: {details}")


class TraceFormatError(MemorecError):
    """A trace line could not be parsed."""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"Trace line {line}: {reason}")


class NestingError(MemorecError):
    """A record's interval is not contained in the record it is nested under."""

    def __init__(self, record, reason):
        self.record = record
        self.reason = reason
        where = f"line {record.line}" if record.line is not None else f"session {record.session}"
        super().__init__(f"Nesting violation at {where} ({record.method}): {reason}")


class UnorderedTraceError(MemorecError):
    """Records handed to the replay are not in timestamp order."""

    def __init__(self, index, previous_start, start):
        self.index = index
        super().__init__(
            f"Record {index} starts at {start} ns, before the previous record ({previous_start} ns)"
        )


class NavigationError(MemorecError):
    """A navigation spec is structurally invalid."""


class DanglingReferenceError(NavigationError):
    def __init__(self, relation, vertex):
        self.relation = relation
        self.vertex = vertex
        super().__init__(f"'{relation}' references unknown request '{vertex}'")


class CyclicPrerequisiteError(NavigationError):
    def __init__(self, cycle):
        self.cycle = cycle
        path = ' -> '.join(edge[0] for edge in cycle) + f' -> {cycle[0][0]}'
        super().__init__(f"Prerequisite relation is cyclic: {path}")


class EmptyEntryError(NavigationError):
    def __init__(self, reason="no entry requests declared"):
        super().__init__(f"Empty entry set: {reason}")


class WorkloadGenerationError(MemorecError):
    """No request can follow the current state of a session."""

    def __init__(self, session, current, history):
        self.session = session
        self.current = current
        self.history = tuple(sorted(history))
        super().__init__(
            f"Session {session} is stuck after '{current}' "
            f"(visited: {', '.join(self.history) or 'nothing'})"
        )


class AppModelError(MemorecError):
    """A synthetic application model is inconsistent."""


class UnknownRequestError(AppModelError):
    def __init__(self, request):
        self.request = request
        super().__init__(f"Request '{request}' is not declared by the application model")


class UnknownMethodError(MemorecError):
    """Signatures missing from a purity manifest."""

    def __init__(self, methods):
        self.methods = tuple(sorted(methods))
        super().__init__(f"Methods missing from the purity manifest: {', '.join(self.methods)}")


class TraceMismatchError(MemorecError):
    """Metrics being compared were not produced from the same trace and cost model."""


class ConfigurationError(MemorecError):
    """A run configuration is incomplete or points at missing files."""


class ReportDestinationError(MemorecError):
    """Report files cannot be written to the requested destination."""
