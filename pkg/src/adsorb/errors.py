"""Exception hierarchy shared by all adsorb modules."""


class AdsorbError(Exception):
    """Base class for every error raised by this package."""


class ParseError(AdsorbError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"{message}, line {line}"
        super().__init__(message)


class StructureError(AdsorbError):
    pass


class UnsupportedInputError(AdsorbError):
    pass


class RegistryError(AdsorbError, LookupError):
    pass


class NoSurfaceError(AdsorbError):
    pass


class DegeneracyError(AdsorbError):
    pass


class EmptyRequestError(AdsorbError, ValueError):
    pass


class PlacementError(AdsorbError):
    pass


class NoMatchingSiteError(AdsorbError):
    pass


class ParameterError(AdsorbError, ValueError):
    pass


class CalculatorError(AdsorbError):
    pass


class NonFiniteError(CalculatorError):
    """Calculator produced a non-finite energy or force."""


class RelaxationError(AdsorbError):
    pass


class AllFilteredError(AdsorbError):
    def __init__(self, message, reasons=None):
        self.reasons = dict(reasons or {})
        super().__init__(message)


class ChatError(AdsorbError):
    """Transport-level failure talking to a chat-completions endpoint."""


class ChatAuthError(ChatError):
    pass


class ChatTimeoutError(ChatError):
    pass


class ChatSchemaError(ChatError):
    pass


class ChatHTTPError(ChatError):
    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)


class SolutionParseError(AdsorbError):
    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message)


class PlannerError(AdsorbError):
    def __init__(self, message, last_reply=None):
        self.last_reply = last_reply
        super().__init__(message)


class DerivationError(AdsorbError):
    pass


class AgentFailure(AdsorbError):
    def __init__(self, message, transcript=None):
        self.transcript = list(transcript or [])
        super().__init__(message)


class SchemaError(AdsorbError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
