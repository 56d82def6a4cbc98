"""Exception hierarchy shared by every agent and the CLI."""


class AgentFMError(Exception):
    """Base class; ``kind`` is the machine-readable tag the CLI prints."""

    kind = "error"


class InvalidArgumentError(AgentFMError, ValueError):
    kind = "invalid-argument"


class ParseError(AgentFMError, ValueError):
    kind = "parse-error"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(AgentFMError, ValueError):
    kind = "validation-error"

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class ConfigError(AgentFMError):
    kind = "config-error"


class StateError(AgentFMError):
    kind = "state-error"


class UnimputableSeriesError(AgentFMError):
    kind = "unimputable-series"

    def __init__(self, series_name):
        super().__init__(f"series {series_name!r} has no observed values")
        self.series_name = series_name


class SummarizationError(AgentFMError):
    kind = "summarization-error"

    def __init__(self, message, prompt):
        super().__init__(message)
        self.prompt = prompt


class GatewayError(AgentFMError):
    """Transport-level LLM failure (after retries)."""

    kind = "gateway-error"


class ProtocolError(AgentFMError):
    """The model answered, but not in the shape the request demanded."""

    kind = "protocol-error"


class GatingError(AgentFMError):
    kind = "gating-error"


class LabelError(AgentFMError, ValueError):
    kind = "label-error"


class RetrievalError(AgentFMError):
    kind = "retrieval-error"


class AlignmentError(AgentFMError):
    kind = "alignment-error"


class ChannelError(AgentFMError):
    kind = "channel-error"


class InsufficientDataError(AgentFMError):
    kind = "insufficient-data"
