"""Exception types shared across the package."""


class DermTriageError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(DermTriageError, ValueError):
    """A parameter value is outside its documented range."""


class InputError(DermTriageError, ValueError):
    """Input data violates a precondition (shape, range, emptiness)."""


class ValidationError(DermTriageError, ValueError):
    """A structured value fails its own consistency rules."""


class ParseError(DermTriageError, ValueError):
    """A text artifact could not be parsed.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ConfigurationError(DermTriageError):
    """The runtime configuration is unusable (bad roster, bad credentials)."""


class BackendError(DermTriageError):
    """A classifier backend failed. Carries the offending model id."""

    def __init__(self, message, model_id=None):
        super().__init__(message)
        self.model_id = model_id


class TransportError(DermTriageError):
    """An LLM request failed after exhausting retries."""


class TransientTransportError(TransportError):
    """A retryable transport failure (timeout, connection reset, 5xx)."""


class ProviderError(DermTriageError):
    """The LLM provider returned an unusable completion."""


class UndefinedRateError(DermTriageError, ValueError):
    """A rate has a zero denominator for the requested class."""
