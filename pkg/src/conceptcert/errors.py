"""Exception hierarchy shared across the package."""


class ConceptCertError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(ConceptCertError, ValueError):
    """An argument is outside its documented domain."""


class DegenerateInputError(ConceptCertError, ValueError):
    """Input is structurally valid but degenerate (zero norm, zero variance)."""


class SupportError(ConceptCertError, ValueError):
    """Divergence is undefined because supports do not nest."""


class ResourceLimitError(ConceptCertError, ValueError):
    """Requested computation exceeds the documented size limits."""


class EmptyConceptSetError(ConceptCertError, ValueError):
    """Every concept was filtered or dropped."""


class DivergenceError(ConceptCertError, RuntimeError):
    """An iterative fit produced a non-finite loss."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class OutOfScheduleError(ConceptCertError, ValueError):
    """Requested noise level lies outside the schedule's variance range."""


class AttackError(ConceptCertError, RuntimeError):
    """Attack aborted, e.g. on a non-finite gradient."""


class ConfigError(ConceptCertError, ValueError):
    """Experiment configuration is malformed or contains unknown keys."""
