"""Exception types shared across the package."""


class IADCError(Exception):
    """Base class for package errors."""


class StructuralError(IADCError, ValueError):
    """Shapes or dimensions of states, weights or topologies disagree."""


class DomainError(IADCError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class DegenerateDecoderError(IADCError, ValueError):
    """The decoder normalization contains a zero gain."""


class InconclusiveCheckError(IADCError, RuntimeError):
    """Every parameter was screened out of a finite-difference check."""


class DegenerateModelWarning(UserWarning):
    """The encoder has no active path (all weights masked or zero)."""
