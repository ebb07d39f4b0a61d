"""Exception types shared across the package."""


class MetarateError(Exception):
    """Base class for all package errors."""


class ValidationError(MetarateError):
    """Malformed input: bad chain spec, measure, or configuration."""


class MissingBetaError(ValidationError):
    """A symbolic rate family was evaluated without a beta value."""


class RateOverflowError(MetarateError):
    """A rate or exponential left the double-precision range."""

    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


class NotIrreducibleError(MetarateError):
    """Operation requires an irreducible chain."""


class NotFullSupportError(MetarateError):
    """Operation requires a measure with full support."""


class EmptySubsetError(ValidationError):
    """A state subset argument was empty."""


class AbsorbedOutsideError(MetarateError):
    """Trace is ill-defined: a state outside the kept set has zero holding rate."""


class UnreachableError(MetarateError):
    """Hitting problem ill-posed: neither target nor avoid set reachable."""


class UnreachableBoundaryError(MetarateError):
    """Harmonic extension ill-posed: boundary set unreachable from some state."""


class ConvergenceError(MetarateError):
    """Iterative maximization hit its cap; best iterate is attached."""

    def __init__(self, message, value=None, residual=None, potential=None):
        super().__init__(message)
        self.value = value
        self.residual = residual
        self.potential = potential


class TooLargeError(MetarateError):
    """Symbolic computation exceeds the enumeration budget."""


class DegenerateLevelError(MetarateError):
    """No positive inter-class rate found while building a hierarchy level."""


class StepCapError(MetarateError):
    """Uniformization would need more steps than the configured cap."""

    def __init__(self, message, steps_needed=None):
        super().__init__(message)
        self.steps_needed = steps_needed
