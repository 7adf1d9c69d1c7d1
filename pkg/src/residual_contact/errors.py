"""Exception types. The CLI maps ValidationError to exit 1 and NumericalError to exit 2."""


class ValidationError(ValueError):
    """Bad input: malformed files, inconsistent configs, invalid parameters."""


class NumericalError(RuntimeError):
    """A computation failed numerically (instability, collapse, degeneracy)."""


class CorruptStateError(NumericalError):
    pass


class NonImpactError(ValidationError):
    """Contact resolution was requested for a contact that is not approaching."""


class DegenerateContactError(NumericalError):
    pass


class InstabilityError(NumericalError):
    pass


class BeliefCollapseError(NumericalError):
    """Every particle was rejected by the feasibility filter."""
