"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """A numerical routine did not converge to its required tolerance.

    Carries the offending input(s) in ``context`` for diagnosis.
    """

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context


class ContractViolation(RuntimeError):
    """A strategy produced a control outside the admissible set U(s)."""


class InfeasibleSearch(RuntimeError):
    """Every candidate of a search failed to reach the target before the horizon."""
