"""Exception hierarchy shared by every module.

The CLI maps these to exit codes (see ``harness.cli``).
"""


class PamdpLabError(Exception):
    pass


class InvalidInputError(PamdpLabError, ValueError):
    """Malformed instance, dimension mismatch or out-of-range parameter."""


class NumericalFailure(PamdpLabError, RuntimeError):
    """A numerical routine gave up (e.g. LP iteration cap).

    ``best_point`` carries the best feasible iterate when one exists.
    """

    def __init__(self, message, best_point=None):
        super().__init__(message)
        self.best_point = best_point


class NotInducible(PamdpLabError):
    """No contract inside the payment box makes the target action a best response."""


class PlanningInfeasible(PamdpLabError):
    """Every action at some (h, s) is not inducible."""

    def __init__(self, h, s):
        super().__init__(f"no inducible action at step h={h}, state s={s}")
        self.h = h
        self.s = s


class GenerationFailed(PamdpLabError):
    """Rejection sampling did not produce a certified instance within budget."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
