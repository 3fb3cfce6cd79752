"""Exception types raised by feedmix."""


class FeedmixError(Exception):
    pass


class ScenarioError(FeedmixError, ValueError):
    """Invalid scenario parameters or scenario file contents."""


class InfeasibleScenario(FeedmixError):
    """The combined water reservoir cannot cover the demanded quantity."""


class SaturatedReservoir(FeedmixError, ValueError):
    """Some finite reservoir is fully withdrawn (mu_i * x_i >= W_i)."""


class RootBracketFailure(FeedmixError, RuntimeError):
    pass


class EmptyGrid(FeedmixError):
    """No grid point of the oracle satisfies the box constraints."""


class NonConvergence(FeedmixError, RuntimeError):
    """Iteration cap reached on every start.

    ``solution`` carries the best feasible iterate found so callers can
    still decide to use it.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
