"""Exception types shared across the package."""


class FsrkError(Exception):
    """Base class for all errors raised by this package."""


class InputError(FsrkError, ValueError):
    """Malformed or inconsistent input (bad shapes, bad files, bad flags)."""


class SplittingDomainError(FsrkError, ValueError):
    """A parameter lies outside the mathematical domain of a formula."""


class PoleError(FsrkError, ArithmeticError):
    """A stability function was evaluated at a pole.

    Attributes carry the offending argument and, for composite methods,
    the stage and operator of the factor that blew up.
    """

    def __init__(self, msg, z=None, stage=None, operator=None):
        super().__init__(msg)
        self.z = z
        self.stage = stage
        self.operator = operator


class StepFailureError(FsrkError, RuntimeError):
    """A Runge-Kutta step could not be completed (Newton non-convergence).

    ``rk_stage`` is the index of the failing RK stage; ``residual`` the last
    Newton residual norm. ``stage``/``operator`` identify the sub-integration
    when the failure occurred inside a split step.
    """

    def __init__(self, msg, rk_stage=None, residual=None, stage=None, operator=None):
        super().__init__(msg)
        self.rk_stage = rk_stage
        self.residual = residual
        self.stage = stage
        self.operator = operator


class InstabilityError(FsrkError, RuntimeError):
    """An integration blew up (NaN/overflow). Carries the blow-up time and
    the partial trajectory accumulated up to that point."""

    def __init__(self, msg, t_blowup=None, partial=None):
        super().__init__(msg)
        self.t_blowup = t_blowup
        self.partial = partial


class SearchFailureError(FsrkError, RuntimeError):
    """An optimization found no feasible candidate. ``best_residual`` is the
    smallest order-condition residual norm seen across all starts."""

    def __init__(self, msg, best_residual=None):
        super().__init__(msg)
        self.best_residual = best_residual


class BracketError(FsrkError, ValueError):
    """A bisection bracket does not actually bracket the target."""


class EstimationError(FsrkError, RuntimeError):
    """An iterative estimate (e.g. power iteration) failed to converge."""

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual
