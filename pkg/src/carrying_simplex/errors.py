"""Exception hierarchy shared by all modules."""


class CarryingSimplexError(Exception):
    """Base class for every error raised by the package."""


class InputError(CarryingSimplexError, ValueError):
    """Invalid user input (non-finite values, bad shapes, bad parameters)."""


class NumericalError(CarryingSimplexError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""


class BlowUp(NumericalError):
    """The solution left every bounded set (only possible in backward time).

    Attributes
    ----------
    t : float
        Time at which a log-coordinate exceeded the cap.
    """

    def __init__(self, t, message=None):
        self.t = float(t)
        super().__init__(message or f"solution blew up at t = {self.t!r}")


class HypothesisFailure(CarryingSimplexError):
    """A structural hypothesis required by an algorithm does not hold."""

    def __init__(self, hypothesis, message):
        self.hypothesis = hypothesis
        super().__init__(f"{hypothesis}: {message}")


class MeshFoldingError(NumericalError):
    """The image of a radial mesh is not radially parametrizable at this resolution."""


class NonConverged(NumericalError):
    """An iteration hit its cap before meeting the tolerance.

    Attributes
    ----------
    gap : float
        Final value of the convergence metric.
    partial : object
        Whatever partial result the caller may still want (may be ``None``).
    """

    def __init__(self, gap, message=None, partial=None):
        self.gap = float(gap)
        self.partial = partial
        super().__init__(message or f"did not converge, final gap {self.gap:.3e}")
