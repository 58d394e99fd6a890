"""Shared exception types."""

__all__ = ["InstabilityError"]


class InstabilityError(RuntimeError):
    """Stochastic integration produced non-finite values or an inadequate step.

    Raised when a propagated state overflows or collapses beyond repair, or
    when a scheme's validity condition (such as the jump probability bound)
    is violated; the fix is a smaller step size or a different scheme.
    """
