"""Exception types shared across the toolkit.

Numerical failures are signalled, never silently absorbed: every routine that
can fail to meet its accuracy contract raises one of these instead of
returning a degraded value.
"""

from __future__ import annotations


class FracTailError(Exception):
    """Base class for all toolkit errors."""


class NonConvergence(FracTailError):
    """No evaluation branch reached the requested error bound."""


class AsymptoticDivergence(FracTailError):
    """Asymptotic series terms stopped decreasing before the requested order."""


class GridTooCoarse(FracTailError):
    """Quadrature grid violates the per-oscillation sampling bound."""


class QuadratureNotConverged(FracTailError):
    """Node doubling did not stabilise the integral to tolerance."""


class IndexSearchExhausted(FracTailError):
    """No nonzero moment found below the search cap; profile is numerically zero."""


class IllConditioned(FracTailError):
    """A least-squares stage exceeded the condition-number ceiling."""

    def __init__(self, message: str, cond: float | None = None):
        super().__init__(message)
        self.cond = cond


class InadmissibleAlpha(FracTailError):
    """The fractional order sits on (or too near) an excluded value."""


class ExponentCollision(FracTailError):
    """Two expansion terms of different kind share an exponent; the order is excluded."""


class DegeneratePoint(FracTailError):
    """Observation point where the source profile vanishes; recovery impossible."""
