"""Fractional time-derivative orders and their rationality metadata.

The admissible orders are alpha in (0,1) (relaxation-type) and (1,2)
(wave-type).  The classical endpoints alpha = 1, 2 are representable too,
since the toolkit uses them for the closed-form comparison solutions, but
they are rejected by every routine that needs a genuinely fractional order.

Rationality matters because the surviving-exponent lattice {k : alpha*k not
an integer} depends only on whether alpha is (numerically) a rational p/q
with small denominator.  Detection uses a continued-fraction convergent with
denominator capped at 10**6 and an absolute tolerance of 1e-12; beyond that
cap the order is treated as irrational.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

INTEGER_TOL = 1e-12
DENOMINATOR_CAP = 10**6


@dataclass(frozen=True)
class FractionalOrder:
    """Order alpha with regime tag and detected rational form (if any)."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"order must lie in (0, 2], got {self.alpha}")

    @property
    def regime(self) -> str:
        """'sub' for alpha in (0,1), 'super' for alpha in (1,2), 'classical' at 1, 2."""
        if abs(self.alpha - 1.0) < INTEGER_TOL or abs(self.alpha - 2.0) < INTEGER_TOL:
            return "classical"
        return "sub" if self.alpha < 1.0 else "super"

    @property
    def is_fractional(self) -> bool:
        return self.regime != "classical"

    @property
    def rational_form(self) -> Fraction | None:
        """Best rational p/q with q <= 1e6 if within 1e-12 of alpha, else None."""
        frac = Fraction(self.alpha).limit_denominator(DENOMINATOR_CAP)
        if abs(float(frac) - self.alpha) < INTEGER_TOL:
            return frac
        return None

    @property
    def is_rational(self) -> bool:
        return self.rational_form is not None

    def times_is_integer(self, k: int) -> bool:
        """Whether alpha*k is an integer (within the detection tolerance)."""
        frac = self.rational_form
        if frac is not None:
            return (k * frac.numerator) % frac.denominator == 0
        return abs(self.alpha * k - round(self.alpha * k)) < INTEGER_TOL


def as_order(alpha) -> FractionalOrder:
    """Coerce a float or FractionalOrder to FractionalOrder."""
    if isinstance(alpha, FractionalOrder):
        return alpha
    return FractionalOrder(float(alpha))
