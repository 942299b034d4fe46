"""Time factors mu(t): piecewise polynomials supported inside (0, T).

The reconstruction machinery never sees mu(t) pointwise; everything is driven
by its signed moments

    mu_m = integral_0^T (-s)^m mu(s) ds,

the least index ell0 with mu_{ell0} != 0, the surviving-exponent lattice
m(1) < m(2) < ... (the k with alpha*k not an integer), and the excluded-order
test.  Moments are integrated in closed form from the polynomial pieces --
a zero test on a quadrature value would be meaningless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import IndexSearchExhausted
from .orders import FractionalOrder, as_order

LEADING_INDEX_CAP = 64
DEFAULT_MOMENT_TOL = 1e-9
DEFAULT_ALPHA_TOL = 1e-6


@dataclass(frozen=True)
class PolynomialPiece:
    """Polynomial sum_j coeffs[j] * s^j on [lo, hi)."""

    lo: float
    hi: float
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"empty piece [{self.lo}, {self.hi})")
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        inside = (s >= self.lo) & (s < self.hi)
        vals = np.polynomial.polynomial.polyval(s, np.asarray(self.coeffs))
        return np.where(inside, vals, 0.0)


@dataclass(frozen=True)
class SourceProfile:
    """mu as polynomial pieces inside (0, T); identically zero for t >= T."""

    pieces: tuple[PolynomialPiece, ...]
    horizon_T: float

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if self.horizon_T <= 0:
            raise ValueError("horizon must be positive")
        for p in self.pieces:
            if p.lo < 0 or p.hi > self.horizon_T + 1e-15:
                raise ValueError(
                    f"piece [{p.lo}, {p.hi}) outside (0, {self.horizon_T})"
                )
        if not any(any(c != 0.0 for c in p.coeffs) for p in self.pieces):
            raise ValueError("profile is identically zero")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p in self.pieces:
            out = out + p(t)
        return float(out) if out.ndim == 0 else out

    def sup_norm(self) -> float:
        """Estimated sup |mu| (dense sampling of each polynomial piece)."""
        best = 0.0
        for p in self.pieces:
            s = np.linspace(p.lo, p.hi, 257)
            s[-1] = np.nextafter(p.hi, p.lo)
            best = max(best, float(np.max(np.abs(p(s)))))
        return best

    def scaled(self, c: float) -> "SourceProfile":
        return SourceProfile(
            tuple(
                PolynomialPiece(p.lo, p.hi, tuple(c * ci for ci in p.coeffs))
                for p in self.pieces
            ),
            self.horizon_T,
        )

    def to_dict(self) -> dict:
        return {
            "horizon_T": self.horizon_T,
            "pieces": [
                {"lo": p.lo, "hi": p.hi, "coeffs": list(p.coeffs)} for p in self.pieces
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SourceProfile":
        return cls(
            tuple(
                PolynomialPiece(p["lo"], p["hi"], tuple(p["coeffs"]))
                for p in d["pieces"]
            ),
            float(d["horizon_T"]),
        )


def constant_profile(value: float, horizon_T: float) -> SourceProfile:
    """mu identically equal to ``value`` on (0, T)."""
    return SourceProfile((PolynomialPiece(0.0, horizon_T, (value,)),), horizon_T)


def polynomial_profile(coeffs: Sequence[float], horizon_T: float) -> SourceProfile:
    """Single polynomial piece covering all of (0, T), ascending powers."""
    return SourceProfile((PolynomialPiece(0.0, horizon_T, tuple(coeffs)),), horizon_T)


def moment(mu: SourceProfile, m: int) -> float:
    """Signed moment integral_0^T (-s)^m mu(s) ds, in closed form."""
    if m < 0:
        raise ValueError("moment index must be >= 0")
    sign = -1.0 if m % 2 else 1.0
    parts = []
    for p in mu.pieces:
        for j, c in enumerate(p.coeffs):
            if c == 0.0:
                continue
            q = m + j + 1
            parts.append(sign * c * (p.hi**q - p.lo**q) / q)
    return math.fsum(parts)


def _moment_scale(mu: SourceProfile, m: int) -> float:
    T = mu.horizon_T
    return mu.sup_norm() * T ** (m + 1) / (m + 1)


def leading_index(mu: SourceProfile, tol: float = DEFAULT_MOMENT_TOL) -> tuple[int, float]:
    """Smallest m with |mu_m| above tol times its natural scale, and that moment.

    Raises IndexSearchExhausted past m = 64: the profile is then numerically
    indistinguishable from zero at working precision.
    """
    for m in range(LEADING_INDEX_CAP + 1):
        mm = moment(mu, m)
        if abs(mm) > tol * _moment_scale(mu, m):
            return m, mm
    raise IndexSearchExhausted(
        f"no nonzero moment found for m <= {LEADING_INDEX_CAP}"
    )


def pair_leading_index(
    mu: SourceProfile, mu2: SourceProfile, tol: float = DEFAULT_MOMENT_TOL
) -> int:
    """Smallest m at which either profile has a nonzero m-th moment."""
    for m in range(LEADING_INDEX_CAP + 1):
        if abs(moment(mu, m)) > tol * _moment_scale(mu, m):
            return m
        if abs(moment(mu2, m)) > tol * _moment_scale(mu2, m):
            return m
    raise IndexSearchExhausted(
        f"no nonzero moment found for m <= {LEADING_INDEX_CAP} in either profile"
    )


@dataclass(frozen=True)
class ExponentLattice:
    """First indices k with alpha*k not an integer, ascending; m(1) = 1 always."""

    alpha: FractionalOrder
    indices: tuple[int, ...]

    def __post_init__(self):
        if self.indices[0] != 1:
            raise ValueError("lattice must start at 1")


def exponent_lattice(alpha, count: int) -> ExponentLattice:
    """First ``count`` positive integers j with alpha*j not an integer.

    For irrational alpha (no rational p/q, q <= 1e6, within 1e-12) this is
    simply 1..count; for rational p/q in lowest terms it skips the multiples
    of q.  Requires a strictly fractional order.
    """
    order = as_order(alpha)
    if not order.is_fractional:
        raise ValueError(f"order {order.alpha} is classical; lattice undefined")
    if count < 1:
        raise ValueError("count must be >= 1")
    out: list[int] = []
    j = 1
    while len(out) < count:
        if not order.times_is_integer(j):
            out.append(j)
        j += 1
    return ExponentLattice(order, tuple(out))


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    nearest_excluded: float
    distance: float


def admissible_alpha(
    alpha, ell: int, regime: str | None = None, tol: float = DEFAULT_ALPHA_TOL
) -> AdmissibilityReport:
    """Test alpha against the excluded values {(ell+1)/n} (and {(ell+2)/n} for
    the wave-type regime).

    ``regime`` is 'sub' or 'super'; by default it is read off alpha itself.
    The report always carries the nearest excluded value and its distance.
    """
    order = as_order(alpha)
    a = order.alpha
    if regime is None:
        regime = order.regime
    if regime not in ("sub", "super"):
        raise ValueError(f"regime must be 'sub' or 'super', got {regime!r}")
    numerators = [ell + 1] if regime == "sub" else [ell + 1, ell + 2]
    nearest = None
    for c in numerators:
        n_guess = max(1, int(round(c / a)))
        for n in range(max(1, n_guess - 2), n_guess + 3):
            val = c / n
            if nearest is None or abs(a - val) < abs(a - nearest):
                nearest = val
    dist = abs(a - nearest)
    return AdmissibilityReport(admissible=dist > tol, nearest_excluded=nearest, distance=dist)
