"""Late-time power-law structure of the solution.

For t beyond twice the source horizon the solution collapses onto a sum of
negative powers of t.  Three families appear, indexed by the surviving
exponents m(k) (those k with alpha*k not an integer):

    Q_k t^{-alpha m(k)}          from the initial value a,
    R_k t^{-alpha m(k) + 1}      from the initial velocity b (alpha > 1),
    S_k mu_{ell0} t^{-alpha m(k) - ell0 - 1}   from the source factor f,

with coefficient fields

    Q_k = (-1)^{m(k)+1}/Gamma(1 - alpha m(k)) * sum_n a_n lam_n^{-m(k)} phi_n,
    R_k = (-1)^{m(k)+1}/Gamma(2 - alpha m(k)) * sum_n b_n lam_n^{-m(k)} phi_n,
    S_k = (-1)^{m(k)} /Gamma(  - alpha m(k)) * binom(-alpha m(k)-1, ell0)
                                 * sum_n f_n lam_n^{-m(k)-1} phi_n.

The S family carries one binomial-moment factor per k because the tail of the
source convolution expands as

    integral_0^T (t-s)^{-sigma} mu(s) ds
        = sum_{ell >= ell0} binom(-sigma, ell) mu_ell t^{-sigma-ell} + remainder,

truncated here at the leading moment ell0.  When the order is admissible the
three exponent families are disjoint; a collision (within 1e-9) is exactly
the excluded-order degeneracy and raises ExponentCollision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ExponentCollision
from .mlfun import gamma_recip
from .source import SourceProfile, exponent_lattice, leading_index, moment
from .spectral import SpatialField, synthesize

COLLISION_TOL = 1e-9


def gen_binom(x: float, ell: int) -> float:
    """Generalised binomial coefficient x(x-1)...(x-ell+1)/ell!; equals 1 at ell=0."""
    if ell < 0:
        raise ValueError("ell must be >= 0")
    out = 1.0
    for i in range(ell):
        out *= (x - i) / (i + 1)
    return out


@dataclass(frozen=True)
class TailExpansion:
    """Power-law terms of the tail integral plus a computable remainder bound."""

    sigma: float
    terms: tuple[tuple[float, float], ...]  # (exponent sigma+ell, coefficient)
    remainder_constant: float  # multiplies t^{-sigma-L-1}
    order_L: int

    def remainder_bound(self, t: float) -> float:
        return self.remainder_constant * t ** (-(self.sigma + self.order_L + 1))

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p, c in self.terms:
            out = out + c * t ** (-p)
        return float(out) if out.ndim == 0 else out


def tail_integral_expansion(
    sigma: float,
    mu: SourceProfile,
    ell0: int | None = None,
    order_L: int = 3,
) -> TailExpansion:
    """Expand integral_0^T (t-s)^{-sigma} mu(s) ds in powers of 1/t, valid t > 2T.

    Terms run over ell = ell0..order_L with coefficient binom(-sigma, ell) mu_ell;
    moments below ell0 vanish and are dropped.  The remainder constant comes
    from the Lagrange form of the binomial Taylor remainder of (1-eta)^{-sigma}
    on |eta| <= 1/2 (guaranteed by t > 2T):

        |R_L| <= |binom(-sigma, L+1)| 2^{sigma+L+1} ||mu||_inf T^{L+2}/(L+2)
                 * t^{-sigma-L-1}.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if ell0 is None:
        ell0, _ = leading_index(mu)
    if order_L < ell0:
        raise ValueError(f"order_L={order_L} below leading index {ell0}")
    terms = tuple(
        (sigma + ell, gen_binom(-sigma, ell) * moment(mu, ell))
        for ell in range(ell0, order_L + 1)
    )
    T = mu.horizon_T
    const = (
        abs(gen_binom(-sigma, order_L + 1))
        * 2.0 ** (sigma + order_L + 1)
        * mu.sup_norm()
        * T ** (order_L + 2)
        / (order_L + 2)
    )
    return TailExpansion(sigma=sigma, terms=terms, remainder_constant=const, order_L=order_L)


@dataclass(frozen=True)
class ExpansionTerm:
    """One power-law term: coeff(x) * t^{-exponent}, tagged by family and k."""

    kind: str  # "Q", "R" or "S"
    k_index: int
    exponent: float
    coeff: SpatialField


def _family_prefactors(alpha: float, mk: Sequence[int], ell0: int) -> dict[str, np.ndarray]:
    mk = np.asarray(mk, dtype=float)
    sign = np.where((mk.astype(int) + 1) % 2 == 0, 1.0, -1.0)
    q = sign * np.array([gamma_recip(1.0 - alpha * m) for m in mk])
    r = sign * np.array([gamma_recip(2.0 - alpha * m) for m in mk])
    s = -sign * np.array([gamma_recip(-alpha * m) for m in mk]) * np.array(
        [gen_binom(-alpha * m - 1.0, ell0) for m in mk]
    )
    return {"Q": q, "R": r, "S": s}


def coefficient_fields(spec, K: int) -> dict[str, list[SpatialField]]:
    """The Q/R/S coefficient fields for k = 1..K (R only when alpha > 1).

    Pure forward computation; no admissibility requirement.
    """
    alpha = spec.alpha.alpha
    lattice = exponent_lattice(spec.alpha, K)
    ell0, _ = leading_index(spec.mu)
    pref = _family_prefactors(alpha, lattice.indices, ell0)
    lam = spec.op.eigenvalues
    out: dict[str, list[SpatialField]] = {"Q": [], "S": []}
    if spec.b is not None:
        out["R"] = []
    for i, m in enumerate(lattice.indices):
        out["Q"].append(SpatialField(pref["Q"][i] * spec.a.coeffs * lam ** (-float(m)), spec.op))
        if spec.b is not None:
            out["R"].append(SpatialField(pref["R"][i] * spec.b.coeffs * lam ** (-float(m)), spec.op))
        out["S"].append(
            SpatialField(pref["S"][i] * spec.f.coeffs * lam ** (-float(m) - 1.0), spec.op)
        )
    return out


def expansion_exponents(
    alpha, ell0: int, K: int, include_velocity: bool, collision_tol: float = COLLISION_TOL
) -> list[tuple[str, int, float]]:
    """(kind, k, exponent) for the merged K-term expansion, sorted by exponent.

    Raises ExponentCollision when two entries of different kind fall within
    collision_tol -- the computational signature of an excluded order.
    """
    from .orders import as_order

    order = as_order(alpha)
    a = order.alpha
    lattice = exponent_lattice(order, K)
    entries: list[tuple[str, int, float]] = []
    for k, m in enumerate(lattice.indices, start=1):
        entries.append(("Q", k, a * m))
        if include_velocity:
            entries.append(("R", k, a * m - 1.0))
        entries.append(("S", k, a * m + ell0 + 1.0))
    entries.sort(key=lambda e: e[2])
    for (k1, i1, e1), (k2, i2, e2) in zip(entries, entries[1:]):
        if k1 != k2 and abs(e1 - e2) < collision_tol:
            raise ExponentCollision(
                f"{k1}_{i1} and {k2}_{i2} share exponent {e1:.12g} (order excluded)"
            )
    return entries


@dataclass(frozen=True)
class LateTimeExpansion:
    terms: tuple[ExpansionTerm, ...]
    error_exponent: float
    min_gap: float

    def eval(self, x, t):
        return expansion_eval(self.terms, x, t)


def late_time_expansion(spec, N: int, collision_tol: float = COLLISION_TOL) -> LateTimeExpansion:
    """Merged, exponent-sorted N-term expansion of the solution, valid t > 2T.

    S-term coefficients carry the mu_{ell0} factor.  error_exponent is the
    decay rate of the dominant dropped contribution:

        min( alpha m(N+1) - [alpha > 1],  alpha m(1) + ell0 + 2 )

    (the next surviving initial-data term, against the next moment of the
    source tail).  min_gap reports the smallest exponent separation actually
    achieved -- the quantitative margin of the excluded-order condition.
    """
    alpha = spec.alpha.alpha
    ell0, mu_l0 = leading_index(spec.mu)
    fields = coefficient_fields(spec, N)
    entries = expansion_exponents(
        spec.alpha, ell0, N, include_velocity=spec.b is not None, collision_tol=collision_tol
    )
    terms = []
    for kind, k, expo in entries:
        fld = fields[kind][k - 1]
        if kind == "S":
            fld = fld.scaled(mu_l0)
        terms.append(ExpansionTerm(kind=kind, k_index=k, exponent=expo, coeff=fld))
    lattice = exponent_lattice(spec.alpha, N + 1)
    next_initial = alpha * lattice.indices[N] - (1.0 if alpha > 1.0 else 0.0)
    next_moment = alpha * lattice.indices[0] + ell0 + 2.0
    exps = [t.exponent for t in terms]
    min_gap = min(b - a for a, b in zip(exps, exps[1:])) if len(exps) > 1 else math.inf
    return LateTimeExpansion(
        terms=tuple(terms),
        error_exponent=min(next_initial, next_moment),
        min_gap=min_gap,
    )


def expansion_eval(terms: Sequence[ExpansionTerm], x, t):
    """Evaluate sum_k coeff_k(x) t^{-p_k}; meaningful for t > 2T."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros(np.broadcast(x, t).shape)
    for term in terms:
        out = out + np.asarray(synthesize(term.coeff, x)) * t ** (-term.exponent)
    return float(out) if out.ndim == 0 else out


def expansion_to_rows(terms: Sequence[ExpansionTerm]) -> list[tuple]:
    """Flatten to (kind, k, exponent, mode, coeff) rows for CSV export."""
    rows = []
    for term in terms:
        for n, c in enumerate(term.coeff.coeffs, start=1):
            rows.append((term.kind, term.k_index, term.exponent, n, c))
    return rows
