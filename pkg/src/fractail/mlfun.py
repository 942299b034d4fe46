"""Two-parameter Mittag-Leffler functions E_{beta,gamma}(z) on the real line.

E_{beta,gamma}(z) = sum_{k>=0} z^k / Gamma(beta*k + gamma) is entire, but no
single evaluation strategy covers the whole real axis at the accuracy the
inverse pipelines budget for.  Four branches are used:

* ClosedForm      -- (beta,gamma) in {(1,1),(1,2),(2,1),(2,2)} reduce to
                     exp/expm1/cos/sin/sinh/cosh identities.
* TaylorSeries    -- the defining power series, summed in double precision
                     with exact accumulation (math.fsum).  For z < 0 the terms
                     alternate and cancel; the returned bound charges
                     3e-16 * sum|t_k| for that, so the branch self-reports when
                     cancellation has eaten the target accuracy.
* AsymptoticSeries-- the negative-axis expansion
                     E(-x) ~ sum_{k>=1} (-1)^{k+1} x^{-k} / Gamma(gamma-beta*k),
                     truncated at the envelope minimum.  For 1 < beta < 2 the
                     conjugate exponential pair
                     (2/beta) Re[w^{1-gamma} e^w],  w = x^{1/beta} e^{i pi/beta},
                     is added; on the negative axis it decays like
                     exp(x^{1/beta} cos(pi/beta)) and is the leading correction
                     to the algebraic series (for beta <= 1 no such term
                     exists: the function is completely monotone there).
* HighPrecisionFallback -- the Taylor series again, in mpmath with working
                     precision sized to the largest series term, used where
                     neither double-precision branch can certify the target.

Every evaluation returns an explicit absolute error bound.  Bounds for the
series branches are computable majorants (tail + rounding); the asymptotic
remainder constant is not available in closed form, so the bound there is the
documented envelope of the first two omitted terms plus, for beta >= 1, a
ceiling on the exponential component -- see ``asym_error_bound``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, rgamma

from .errors import AsymptoticDivergence, NonConvergence

#: relative accuracy every public evaluation must certify
TARGET_REL = 1e-10

#: |x - round(x)| below this counts as an integer (gamma pole detection)
GAMMA_POLE_TOL = 1e-12

_LOG_OVERFLOW = 250.0 * math.log(10.0)
_MAX_DPS = 4000


class MLBranch(Enum):
    TAYLOR_SERIES = "TaylorSeries"
    ASYMPTOTIC_SERIES = "AsymptoticSeries"
    HIGH_PRECISION_FALLBACK = "HighPrecisionFallback"
    CLOSED_FORM = "ClosedForm"


@dataclass(frozen=True)
class MLOrderPair:
    """Series order and offset; both strictly positive."""

    beta: float
    gamma_: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.gamma_ > 0:
            raise ValueError(f"gamma_ must be positive, got {self.gamma_}")


@dataclass(frozen=True)
class MLEvaluation:
    """Value plus a rigorous absolute error bound for the branch used."""

    value: float
    abs_error_bound: float
    branch: MLBranch

    def __float__(self) -> float:
        return self.value


def gamma_recip(x: float) -> float:
    """1/Gamma(x), defined on all of R; exactly 0 at nonpositive integers.

    Arguments within GAMMA_POLE_TOL of a nonpositive integer are snapped to
    the pole (the surviving-exponent bookkeeping relies on those terms
    vanishing exactly even when the argument is a rounded product).
    """
    x = float(x)
    r = round(x)
    if r <= 0 and abs(x - r) < GAMMA_POLE_TOL:
        return 0.0
    return float(rgamma(x))


def _target(value: float) -> float:
    return TARGET_REL * max(1.0, abs(value))


# ---------------------------------------------------------------------------
# closed forms at the classical orders
# ---------------------------------------------------------------------------

def _closed_form(beta: float, gamma_: float, z: float) -> MLEvaluation | None:
    b1 = abs(beta - 1.0) < GAMMA_POLE_TOL
    b2 = abs(beta - 2.0) < GAMMA_POLE_TOL
    g1 = abs(gamma_ - 1.0) < GAMMA_POLE_TOL
    g2 = abs(gamma_ - 2.0) < GAMMA_POLE_TOL
    value = None
    if b1 and g1:
        value = math.exp(z)
    elif b1 and g2:
        value = math.expm1(z) / z if z != 0.0 else 1.0
    elif b2 and (g1 or g2):
        if z < 0.0:
            r = math.sqrt(-z)
            value = math.cos(r) if g1 else (math.sin(r) / r if r != 0.0 else 1.0)
        elif z == 0.0:
            value = 1.0
        else:
            r = math.sqrt(z)
            value = math.cosh(r) if g1 else math.sinh(r) / r
    if value is None:
        return None
    # libm-level accuracy; the argument reduction inside cos/sin costs ~sqrt|z| ulps
    bound = 4e-16 * (1.0 + math.sqrt(abs(z))) * max(1.0, abs(value))
    return MLEvaluation(value, bound, MLBranch.CLOSED_FORM)


# ---------------------------------------------------------------------------
# Taylor branch (double precision, exact accumulation)
# ---------------------------------------------------------------------------

def _taylor_peak_log(beta: float, gamma_: float, x: float) -> float:
    """Natural log of the largest series term magnitude at |z| = x."""
    if x <= 1.0:
        return 0.0
    kpeak = max(1, int(x ** (1.0 / beta) / beta))
    ks = np.array([max(1, kpeak // 2), kpeak, kpeak + 1, 2 * kpeak], dtype=float)
    return float(np.max(ks * math.log(x) - gammaln(beta * ks + gamma_)))


def _taylor_double(beta: float, gamma_: float, z: float) -> MLEvaluation | None:
    x = abs(z)
    maxlog = _taylor_peak_log(beta, gamma_, x)
    if maxlog > _LOG_OVERFLOW:
        return None
    if z < 0.0 and maxlog > 13.0 * math.log(10.0):
        # cancellation alone would exceed the target; do not bother summing
        return None
    logx = math.log(x) if x > 0 else -math.inf
    kpeak = max(1, int(x ** (1.0 / beta) / beta)) if x > 1.0 else 1
    n = max(32, 2 * kpeak)
    while True:
        ks = np.arange(n, dtype=float)
        logt = ks * logx - gammaln(beta * ks + gamma_) if x > 0 else np.where(ks == 0, -gammaln(gamma_), -np.inf)
        if x > 0:
            logt[0] = -gammaln(gamma_)
        if logt[-1] < maxlog - 50.0 and n > kpeak + 8:
            break
        n *= 2
        if n > 4_000_000:
            return None
    mags = np.exp(logt)
    signs = np.ones_like(mags) if z >= 0 else np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    terms = signs * mags
    value = math.fsum(terms)
    # each term carries ~(|log t_k| + 4) ulp from the log-space evaluation;
    # fsum itself contributes one final rounding
    per_term = mags * (np.abs(np.where(np.isfinite(logt), logt, 0.0)) + 4.0)
    bound = 2.4e-16 * 2.0 * float(np.sum(per_term)) + 2.0 * float(mags[-1]) + 1e-16 * abs(value)
    return MLEvaluation(value, bound, MLBranch.TAYLOR_SERIES)


# ---------------------------------------------------------------------------
# asymptotic branch on the negative axis
# ---------------------------------------------------------------------------

def _asym_envelope_log(beta: float, gamma_: float, x: float, k: int) -> float:
    """log of the omitted-term majorant x^{-k} Gamma(beta*k+1-gamma)/pi."""
    a = beta * k + 1.0 - gamma_
    if a > 0.5:
        return -k * math.log(x) + float(gammaln(a)) - math.log(math.pi)
    # small-argument corner: fall back to the raw reciprocal-gamma magnitude
    g = abs(float(rgamma(gamma_ - beta * k)))
    return -k * math.log(x) + math.log(3.0 * max(g, 1e-300))


def _asym_optimal_k(beta: float, x: float) -> int:
    return max(1, int(x ** (1.0 / beta) / beta))


def _exp_pair(beta: float, gamma_: float, x: float) -> float:
    """Conjugate exponential component at z = -x for 1 < beta < 2."""
    w = x ** (1.0 / beta) * cmath.exp(1j * math.pi / beta)
    return (2.0 / beta) * (w ** (1.0 - gamma_) * cmath.exp(w)).real


def _osc_ceiling(beta: float, gamma_: float, x: float) -> float:
    """Ceiling on the exponential component magnitude (beta >= 1 only)."""
    if beta < 1.0:
        return 0.0
    expo = x ** (1.0 / beta) * math.cos(math.pi / beta)
    if expo < -700.0:
        return 0.0
    return 3.0 * (2.0 / beta) * x ** ((1.0 - gamma_) / beta) * math.exp(expo)


def asym_error_bound(p: MLOrderPair, x: float, n_terms: int, improved: bool = False) -> float:
    """Documented remainder bound C(p,N) * x^{-(N+1)} for the truncated series.

    The bound is the envelope of the first two omitted algebraic terms
    (x^{-k} Gamma(beta*k+1-gamma)/pi majorises |x^{-k}/Gamma(gamma-beta*k)|)
    plus, for beta >= 1, three times the magnitude of the exponential pair
    unless that pair has been added to the value (``improved``).
    """
    b, g = p.beta, p.gamma_
    env = math.exp(_asym_envelope_log(b, g, x, n_terms + 1)) + math.exp(
        _asym_envelope_log(b, g, x, n_terms + 2)
    )
    bound = 2.0 * env
    if not improved:
        bound += _osc_ceiling(b, g, x)
    else:
        # the exponential pair itself is accurate to its own relative size
        bound += 1e-13 * abs(_exp_pair(b, g, x)) if 1.0 < b < 2.0 else 0.0
    return bound


def _asym_max_terms(beta: float, gamma_: float) -> int:
    # keep Gamma(beta*k + 1 - gamma) representable in double precision
    return max(1, int((170.0 + gamma_ - 1.0) / beta))


def _rgamma_vec(args: np.ndarray) -> np.ndarray:
    r = np.round(args)
    pole = (r <= 0) & (np.abs(args - r) < GAMMA_POLE_TOL)
    return np.where(pole, 0.0, rgamma(args))


def _asym_terms(beta: float, gamma_: float, x: float, n: int) -> np.ndarray:
    ks = np.arange(1, n + 1, dtype=float)
    rg = _rgamma_vec(gamma_ - beta * ks)
    with np.errstate(under="ignore"):
        pw = x ** (-ks)
    return np.where(np.arange(1, n + 1) % 2 == 1, 1.0, -1.0) * pw * rg


def ml_asym_neg(p: MLOrderPair, x: float, n_terms: int) -> MLEvaluation:
    """Truncated negative-axis expansion E_{beta,gamma}(-x), algebraic part only.

    Sums -sum_{k=1}^{n_terms} (-x)^{-k}/Gamma(gamma - beta*k) through
    gamma_recip, so terms whose gamma argument is a nonpositive integer
    contribute exactly zero.  Requires x >= 1 and 0 < beta < 2.

    Raises AsymptoticDivergence if the term-magnitude envelope starts growing
    before n_terms (the requested order is past optimal truncation).
    """
    if x < 1.0:
        raise ValueError(f"asymptotic regime requires x >= 1, got {x}")
    if not 0.0 < p.beta < 2.0:
        raise ValueError(f"negative-axis expansion needs 0 < beta < 2, got {p.beta}")
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    kstar = _asym_optimal_k(p.beta, x)
    if n_terms > kstar:
        raise AsymptoticDivergence(
            f"terms grow beyond k={kstar} (requested {n_terms}) at x={x}"
        )
    if n_terms > _asym_max_terms(p.beta, p.gamma_):
        raise AsymptoticDivergence(
            f"term magnitudes not representable beyond k={_asym_max_terms(p.beta, p.gamma_)}"
        )
    value = float(np.sum(_asym_terms(p.beta, p.gamma_, x, n_terms)))
    bound = asym_error_bound(p, x, n_terms, improved=False)
    return MLEvaluation(value, bound, MLBranch.ASYMPTOTIC_SERIES)


def _asym_envelope_logs(beta: float, gamma_: float, x: float, kmax: int) -> np.ndarray:
    """Vector of omitted-term majorant logs for k = 1..kmax."""
    ks = np.arange(1, kmax + 1, dtype=float)
    args = beta * ks + 1.0 - gamma_
    safe = args > 0.5
    out = np.empty(kmax)
    out[safe] = -ks[safe] * math.log(x) + gammaln(args[safe]) - math.log(math.pi)
    if not np.all(safe):
        rg = np.abs(_rgamma_vec(gamma_ - beta * ks[~safe]))
        out[~safe] = -ks[~safe] * math.log(x) + np.log(3.0 * np.maximum(rg, 1e-300))
    return out


def _asym_eval(beta: float, gamma_: float, x: float) -> MLEvaluation | None:
    """Best-effort asymptotic evaluation at z = -x with exponential improvement."""
    if x < 1.0:
        return None
    kstar = _asym_optimal_k(beta, x)
    n = min(kstar, _asym_max_terms(beta, gamma_) - 2, 400)
    if n < 1:
        return None
    terms = _asym_terms(beta, gamma_, x, n + 2)
    csum = np.cumsum(terms[:n])
    value = float(csum[-1])
    logenv = _asym_envelope_logs(beta, gamma_, x, n + 2)
    # truncate at the first k whose omitted envelope is already negligible
    thresh = math.log(1e-17 * max(1.0, abs(value)))
    small = np.nonzero(logenv[:n] < thresh)[0]
    best_n = max(1, int(small[0])) if len(small) else n  # envelope(N+1) = logenv[N]
    value = float(csum[best_n - 1])
    # first two omitted terms, plus their sin-free envelope (the raw terms can
    # dip through gamma poles while the true remainder does not)
    with np.errstate(over="ignore"):
        env1 = float(np.exp(logenv[best_n]))
    omitted = abs(terms[best_n]) + abs(terms[best_n + 1]) + env1
    improved = 1.0 < beta < 2.0
    bound = 2.0 * omitted + 1e-16 * abs(value)
    if improved:
        pair = _exp_pair(beta, gamma_, x)
        value += pair
        bound += 1e-13 * abs(pair)
    else:
        bound += _osc_ceiling(beta, gamma_, x)
    return MLEvaluation(value, bound, MLBranch.ASYMPTOTIC_SERIES)


# ---------------------------------------------------------------------------
# mpmath fallback
# ---------------------------------------------------------------------------

def _mp_fallback(beta: float, gamma_: float, z: float) -> MLEvaluation | None:
    import mpmath as mp

    x = abs(z)
    maxlog10 = _taylor_peak_log(beta, gamma_, x) / math.log(10.0)
    dps = 35 + max(0, int(math.ceil(maxlog10)))
    if dps > _MAX_DPS:
        return None
    kpeak = max(1, int(x ** (1.0 / beta) / beta)) if x > 1.0 else 1
    with mp.workdps(dps):
        b = mp.mpf(beta)
        g = mp.mpf(gamma_)
        zz = mp.mpf(z)
        s = mp.mpf(0)
        zp = mp.mpf(1)
        cutoff = mp.mpf(10) ** (-dps + 8)
        k = 0
        while True:
            term = zp / mp.gamma(b * k + g)
            s += term
            if k > kpeak and abs(term) < cutoff * max(1, abs(s)):
                break
            zp *= zz
            k += 1
            if k > 5_000_000:
                return None
        value = float(s)
    bound = 5e-15 * max(1.0, abs(value))
    return MLEvaluation(value, bound, MLBranch.HIGH_PRECISION_FALLBACK)


# ---------------------------------------------------------------------------
# public dispatcher
# ---------------------------------------------------------------------------

@lru_cache(maxsize=1 << 18)
def _ml_eval_cached(beta: float, gamma_: float, z: float) -> MLEvaluation:
    cf = _closed_form(beta, gamma_, z)
    if cf is not None:
        return cf

    candidates: list[MLEvaluation] = []

    def good(ev: MLEvaluation | None) -> bool:
        if ev is None:
            return False
        candidates.append(ev)
        return ev.abs_error_bound <= _target(ev.value)

    if z >= 0.0:
        if good(ev := _taylor_double(beta, gamma_, z)):
            return ev
    else:
        x = -z
        if x <= 8.0 and good(ev := _taylor_double(beta, gamma_, z)):
            return ev
        if good(ev := _asym_eval(beta, gamma_, x)):
            return ev
    if good(ev := _mp_fallback(beta, gamma_, z)):
        return ev
    if candidates:
        best = min(candidates, key=lambda e: e.abs_error_bound)
        raise NonConvergence(
            f"E_({beta},{gamma_}) at z={z}: best bound {best.abs_error_bound:.2e} "
            f"exceeds target {_target(best.value):.2e}"
        )
    raise NonConvergence(f"E_({beta},{gamma_}) at z={z}: no branch applicable")


def ml_eval(p: MLOrderPair, z: float) -> MLEvaluation:
    """Evaluate E_{beta,gamma}(z) with a certified absolute error bound.

    Branch selection: closed forms at the classical orders; Taylor for small
    |z| (and all z >= 0); the exponentially-improved asymptotic expansion on
    the negative axis; otherwise the arbitrary-precision Taylor fallback.
    Raises NonConvergence if no branch certifies
    abs_error_bound <= 1e-10 * max(1, |value|).
    """
    return _ml_eval_cached(float(p.beta), float(p.gamma_), float(z))
