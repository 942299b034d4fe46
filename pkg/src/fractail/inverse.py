"""Reconstruction of initial data and source factors from late-time tails.

The pipeline runs the uniqueness argument constructively, in three linear
stages:

1. peel -- joint least-squares fit of the observation tail against the known
   power-law exponent set (initial-value family alpha*m(k), velocity family
   alpha*m(k)-1, and source moment ladders alpha*m(k)+ell+1), per observation
   point;
2. point system -- convert pointwise family coefficients to eigenbasis
   coefficients through the eigenfunction sample matrix on omega;
3. moment inversion -- recover the data vector from the lambda-power
   sequences sum_n c_n lam_n^{-(m(k)+offset)} (offset 0 for the initial-data
   families, 1 for the source family).

Each stage reports a condition number and a relative residual; stages refuse
(IllConditioned) past a condition ceiling instead of returning junk.

Exponent bookkeeping: levels of the moment ladder above the leading one are
fitted as absorber columns so that truncation bias stays below the recovery
tolerance.  For rational orders an absorber can land exactly on another
family's exponent; such columns are merged and marked contested, and
contested coefficients are never used for recovery (this is the excluded-
order degeneracy leaking into levels the admissibility condition does not
protect).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import IllConditioned, InadmissibleAlpha
from .latetime import gen_binom
from .mlfun import gamma_recip
from .orders import as_order
from .source import (
    SourceProfile,
    admissible_alpha,
    exponent_lattice,
    leading_index,
    moment,
    pair_leading_index,
)
from .spectral import SpatialField, SpectralOperator
from .forward import ObservationSet

COND_MAX = 1e12
MERGE_TOL = 1e-9


# ---------------------------------------------------------------------------
# generic fitting stages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeelResult:
    """Power-law coefficients c_k with y ~ sum_k c_k t^{-p_k}."""

    exponents: np.ndarray
    coefficients: np.ndarray  # shape (K,) or (K, n_rhs)
    trusted: np.ndarray  # p_k < cutoff
    cond: float
    rel_residual: float


def peel_exponents(
    times: Sequence[float],
    values,
    exponents: Sequence[float],
    cutoff: float = math.inf,
    cond_max: float = COND_MAX,
) -> PeelResult:
    """Fit y_i ~ sum_k c_k t_i^{-p_k} by column-scaled least squares.

    ``values`` may be a vector or a (n_rhs, n_times) matrix (one fit per
    row).  Entries with p_k >= cutoff are flagged untrusted: their signal is
    not separable from the unmodelled remainder O(t^{-cutoff}).  Raises
    IllConditioned when the scaled design exceeds cond_max; exponents closer
    than the merge tolerance should be merged by the caller beforehand.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(exponents, dtype=float)
    y = np.atleast_2d(np.asarray(values, dtype=float))
    if y.shape[-1] != len(t):
        raise ValueError("values length does not match times")
    if len(t) < 3 * len(p):
        raise ValueError(
            f"{len(t)} samples cannot constrain {len(p)} exponents; need >= {3 * len(p)}"
        )
    design = t[:, None] ** (-p[None, :])
    scale = np.linalg.norm(design, axis=0)
    scale[scale == 0.0] = 1.0
    a = design / scale
    cond = float(np.linalg.cond(a))
    if cond > cond_max:
        raise IllConditioned(
            f"peel design condition {cond:.3e} exceeds {cond_max:.1e} "
            "(exponent near-collision or too-narrow window)",
            cond=cond,
        )
    sol, *_ = np.linalg.lstsq(a, y.T, rcond=None)
    coeffs = (sol.T / scale).T
    resid = float(np.linalg.norm(a @ sol - y.T) / max(np.linalg.norm(y), 1e-300))
    out = coeffs[:, 0] if np.asarray(values).ndim == 1 else coeffs
    return PeelResult(
        exponents=p, coefficients=out, trusted=p < cutoff, cond=cond, rel_residual=resid
    )


@dataclass(frozen=True)
class MomentInversion:
    coefficients: np.ndarray
    cond: float
    rel_residual: float


def invert_moment_sequence(
    g: Sequence[float],
    powers: Sequence[float],
    lambdas: Sequence[float],
    cond_max: float = COND_MAX,
    sigmas: Sequence[float] | None = None,
) -> MomentInversion:
    """Solve g_k = sum_n c_n lam_n^{-powers_k} for c by least squares.

    Requires len(g) >= len(lambdas) + 2 and strictly increasing lambdas.
    Columns are normalised by their first entry lam_n^{-powers_0}.  With
    ``sigmas``, rows are weighted by 1/sigma_k (only relative sizes matter):
    the sequence values decay geometrically in k, so uniform row noise would
    otherwise drown the high-k entries.
    """
    g = np.asarray(g, dtype=float)
    p = np.asarray(powers, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if len(g) != len(p):
        raise ValueError("g and powers must align")
    if len(g) < len(lam) + 2:
        raise ValueError(f"need >= {len(lam) + 2} sequence values for {len(lam)} modes")
    if not np.all(np.diff(lam) > 0):
        raise ValueError("lambdas must be strictly increasing")
    scale = lam ** (-p[0])
    a = lam[None, :] ** (-p[:, None]) / scale
    rhs = g.copy()
    if sigmas is not None:
        wrow = 1.0 / np.maximum(np.asarray(sigmas, dtype=float), 1e-300)
        wrow /= np.max(wrow)
        a = a * wrow[:, None]
        rhs = rhs * wrow
        # nearly zero-weight rows add nothing; gate conditioning on the rest
        keep = wrow > 1e-10
        cond = float(np.linalg.cond(a[keep])) if keep.sum() >= len(lam) else np.inf
    else:
        cond = float(np.linalg.cond(a))
    if cond > cond_max:
        raise IllConditioned(
            f"moment system condition {cond:.3e} exceeds {cond_max:.1e} "
            "(eigenvalues too close)",
            cond=cond,
        )
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    resid = float(np.linalg.norm(a @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
    return MomentInversion(coefficients=sol / scale, cond=cond, rel_residual=resid)


# ---------------------------------------------------------------------------
# peel plan: exponent columns, merging, cutoff
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnLabel:
    kind: str  # "Q", "R", "S"
    k: int  # lattice position (1-based)
    ell: int | None = None  # moment level, S columns only

    @property
    def key(self):
        return (self.kind, self.k, self.ell)


@dataclass(frozen=True)
class PeelPlan:
    alpha: float
    ell0: int
    lattice: tuple[int, ...]
    exponents: np.ndarray  # merged, ascending
    groups: tuple[tuple[ColumnLabel, ...], ...]
    cutoff: float

    def column_of(self, label_key) -> int | None:
        for i, grp in enumerate(self.groups):
            if any(lbl.key == label_key for lbl in grp):
                return i
        return None

    def usable(self, label_key) -> bool:
        """Trusted and uncontested: below the cutoff and alone in its column."""
        i = self.column_of(label_key)
        if i is None:
            return False
        return len(self.groups[i]) == 1 and self.exponents[i] < self.cutoff


def _raw_labels(alpha: float, ell0: int, lattice, K: int, K_high: int, depth: int, velocity: bool):
    out: list[tuple[float, ColumnLabel]] = []
    for k, m in enumerate(lattice[:K], start=1):
        out.append((alpha * m, ColumnLabel("Q", k)))
        if velocity:
            out.append((alpha * m - 1.0, ColumnLabel("R", k)))
        out.append((alpha * m + ell0 + 1.0, ColumnLabel("S", k, ell0)))
    for ell in range(ell0 + 1, ell0 + depth):
        for k, m in enumerate(lattice[:K_high], start=1):
            out.append((alpha * m + ell + 1.0, ColumnLabel("S", k, ell)))
    return out


def _assemble_plan(order, ell0, kk, K_high, depth, velocity, merge_tol):
    a = order.alpha
    lattice = exponent_lattice(order, kk + 1).indices
    raw = _raw_labels(a, ell0, lattice, kk, K_high, depth, velocity)
    raw.sort(key=lambda it: it[0])
    groups: list[list] = []
    exps: list[float] = []
    for e, lbl in raw:
        if exps and abs(e - exps[-1]) < merge_tol:
            groups[-1].append(lbl)
        else:
            exps.append(e)
            groups.append([lbl])
    sup = 1.0 if a > 1.0 else 0.0
    cut_candidates = [a * lattice[kk] - sup, a * 1.0 + ell0 + depth + 1.0]
    if depth > 1:
        cut_candidates.append(a * lattice[K_high] + ell0 + 2.0)
    return PeelPlan(
        alpha=a,
        ell0=ell0,
        lattice=tuple(lattice),
        exponents=np.array(exps),
        groups=tuple(tuple(g) for g in groups),
        cutoff=min(cut_candidates),
    )


def _plan_usable_ok(plan: PeelPlan, kk: int, need: int, velocity: bool) -> bool:
    families = ["Q", "S"] + (["R"] if velocity else [])
    for fam in families:
        ell = plan.ell0 if fam == "S" else None
        if sum(plan.usable((fam, k, ell)) for k in range(1, kk + 1)) < need:
            return False
    return True


def build_peel_plan(
    alpha,
    ell0: int,
    modes: int,
    velocity: bool,
    K: int | None = None,
    ladder_depth: int = 3,
    K_high: int = 2,
    merge_tol: float = MERGE_TOL,
    max_columns: int = 40,
) -> PeelPlan:
    """Choose the exponent columns for peeling.

    The initial-data and leading-source families get K columns each; moment
    ladder levels above the leading one get K_high absorber columns.  Columns
    within merge_tol are merged (and thereby contested).  The cutoff is the
    smallest exponent the model leaves out.  With K unset, the search grows
    (K, K_high, ladder depth) until every recovered family has at least
    modes+2 usable columns, preferring the smallest column count.
    """
    order = as_order(alpha)
    need = modes + 2
    if K is not None:
        return _assemble_plan(order, ell0, K, K_high, ladder_depth, velocity, merge_tol)
    best = None
    for depth in range(ladder_depth, ladder_depth + 4):
        for kh in (K_high, K_high + 1, K_high + 2):
            for kk in range(max(need, 5), 13):
                plan = _assemble_plan(order, ell0, kk, kh, depth, velocity, merge_tol)
                if len(plan.exponents) > max_columns:
                    continue
                if _plan_usable_ok(plan, kk, need, velocity):
                    if best is None or len(plan.exponents) < len(best.exponents):
                        best = plan
                    break  # larger kk only adds columns at this (depth, kh)
    if best is not None:
        return best
    raise IllConditioned(
        f"no peel plan with >= {need} usable columns per family for "
        f"alpha={order.alpha}, ell0={ell0} within {max_columns} columns"
    )


def _family_prefactor(kind: str, alpha: float, m: int, ell: int | None) -> float:
    sign = 1.0 if (m + 1) % 2 == 0 else -1.0
    if kind == "Q":
        return sign * gamma_recip(1.0 - alpha * m)
    if kind == "R":
        return sign * gamma_recip(2.0 - alpha * m)
    return -sign * gamma_recip(-alpha * m) * gen_binom(-alpha * m - 1.0, ell)


# ---------------------------------------------------------------------------
# full reconstruction
# ---------------------------------------------------------------------------

@dataclass
class RecoveryReport:
    a_hat: SpatialField
    f_hat: SpatialField | None
    b_hat: SpatialField | None
    mu_scale: float
    residuals: dict[str, float]
    condition_numbers: dict[str, float]
    plan: PeelPlan = field(repr=False, default=None)

    def to_text(self) -> str:
        lines = ["recovery report", "==============="]
        for name in ("a_hat", "b_hat", "f_hat"):
            fld = getattr(self, name)
            if fld is not None:
                vals = ", ".join(repr(c) for c in fld.coeffs)
                lines.append(f"{name}: [{vals}]")
        lines.append(f"mu_scale: {self.mu_scale!r}")
        for label, d in (("residual", self.residuals), ("cond", self.condition_numbers)):
            for k in sorted(d):
                lines.append(f"{label}.{k}: {d[k]!r}")
        return "\n".join(lines) + "\n"

    def to_csv_rows(self, true_fields: dict[str, np.ndarray] | None = None) -> list[str]:
        """Rows `field,mode,true,recovered,abs_err`; the true/abs_err columns
        appear only when reference fields are supplied (round-trip mode)."""
        rows = []
        header = "field,mode,true,recovered,abs_err" if true_fields else "field,mode,recovered"
        rows.append(header)
        for name, fld in (("a", self.a_hat), ("b", self.b_hat), ("f", self.f_hat)):
            if fld is None:
                continue
            for n, c in enumerate(fld.coeffs, start=1):
                if true_fields:
                    tv = float(true_fields[name][n - 1])
                    rows.append(f"{name},{n},{tv!r},{c!r},{abs(c - tv)!r}")
                else:
                    rows.append(f"{name},{n},{c!r}")
        return rows


def _stage_peel_and_project(
    obs: ObservationSet, op: SpectralOperator, plan: PeelPlan, modes: int
):
    """Stages 1-2: per-point peel, then omega point system.  Returns the
    eigen-coefficient matrix W[c, n] per column, plus diagnostics."""
    peel = peel_exponents(obs.times, obs.values, plan.exponents, cutoff=plan.cutoff)
    pointwise = peel.coefficients.T  # (n_points, n_cols)
    phi = op.eigenfunction_matrix(obs.points)[:, :modes]
    cond_phi = float(np.linalg.cond(phi))
    if cond_phi > COND_MAX:
        raise IllConditioned(
            f"eigenfunction sample matrix condition {cond_phi:.3e}", cond=cond_phi
        )
    w, *_ = np.linalg.lstsq(phi, pointwise, rcond=None)  # (modes, n_cols)
    resid_phi = float(
        np.linalg.norm(phi @ w - pointwise) / max(np.linalg.norm(pointwise), 1e-300)
    )
    diags = {
        "peel_cond": peel.cond,
        "peel_residual": peel.rel_residual,
        "omega_cond": cond_phi,
        "omega_residual": resid_phi,
    }
    return w.T, diags  # (n_cols, modes)


def _family_sequence(plan: PeelPlan, w_cols: np.ndarray, kind: str, ell: int | None):
    """Usable (k, m, aggregated g_k) triples for one family."""
    seq = []
    for k, m in enumerate(plan.lattice, start=1):
        key = (kind, k, ell)
        if not plan.usable(key):
            continue
        c = plan.column_of(key)
        pref = _family_prefactor(kind, plan.alpha, m, ell)
        seq.append((k, m, float(np.sum(w_cols[c])) / pref))
    return seq


def source_tail_columns(
    mu: SourceProfile, alpha: float, ms: Sequence[int], times: Sequence[float]
) -> np.ndarray:
    """psi_k(t_j) = integral_0^T (t-s)^{-(alpha m_k + 1)} mu(s) ds, exactly.

    For t beyond the horizon the integrand is smooth, so 64-node Gauss-
    Legendre per polynomial piece is accurate to machine precision; these
    columns carry the full moment ladder of mu with no truncation.
    """
    t = np.asarray(times, dtype=float)
    if np.any(t <= mu.horizon_T):
        raise ValueError("tail columns require times beyond the horizon")
    sig = np.array([alpha * m + 1.0 for m in ms])
    out = np.zeros((len(t), len(sig)))
    y, w = np.polynomial.legendre.leggauss(64)
    for piece in mu.pieces:
        half = 0.5 * (piece.hi - piece.lo)
        s = piece.lo + half * (y + 1.0)
        wmu = w * half * piece(s)
        base = t[:, None] - s[None, :]  # (n_t, 64), all positive
        for i, sg in enumerate(sig):
            out[:, i] += (base ** (-sg)) @ wmu
    return out


_MP_COND_THRESHOLD = 1e8
_MP_DPS = 60


def _lstsq_mp(a: np.ndarray, rhs: np.ndarray):
    """Exact-arithmetic least squares via mpmath QR (one QR, many rhs).

    Deep power-law designs are numerically rank-deficient in double
    precision although their normal equations are perfectly meaningful; the
    read-out columns only inherit the local (small) conditioning once the
    factorisation itself stops injecting eps * cond(A) noise.
    """
    import mpmath as mp

    with mp.workdps(_MP_DPS):
        am = mp.matrix(a.tolist())
        sols = []
        for j in range(rhs.shape[1]):
            bv = mp.matrix(rhs[:, j].tolist())
            sols.append(mp.qr_solve(am, bv)[0])
        sol = np.array([[float(s[i]) for s in sols] for i in range(a.shape[1])])
        ata = (am.T * am) ** -1
        sens = np.sqrt(np.abs(np.array([float(ata[i, i]) for i in range(a.shape[1])])))
    return sol, sens


def _mixed_peel(
    times,
    values,
    power_exponents,
    extra_columns,
    cond_max=COND_MAX,
    gate_cols=None,
    rms_floor=1e-14,
):
    """Least-squares peel against pure powers plus precomputed columns.

    The condition gate applies to the ``gate_cols`` block (default: all
    columns) -- the columns whose coefficients flow into recovery.  Deep
    tail columns beyond that block may be numerically degenerate among
    themselves; when the full design conditioning exceeds what double
    precision can factorise reliably, the solve runs in extended precision
    so that the well-determined coefficients keep their local accuracy.

    Returns coefficients, per-column standard errors, the gated condition
    number, and the relative residual.
    """
    t = np.asarray(times, dtype=float)
    y = np.atleast_2d(np.asarray(values, dtype=float))
    p = np.asarray(power_exponents, dtype=float)
    with np.errstate(under="ignore"):
        design = np.hstack([t[:, None] ** (-p[None, :]), extra_columns])
    n_cols = design.shape[1]
    if len(t) < 2 * n_cols:
        raise ValueError(
            f"{len(t)} samples cannot constrain {n_cols} columns; need >= {2 * n_cols}"
        )
    scale = np.linalg.norm(design, axis=0)
    # columns numerically dead on this window contribute nothing; freeze them
    dead = scale < 1e-200 * max(float(scale.max()), 1e-300)
    scale_eff = np.where(dead, 1.0, scale)
    a = design / scale_eff
    a[:, dead] = 0.0
    live = ~dead
    gate_idx = np.arange(n_cols) if gate_cols is None else np.asarray(list(gate_cols))
    gate = a[:, gate_idx[live[gate_idx]]]
    cond = float(np.linalg.cond(gate)) if gate.shape[1] else 1.0
    if cond > cond_max:
        raise IllConditioned(
            f"peel design condition {cond:.3e} exceeds {cond_max:.1e} "
            "(exponent near-collision or too-narrow window)",
            cond=cond,
        )
    yt = y.T
    cond_full = float(np.linalg.cond(a[:, live])) if live.any() else 1.0
    if cond_full > _MP_COND_THRESHOLD:
        sol, sens = _lstsq_mp(a, yt)
    else:
        sol, *_ = np.linalg.lstsq(a, yt, rcond=None)
        sens = np.sqrt(np.abs(np.diag(np.linalg.pinv(a.T @ a))))
    res_mat = a @ sol - yt
    resid = float(np.linalg.norm(res_mat) / max(np.linalg.norm(y), 1e-300))
    dof = max(len(t) - n_cols, 1)
    rms = np.sqrt(np.sum(res_mat**2, axis=0) / dof)  # per rhs
    rms = np.maximum(rms, rms_floor * np.max(np.abs(y)))
    coeffs = (sol.T / scale_eff).T
    se = (sens[:, None] / scale_eff[:, None]) * rms[None, :]
    se[dead] = np.inf
    return coeffs, se, cond, resid


def _project_omega(op: SpectralOperator, points, pointwise, modes: int):
    """Solve the eigenfunction sample system on the omega points."""
    phi = op.eigenfunction_matrix(points)[:, :modes]
    cond_phi = float(np.linalg.cond(phi))
    if cond_phi > COND_MAX:
        raise IllConditioned(
            f"eigenfunction sample matrix condition {cond_phi:.3e}", cond=cond_phi
        )
    w, *_ = np.linalg.lstsq(phi, pointwise, rcond=None)
    resid = float(
        np.linalg.norm(phi @ w - pointwise) / max(np.linalg.norm(pointwise), 1e-300)
    )
    return w, cond_phi, resid


def _mode_profiles(op, a_val: float, mu: SourceProfile, times, modes: int):
    """Exact per-mode time profiles of the three data channels."""
    from .forward import duhamel_mode
    from .mlfun import MLOrderPair, ml_eval

    lam = op.eigenvalues[:modes]
    ta = np.asarray(times, dtype=float) ** a_val
    e1 = np.array([[ml_eval(MLOrderPair(a_val, 1.0), -l * x).value for x in ta] for l in lam])
    e2 = None
    if a_val > 1.0:
        e2 = np.asarray(times, dtype=float) * np.array(
            [[ml_eval(MLOrderPair(a_val, 2.0), -l * x).value for x in ta] for l in lam]
        )
    duh = np.array([[duhamel_mode(l, a_val, mu, t) for t in times] for l in lam])
    return e1, e2, duh


def _osc_columns(op, a_val: float, times, modes: int) -> np.ndarray:
    """Damped-oscillation pair per mode for the wave-type regime.

    For 1 < alpha < 2 the Mittag-Leffler kernels carry, besides the algebraic
    tail, a component ~ exp(lam^{1/alpha} t cos(pi/alpha)) oscillating at
    frequency lam^{1/alpha} sin(pi/alpha).  Power columns cannot absorb it,
    and near the window start it can dwarf the deep source rows.
    """
    if a_val <= 1.0:
        return np.zeros((len(times), 0))
    t = np.asarray(times, dtype=float)
    cols = []
    for lam in op.eigenvalues[:modes]:
        rate = lam ** (1.0 / a_val) * abs(math.cos(math.pi / a_val))
        freq = lam ** (1.0 / a_val) * math.sin(math.pi / a_val)
        if rate * t[0] > 34.0:
            continue  # below the precision floor everywhere in the window
        with np.errstate(under="ignore"):
            damp = np.exp(-np.minimum(rate * t, 745.0))
        cols.append(damp * np.cos(freq * t))
        cols.append(damp * np.sin(freq * t))
    if not cols:
        return np.zeros((len(times), 0))
    return np.column_stack(cols)


def reconstruct(
    obs: ObservationSet,
    alpha,
    op: SpectralOperator,
    mu: SourceProfile,
    K: int | None = None,
    M: int | None = None,
    sweeps: int = 2,
) -> RecoveryReport:
    """Recover a (and b for alpha > 1) and f from one observation set.

    Requires the order admissible for mu's leading index and observation
    times beyond twice the horizon.

    The three exponent families collide too tightly for a single joint fit
    to resolve the source sequence at double precision, so the recovery
    alternates:

    1. a joint peel (K power columns per initial-data family plus K exact
       source-tail columns built from the known mu) pins down a and b,
       whose exponents are the slowest;
    2. their response is subtracted exactly through the Mittag-Leffler
       evaluators, and the residual -- now pure source signal plus a tiny
       subtraction residue soaked by two power heads -- is peeled against
       the tail columns alone, whose exponents are a full alpha apart;
    3. the source response is subtracted in turn and the initial-data
       families are refit.

    Two sweeps of 2-3 push the cross-family coupling to the data's
    precision floor.  Diagnostics carry the condition numbers and relative
    residuals of every stage.
    """
    order = as_order(alpha)
    a_val = order.alpha
    M = M or op.modes
    K = K or M + 2
    ell0, _ = leading_index(mu)
    adm = admissible_alpha(order, ell0)
    if not adm.admissible:
        raise InadmissibleAlpha(
            f"alpha={a_val} is within {adm.distance:.2e} of excluded value "
            f"{adm.nearest_excluded} for ell0={ell0}"
        )
    if np.any(obs.times <= 2.0 * obs.horizon_T):
        raise ValueError("observation times must exceed twice the source horizon")
    velocity = a_val > 1.0
    # the source stage models the tail family a few orders deeper: its
    # columns are a full alpha apart, so depth is cheap there, and the
    # unmodelled residue would otherwise bias the last rows read
    K_src = max(K + 3, 7)
    lattice = exponent_lattice(order, K_src + 1).indices
    ms = lattice[:K]
    lam = op.eigenvalues[:M]
    times = obs.times
    q_exps = [a_val * m for m in lattice[:K]]
    r_exps = [a_val * m - 1.0 for m in lattice[:K]] if velocity else []
    psi_deep = source_tail_columns(mu, a_val, lattice[:K_src], times)
    psi = psi_deep[:, :K]
    phi = op.eigenfunction_matrix(obs.points)[:, :M]
    e1, e2, duh = _mode_profiles(op, a_val, mu, times, M)
    osc = _osc_columns(op, a_val, times, M)

    sign = [1.0 if (m + 1) % 2 == 0 else -1.0 for m in ms]
    pref_q = [s * gamma_recip(1.0 - a_val * m) for s, m in zip(sign, ms)]
    pref_r = [s * gamma_recip(2.0 - a_val * m) for s, m in zip(sign, ms)]
    # tail columns carry mu's moment ladder already: only the expansion factor
    pref_s = [-s * gamma_recip(-a_val * m) for s, m in zip(sign, ms)]

    def invert_family(w, col_se, offset, prefactors, power_shift):
        g = [float(np.sum(w[:, offset + i])) / prefactors[i] for i in range(K)]
        sig = [col_se[offset + i] / abs(prefactors[i]) for i in range(K)]
        return invert_moment_sequence(g, [m + power_shift for m in ms], lam, sigmas=sig)

    diags: dict[str, float] = {}

    late = slice(len(times) // 4, None)

    def fit_initial(values, warm: bool):
        """Q/R read from a joint fit (warm) or from source-subtracted data.

        The refit carries no source columns at all -- the subtraction residue
        shrinks with every sweep, while free tail columns would sit within a
        fraction of an exponent of the initial-data columns and leech their
        signal -- and drops the earliest quarter of the window, where the
        unmodelled lattice tail is largest (the initial-data information
        lives late; its exponents are the slowest)."""
        sl = slice(None) if warm else late
        extra = np.hstack([psi[sl], osc[sl]]) if warm else osc[sl]
        pw, se, cond, resid = _mixed_peel(times[sl], values[:, sl], q_exps + r_exps, extra)
        w, cond_phi, resid_phi = _project_omega(op, obs.points, pw.T, M)
        col_se = np.linalg.norm(se, axis=1)
        iq = invert_family(w, col_se, 0, pref_q, 0)
        ir = invert_family(w, col_se, K, pref_r, 0) if velocity else None
        bits = {
            "peel_cond": cond,
            "peel_residual": resid,
            "omega_cond": cond_phi,
            "omega_residual": resid_phi,
        }
        return iq, ir, bits

    def fit_source(values):
        """Source read on initial-data-subtracted values; two power heads per
        initial-data family soak the subtraction residue."""
        head = q_exps[:2] + (r_exps[:2] if velocity else [])
        pw, se, cond, resid = _mixed_peel(
            times, values, head, np.hstack([psi_deep, osc]),
            gate_cols=list(range(len(head), len(head) + K)),
        )
        w, cond_phi, resid_phi = _project_omega(op, obs.points, pw.T, M)
        inv = invert_family(w, np.linalg.norm(se, axis=1), len(head), pref_s, 1)
        bits = {"peel_cond_source": cond, "peel_residual_source": resid}
        return inv, bits

    def initial_response(a_vec, b_vec):
        initial = a_vec[:, None] * e1
        if velocity:
            initial = initial + b_vec[:, None] * e2
        return phi @ initial

    inv_q, inv_r, bits = fit_initial(obs.values, warm=True)
    diags.update(bits)
    a_vec = inv_q.coefficients
    b_vec = inv_r.coefficients if velocity else None

    inv_s = None
    for _ in range(max(1, sweeps)):
        inv_s, bits_s = fit_source(obs.values - initial_response(a_vec, b_vec))
        f_vec = inv_s.coefficients
        inv_q, inv_r, bits = fit_initial(
            obs.values - phi @ (f_vec[:, None] * duh), warm=False
        )
        a_vec = inv_q.coefficients
        b_vec = inv_r.coefficients if velocity else None
        diags.update(bits_s)
        diags.update(bits)
    inv_s, bits_s = fit_source(obs.values - initial_response(a_vec, b_vec))
    diags.update(bits_s)

    a_hat = SpatialField(a_vec, op)
    b_hat = SpatialField(b_vec, op) if velocity else None
    f_hat = SpatialField(inv_s.coefficients, op)
    diags["moment_cond_a"] = inv_q.cond
    diags["moment_residual_a"] = inv_q.rel_residual
    if velocity:
        diags["moment_cond_b"] = inv_r.cond
        diags["moment_residual_b"] = inv_r.rel_residual
    diags["moment_cond_f"] = inv_s.cond
    diags["moment_residual_f"] = inv_s.rel_residual

    residuals = {k: v for k, v in diags.items() if "residual" in k}
    conds = {k: v for k, v in diags.items() if "cond" in k}
    return RecoveryReport(
        a_hat=a_hat,
        f_hat=f_hat,
        b_hat=b_hat,
        mu_scale=1.0,
        residuals=residuals,
        condition_numbers=conds,
        plan=None,
    )


# ---------------------------------------------------------------------------
# two-solution comparison
# ---------------------------------------------------------------------------

@dataclass
class SimultaneousReport:
    a_diff_norm: float
    b_diff_norm: float | None
    f_ratio: float
    moment_relation: list[tuple[int, float]]
    residuals: dict[str, float]
    condition_numbers: dict[str, float]


def _product_fields_and_ratios(
    obs: ObservationSet, op: SpectralOperator, plan: PeelPlan, modes: int, depth: int
):
    """Per observation set: the S-family eigen data at the leading level and
    the recovered moment ratios mu_ell / mu_{ell1} for the higher levels."""
    w_cols, diags = _stage_peel_and_project(obs, op, plan, modes)
    lam = op.eigenvalues[:modes]
    ell1 = plan.ell0
    seq_s = _family_sequence(plan, w_cols, "S", ell1)
    inv = invert_moment_sequence([g for *_, g in seq_s], [m + 1 for _, m, _ in seq_s], lam)
    product = inv.coefficients  # = mu_{ell1} * f_n
    # ratios from the k=1 column of each ladder level (binomial factors divided out)
    ratios: list[tuple[int, float]] = []
    base_key = ("S", 1, ell1)
    cb = plan.column_of(base_key)
    base = w_cols[cb] / _family_prefactor("S", plan.alpha, plan.lattice[0], ell1)
    denom = float(base @ base)
    for ell in range(ell1 + 1, ell1 + depth):
        key = ("S", 1, ell)
        if not plan.usable(key):
            continue
        c = plan.column_of(key)
        lvl = w_cols[c] / _family_prefactor("S", plan.alpha, plan.lattice[0], ell)
        ratios.append((ell, float(lvl @ base) / denom))
    return product, ratios, diags, inv


def simultaneous_reconstruct(
    obs: ObservationSet,
    obs2: ObservationSet,
    alpha,
    op: SpectralOperator,
    mu: SourceProfile,
    mu2: SourceProfile,
    K: int | None = None,
    M: int | None = None,
    ladder_depth: int = 3,
) -> SimultaneousReport:
    """Compare two problems sharing the operator and order.

    Returns ||a_hat - a2_hat|| (and the b difference for alpha > 1) obtained
    from the difference data, the fitted scalar c with f2_hat ~ c * f_hat
    (the only freedom left by the product structure of the source), and the
    recovered moment-ratio mismatches

        (mu_m / mu_{ell1}) - (mu2_m / mu2_{ell1}),   m = ell1+1, ...

    which all vanish exactly when mu2 is proportional to mu.  The time
    factors are needed to normalise f from the recovered products mu_{ell1} f;
    everything else is taken from the observation data.
    """
    order = as_order(alpha)
    a_val = order.alpha
    M = M or op.modes
    ell1 = pair_leading_index(mu, mu2)
    adm = admissible_alpha(order, ell1)
    if not adm.admissible:
        raise InadmissibleAlpha(
            f"alpha={a_val} within {adm.distance:.2e} of excluded value "
            f"{adm.nearest_excluded} for ell1={ell1}"
        )
    if not (
        np.array_equal(obs.points, obs2.points) and np.array_equal(obs.times, obs2.times)
    ):
        raise ValueError("observation sets must share points and times")
    velocity = a_val > 1.0
    plan = build_peel_plan(order, ell1, M, velocity, K=K, ladder_depth=ladder_depth)
    lam = op.eigenvalues[:M]

    # difference data: initial data enter linearly, so Q/R peels of u - u2
    # recover a - a2 and b - b2 without knowing the sources
    diff = obs.difference(obs2)
    w_diff, diags = _stage_peel_and_project(diff, op, plan, M)
    seq_q = _family_sequence(plan, w_diff, "Q", None)
    inv_q = invert_moment_sequence([g for *_, g in seq_q], [m for _, m, _ in seq_q], lam)
    a_diff = float(np.linalg.norm(inv_q.coefficients))
    b_diff = None
    if velocity:
        seq_r = _family_sequence(plan, w_diff, "R", None)
        inv_r = invert_moment_sequence(
            [g for *_, g in seq_r], [m for _, m, _ in seq_r], lam
        )
        b_diff = float(np.linalg.norm(inv_r.coefficients))

    mu_l1 = moment(mu, ell1)
    mu2_l1 = moment(mu2, ell1)
    flipped = abs(mu_l1) < abs(mu2_l1) * 1e-6  # WLOG the first moment is nonzero
    if flipped:
        obs, obs2 = obs2, obs
        mu_l1, mu2_l1 = mu2_l1, mu_l1

    prod1, ratios1, d1, _ = _product_fields_and_ratios(obs, op, plan, M, ladder_depth)
    prod2, ratios2, d2, _ = _product_fields_and_ratios(obs2, op, plan, M, ladder_depth)
    f1 = prod1 / mu_l1
    if abs(mu2_l1) > 0:
        f2 = prod2 / mu2_l1
        denom = float(f1 @ f1)
        f_ratio = float(f2 @ f1) / denom if denom > 0 else math.inf
    else:
        f_ratio = math.inf if float(np.linalg.norm(prod2)) > 0 else 1.0
    if flipped:
        f_ratio = 1.0 / f_ratio if f_ratio != 0 else math.inf

    rel = []
    r2 = dict(ratios2)
    for ell, r1 in ratios1:
        if ell in r2:
            rel.append((ell, r1 - r2[ell]))

    residuals = {f"diff_{k}": v for k, v in diags.items() if "residual" in k}
    residuals.update({f"obs1_{k}": v for k, v in d1.items() if "residual" in k})
    residuals.update({f"obs2_{k}": v for k, v in d2.items() if "residual" in k})
    conds = {f"diff_{k}": v for k, v in diags.items() if "cond" in k}
    conds.update({f"obs1_{k}": v for k, v in d1.items() if "cond" in k})
    conds.update({f"obs2_{k}": v for k, v in d2.items() if "cond" in k})
    return SimultaneousReport(
        a_diff_norm=a_diff,
        b_diff_norm=b_diff,
        f_ratio=f_ratio,
        moment_relation=rel,
        residuals=residuals,
        condition_numbers=conds,
    )


# ---------------------------------------------------------------------------
# classical-order non-uniqueness witnesses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    a: float
    f: float
    b: float | None = None


def nonuniqueness_witness(order: str, lam_or_r: float, T: float) -> Witness:
    """Data making the post-horizon tail vanish identically at a classical order.

    order='one' (first derivative): with f = 1,  a = -(e^{lam T} - 1)/lam
    kills the tail of u' = -lam u + chi_(0,T) f.
    order='two' (second derivative, lam = r^2): with f = 1,
    a = -(cos(rT) - 1)/r^2 and b = -sin(rT)/r kill the tail.
    """
    if order == "one":
        lam = lam_or_r
        if lam == 0.0:
            raise ValueError("lambda must be nonzero")
        return Witness(a=-(math.exp(lam * T) - 1.0) / lam, f=1.0)
    if order == "two":
        r = lam_or_r
        if r <= 0.0:
            raise ValueError("r must be positive")
        return Witness(
            a=-(math.cos(r * T) - 1.0) / r**2, f=1.0, b=-math.sin(r * T) / r
        )
    raise ValueError(f"order must be 'one' or 'two', got {order!r}")
