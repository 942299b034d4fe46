"""Model self-adjoint operators with explicit eigenpairs and spectral projections.

The solver only ever needs an ordered simple spectrum 0 < lam_1 < lam_2 < ...
together with evaluable orthonormal eigenfunctions, so operators are
represented directly by those data.  Two constructors are provided: the 1D
Dirichlet Laplacian -u'' on (0, L), and a user-supplied diagonal spectrum
riding on the same sine basis (useful for spectrum-only experiments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import GridTooCoarse

DEFAULT_QUAD_NODES = 512


@dataclass(frozen=True)
class SpectralOperator:
    """Ordered simple spectrum with evaluable eigenfunctions on a 1D interval."""

    eigenvalues: np.ndarray
    eigenfunction: Callable[[int, np.ndarray], np.ndarray]
    domain: tuple[float, float]
    dim: int = 1

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        object.__setattr__(self, "eigenvalues", ev)
        if ev.ndim != 1 or len(ev) == 0:
            raise ValueError("eigenvalues must be a nonempty 1D sequence")
        if not ev[0] > 0:
            raise ValueError(f"eigenvalues must be positive, got lam_1={ev[0]}")
        if not np.all(np.diff(ev) > 0):
            raise ValueError("eigenvalues must be strictly increasing")
        lo, hi = self.domain
        if not hi > lo:
            raise ValueError("domain must be a nonempty interval")

    @property
    def modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    def eigenfunction_eval(self, n: int, x) -> np.ndarray:
        """phi_n at points x; n is 1-based."""
        if not 1 <= n <= self.modes:
            raise ValueError(f"mode index {n} out of range 1..{self.modes}")
        return self.eigenfunction(n, np.asarray(x, dtype=float))

    def eigenfunction_matrix(self, x) -> np.ndarray:
        """Matrix Phi[i, n-1] = phi_n(x_i)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.column_stack([self.eigenfunction(n, x) for n in range(1, self.modes + 1)])


@dataclass(frozen=True)
class SpatialField:
    """A spatial function stored as coefficients against the eigenbasis."""

    coeffs: np.ndarray
    op: SpectralOperator | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))

    @property
    def modes(self) -> int:
        return len(self.coeffs)

    def norm(self) -> float:
        """L2 norm (= coefficient 2-norm by orthonormality)."""
        return float(np.linalg.norm(self.coeffs))

    def __add__(self, other: "SpatialField") -> "SpatialField":
        return SpatialField(self.coeffs + other.coeffs, self.op or other.op)

    def scaled(self, c: float) -> "SpatialField":
        return SpatialField(c * self.coeffs, self.op)


def _sine_basis(length: float, offset: float = 0.0) -> Callable[[int, np.ndarray], np.ndarray]:
    amp = math.sqrt(2.0 / length)

    def phi(n: int, x: np.ndarray) -> np.ndarray:
        return amp * np.sin(n * math.pi * (x - offset) / length)

    return phi


def dirichlet_laplacian_1d(length: float, modes: int) -> SpectralOperator:
    """-u'' on (0, length) with Dirichlet ends: lam_n = (n pi / L)^2,
    phi_n = sqrt(2/L) sin(n pi x / L)."""
    if length <= 0:
        raise ValueError("length must be positive")
    if modes < 1:
        raise ValueError("modes must be >= 1")
    n = np.arange(1, modes + 1)
    return SpectralOperator(
        eigenvalues=(n * math.pi / length) ** 2,
        eigenfunction=_sine_basis(length),
        domain=(0.0, length),
    )


def diagonal_operator(eigenvalues: Sequence[float], length: float = math.pi, dim: int = 1) -> SpectralOperator:
    """Custom spectrum on the orthonormal sine basis of (0, length)."""
    return SpectralOperator(
        eigenvalues=np.asarray(eigenvalues, dtype=float),
        eigenfunction=_sine_basis(length),
        domain=(0.0, length),
        dim=dim,
    )


def quad_rule(op: SpectralOperator, n_nodes: int = DEFAULT_QUAD_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on the operator's domain."""
    t, w = np.polynomial.legendre.leggauss(n_nodes)
    lo, hi = op.domain
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


def project(op: SpectralOperator, samples, n_nodes: int = DEFAULT_QUAD_NODES) -> SpatialField:
    """Spectral coefficients c_n = integral of f * phi_n over the domain.

    ``samples`` is either a callable f(x) or an array of values on the
    quad_rule grid.  The grid must resolve the highest retained mode at
    >= 8 nodes per oscillation (mode M has M/2 oscillations, so
    n_nodes >= 4*M).
    """
    if n_nodes < 4 * op.modes:
        raise GridTooCoarse(
            f"{n_nodes} nodes cannot resolve mode {op.modes}; need >= {4 * op.modes}"
        )
    x, w = quad_rule(op, n_nodes)
    fx = np.asarray(samples(x) if callable(samples) else samples, dtype=float)
    if fx.shape != x.shape:
        raise ValueError(f"sample array has shape {fx.shape}, expected {x.shape}")
    coeffs = op.eigenfunction_matrix(x).T @ (w * fx)
    return SpatialField(coeffs, op)


def synthesize(fld: SpatialField, x, op: SpectralOperator | None = None) -> np.ndarray:
    """Evaluate sum_n c_n phi_n at points x."""
    operator = op or fld.op
    if operator is None:
        raise ValueError("field carries no operator; pass one explicitly")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    vals = operator.eigenfunction_matrix(np.atleast_1d(x))[:, : fld.modes] @ fld.coeffs
    return float(vals[0]) if scalar else vals


@dataclass(frozen=True)
class WeylFit:
    c0_estimate: float
    holds: bool
    rel_residual: float


def weyl_check(op: SpectralOperator) -> WeylFit:
    """Fit lam_n ~ c0 * n^{2/d} over the top half of the spectrum.

    The exponent is held at 2/d and only c0 is fitted (in log space); the
    relative residual is the RMS log deviation.  holds = residual < 0.05.
    """
    if op.modes < 10:
        raise ValueError("weyl_check needs at least 10 modes")
    n = np.arange(1, op.modes + 1, dtype=float)
    sel = n >= op.modes / 2
    logdev = np.log(op.eigenvalues[sel]) - (2.0 / op.dim) * np.log(n[sel])
    logc0 = float(np.mean(logdev))
    resid = float(np.sqrt(np.mean((logdev - logc0) ** 2)))
    return WeylFit(c0_estimate=math.exp(logc0), holds=resid < 0.05, rel_residual=resid)
