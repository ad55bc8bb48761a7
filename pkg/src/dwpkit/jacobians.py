"""Analytic log-Jacobian determinants for matrix transformations, plus a
finite-difference oracle over explicit coordinate charts.

The transformations covered are exactly the ones composing the mixed
Wishart densities: squaring a triangular or trapezoidal factor, left or
right multiplication of a trapezoidal factor by a triangular matrix, and
congruence of a (possibly rank-deficient) symmetric matrix by an
invertible matrix.  Each analytic formula can be cross-checked with
:func:`numeric_logjac`, which differentiates the transformation between
two charts of equal dimension and takes the log-determinant of the
resulting square Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonPositiveDiagonal, ShapeMismatch, Singular, SingularJacobian
from .linalg import as_matrix

_LOG_DET_FLOOR = np.log(1e-250)


@dataclass(frozen=True)
class CoordinateChart:
    """Bijection between free real coordinates and a structured matrix."""

    name: str
    dimension: int
    embed: Callable[[np.ndarray], np.ndarray]
    extract: Callable[[np.ndarray], np.ndarray]


def _trapezoid_indices(P: int, nu: int):
    nt = min(P, nu)
    return [(i, j) for j in range(nt) for i in range(j, P)]


def trapezoid_chart(P: int, nu: int) -> CoordinateChart:
    """Chart of ``(P, min(nu, P))`` lower-trapezoidal matrices.

    Coordinates are the stored entries in column-major order; the
    dimension is ``nu*P - nu*(nu-1)/2`` when ``nu <= P``.
    """
    idx = _trapezoid_indices(P, nu)
    rows = np.array([i for i, _ in idx])
    cols = np.array([j for _, j in idx])
    nt = min(P, nu)

    def embed(x):
        m = np.zeros((P, nt))
        m[rows, cols] = x
        return m

    def extract(m):
        return np.asarray(m, dtype=float)[rows, cols]

    return CoordinateChart(f"trapezoid({P},{nu})", len(idx), embed, extract)


def symmetric_half_chart(P: int) -> CoordinateChart:
    """Chart of symmetric ``P x P`` matrices by their lower half."""
    idx = [(i, j) for j in range(P) for i in range(j, P)]
    rows = np.array([i for i, _ in idx])
    cols = np.array([j for _, j in idx])

    def embed(x):
        m = np.zeros((P, P))
        m[rows, cols] = x
        m[cols, rows] = x
        return m

    def extract(m):
        return np.asarray(m, dtype=float)[rows, cols]

    return CoordinateChart(f"symmetric-half({P})", len(idx), embed, extract)


def rank_symmetric_chart(P: int, nu: int) -> CoordinateChart:
    """Chart of rank-``min(nu, P)`` symmetric PSD matrices.

    The free coordinates are the lower-trapezoid entries of the matrix
    itself (its leading ``nt`` columns); the trailing block is determined
    by the rank constraint and reconstructed on embedding as
    ``W22 = W21 W11^-1 W21^T``.  This is the chart in which the singular
    matrix densities and Jacobians here are stated.
    """
    nt = min(P, nu)
    if nt == P:
        return symmetric_half_chart(P)
    idx = _trapezoid_indices(P, nt)
    rows = np.array([i for i, _ in idx])
    cols = np.array([j for _, j in idx])

    def embed(x):
        m = np.zeros((P, P))
        m[rows, cols] = x
        lead = m[:nt, :nt]
        lead = lead + np.tril(lead, -1).T
        strip = m[nt:, :nt]
        m[:nt, :nt] = lead
        m[:nt, nt:] = strip.T
        m[nt:, nt:] = strip @ np.linalg.solve(lead, strip.T)
        return m

    def extract(m):
        return np.asarray(m, dtype=float)[rows, cols]

    return CoordinateChart(f"symmetric-half-rank({P},{nt})", len(idx), embed, extract)


# ---------------------------------------------------------------------------
# Analytic log-Jacobians
# ---------------------------------------------------------------------------


def _positive_diag(m, count: int, what: str) -> np.ndarray:
    d = np.diag(as_matrix(m, what))[:count]
    if np.any(d <= 0.0):
        raise NonPositiveDiagonal(f"{what} must have a strictly positive diagonal")
    return d


def logjac_chol_square(lam) -> float:
    """Log-Jacobian of ``lam -> lam @ lam.T`` for square lower-triangular ``lam``.

    Equals ``sum_i [log 2 + (P - i + 1) log lam_ii]`` on the half chart
    of symmetric matrices.
    """
    lam = as_matrix(lam, "lam")
    if lam.shape[0] != lam.shape[1]:
        raise ShapeMismatch(f"expected a square factor, got {lam.shape}")
    P = lam.shape[0]
    d = _positive_diag(lam, P, "lam")
    i = np.arange(1, P + 1)
    return float((np.log(2.0) + (P - i + 1) * np.log(d)).sum())


def logjac_chol_rect(lam) -> float:
    """Log-Jacobian of ``lam -> lam @ lam.T`` for a ``(P, nt)`` trapezoid.

    Equals ``sum_{i<=nt} [log 2 + (P - i + 1) log lam_ii]`` between the
    trapezoid chart and the rank-restricted symmetric chart; coincides
    with :func:`logjac_chol_square` when ``nt == P``.
    """
    lam = as_matrix(lam, "lam")
    P, nt = lam.shape
    if nt > P:
        raise ShapeMismatch(f"trapezoid must have at most P columns, got {lam.shape}")
    d = _positive_diag(lam, nt, "lam")
    i = np.arange(1, nt + 1)
    return float((np.log(2.0) + (P - i + 1) * np.log(d)).sum())


def logjac_left_lower(L, nu: int) -> float:
    """Log-Jacobian of ``T -> L @ T`` on the trapezoid chart.

    ``L`` is ``P x P`` lower triangular; the value is
    ``sum_i min(i, nu) log L_ii``.
    """
    L = as_matrix(L, "L")
    if L.shape[0] != L.shape[1]:
        raise ShapeMismatch(f"L must be square, got {L.shape}")
    P = L.shape[0]
    d = _positive_diag(L, P, "L")
    i = np.arange(1, P + 1)
    return float((np.minimum(i, nu) * np.log(d)).sum())


def logjac_right_lower(B, P: int) -> float:
    """Log-Jacobian of ``T -> T @ B`` on the trapezoid chart.

    ``B`` is ``nt x nt`` lower triangular; the value is
    ``sum_{i<=nt} (P - i + 1) log B_ii``.
    """
    B = as_matrix(B, "B")
    if B.shape[0] != B.shape[1]:
        raise ShapeMismatch(f"B must be square, got {B.shape}")
    nt = B.shape[0]
    d = _positive_diag(B, nt, "B")
    i = np.arange(1, nt + 1)
    return float(((P - i + 1) * np.log(d)).sum())


def logjac_congruence(
    A, c_lead_logdet: float, d_lead_logdet: float, nu: int, P: int
) -> float:
    """Log-Jacobian of the congruence ``C -> D = A C A^T`` on rank charts.

    The inputs are the log-determinants of the leading
    ``min(nu, P)``-blocks of ``C`` and ``D``.  For ``nu >= P`` the value
    collapses to ``(P + 1) log |det A|``.
    """
    A = as_matrix(A, "A")
    sign, logdet = np.linalg.slogdet(A)
    if sign == 0 or not np.isfinite(logdet):
        raise Singular("A is numerically singular")
    return float(nu * logdet + (nu - P - 1) / 2.0 * (c_lead_logdet - d_lead_logdet))


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def numeric_logjac(
    transform: Callable[[np.ndarray], np.ndarray],
    point: np.ndarray,
    chart_in: CoordinateChart,
    chart_out: CoordinateChart,
    step_scale: float = 1e-5,
) -> float:
    """Finite-difference log-Jacobian of a matrix transformation.

    Builds the square Jacobian of ``chart_out.extract . transform .
    chart_in.embed`` with central differences (step
    ``step_scale * (1 + |coordinate|)`` per coordinate) and returns the
    log of the absolute determinant.
    """
    if chart_in.dimension != chart_out.dimension:
        raise ShapeMismatch(
            f"charts must have equal dimension: {chart_in.dimension} vs "
            f"{chart_out.dimension}"
        )
    x = np.asarray(point, dtype=float)
    if x.shape != (chart_in.dimension,):
        raise ShapeMismatch(
            f"point must have shape ({chart_in.dimension},), got {x.shape}"
        )
    n = chart_in.dimension
    jac = np.zeros((n, n))
    for j in range(n):
        h = step_scale * (1.0 + abs(x[j]))
        xp = x.copy()
        xp[j] += h
        xm = x.copy()
        xm[j] -= h
        fp = chart_out.extract(transform(chart_in.embed(xp)))
        fm = chart_out.extract(transform(chart_in.embed(xm)))
        jac[:, j] = (fp - fm) / (2.0 * h)
    sign, logdet = np.linalg.slogdet(jac)
    if sign == 0 or not np.isfinite(logdet) or logdet < _LOG_DET_FLOOR:
        raise SingularJacobian("finite-difference Jacobian is numerically singular")
    return float(logdet)
