"""Dense linear-algebra primitives shared by the rest of the package.

Everything here is a pure function of its inputs: matrices are plain
float64 numpy arrays, nothing is mutated, and all routines are safe to
call concurrently.  Inputs are checked to be finite up front so that a
factorisation failure always means what it says.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import (
    DomainError,
    FactorizationFailure,
    NonPositiveDiagonal,
    RankDeficiency,
    ShapeMismatch,
    Singular,
)

#: Multipliers applied to the mean diagonal of the input when a Cholesky
#: factorisation needs regularising.  The smallest level that succeeds wins.
DEFAULT_JITTER_STEPS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite float64 2-D array.

    Raises
    ------
    ShapeMismatch
        If ``a`` is not two-dimensional.
    ValueError
        If ``a`` contains NaN or infinity.
    """
    out = np.asarray(a, dtype=float)
    if out.ndim != 2:
        raise ShapeMismatch(f"{name}: expected a 2-D array, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name}: non-finite entries are not admitted")
    return out


def as_symmetric(a, name: str = "matrix", tol: float = 1e-10) -> np.ndarray:
    """Validate that ``a`` is square and symmetric, return it symmetrised.

    Symmetry is required up to an absolute tolerance of ``tol`` relative to
    the largest entry magnitude (with a floor of 1), after which the exact
    average ``(a + a.T) / 2`` is returned so downstream factorisations see
    a bitwise-symmetric operand.
    """
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"{name}: expected a square matrix, got {m.shape}")
    scale = max(1.0, float(np.abs(m).max())) if m.size else 1.0
    if m.size and float(np.abs(m - m.T).max()) > tol * scale:
        raise ValueError(f"{name}: not symmetric within tolerance {tol}")
    return (m + m.T) / 2.0


def as_lower_triangular(a, name: str = "matrix", positive_diagonal: bool = False) -> np.ndarray:
    """Validate that ``a`` is square with exact zeros above the diagonal."""
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"{name}: expected a square matrix, got {m.shape}")
    if m.size and np.any(np.triu(m, 1) != 0.0):
        raise ValueError(f"{name}: entries above the diagonal must be exactly zero")
    if positive_diagonal and np.any(np.diag(m) <= 0.0):
        raise NonPositiveDiagonal(f"{name}: diagonal must be strictly positive")
    return m


def cholesky_with_jitter(m, jitter_steps=None) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``m + jitter * I``.

    Each step in the policy is scaled by the mean diagonal of ``m`` and
    tried in order; the factor for the smallest level that succeeds is
    returned together with the jitter actually added.

    Returns
    -------
    (L, jitter) : tuple of ndarray and float
        ``L @ L.T == m + jitter * np.eye(len(m))`` up to round-off.

    Raises
    ------
    FactorizationFailure
        If every jitter level fails, i.e. ``m`` is decisively not PSD.
    """
    m = as_symmetric(m, "m")
    steps = DEFAULT_JITTER_STEPS if jitter_steps is None else tuple(jitter_steps)
    mean_diag = float(np.trace(m)) / m.shape[0] if m.shape[0] else 0.0
    scale = mean_diag if mean_diag > 0 else 1.0
    eye = np.eye(m.shape[0])
    for step in steps:
        jitter = step * scale
        try:
            return np.linalg.cholesky(m + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise FactorizationFailure(
        f"cholesky failed at every jitter level {steps} (diagonal scale {scale:.3e})"
    )


def cholesky(m, jitter_steps=None) -> np.ndarray:
    """Lower Cholesky factor of ``m``, regularised per the jitter policy."""
    return cholesky_with_jitter(m, jitter_steps)[0]


def rank_cholesky(m, nu: int) -> np.ndarray:
    """Lower-trapezoidal factor of a PSD matrix of known rank.

    Computes ``lam`` of shape ``(P, min(nu, P))`` with strictly positive
    leading diagonal such that ``lam @ lam.T`` reconstructs ``m`` whenever
    ``m`` genuinely has rank ``nu`` with a full-rank leading block.  The
    factorisation is an unpivoted left-looking Cholesky truncated after
    ``nu`` columns; pivoting would permute rows and destroy the
    trapezoidal shape required by the factor parameterisation.

    Raises
    ------
    RankDeficiency
        If a leading-block pivot falls below ``1e-12 * trace(m) / P``.
    """
    m = as_symmetric(m, "m")
    P = m.shape[0]
    if nu < 1:
        raise DomainError(f"nu must be >= 1, got {nu}")
    nt = min(int(nu), P)
    lam = np.zeros((P, nt))
    floor = 1e-12 * float(np.trace(m)) / P
    for j in range(nt):
        pivot = m[j, j] - lam[j, :j] @ lam[j, :j]
        if pivot <= max(floor, 0.0):
            raise RankDeficiency(
                f"pivot {pivot:.3e} at column {j} below threshold {floor:.3e}"
            )
        lam[j, j] = np.sqrt(pivot)
        if j + 1 < P:
            lam[j + 1 :, j] = (m[j + 1 :, j] - lam[j + 1 :, :j] @ lam[j, :j]) / lam[j, j]
    return lam


def tri_solve(L, rhs, transposed: bool = False) -> np.ndarray:
    """Solve ``L @ x = rhs`` (or ``L.T @ x = rhs``) for lower-triangular ``L``.

    Raises
    ------
    Singular
        If any diagonal entry of ``L`` is zero to within 1e-300.
    """
    L = as_matrix(L, "L")
    if L.shape[0] != L.shape[1]:
        raise ShapeMismatch(f"L must be square, got {L.shape}")
    if np.any(np.abs(np.diag(L)) < 1e-300):
        raise Singular("triangular solve with (near-)zero diagonal entry")
    rhs_arr = np.asarray(rhs, dtype=float)
    if rhs_arr.shape[0] != L.shape[0]:
        raise ShapeMismatch(
            f"rhs has {rhs_arr.shape[0]} rows, expected {L.shape[0]}"
        )
    return solve_triangular(L, rhs_arr, lower=True, trans="T" if transposed else "N")


def log_det_triangular(L) -> float:
    """Sum of log diagonal entries of a triangular factor.

    Raises
    ------
    NonPositiveDiagonal
        If any diagonal entry is not strictly positive.
    """
    d = np.diag(as_matrix(L, "L"))
    if np.any(d <= 0.0):
        raise NonPositiveDiagonal("log-determinant requires a strictly positive diagonal")
    return float(np.log(d).sum())


def log_multivariate_gamma(p: int, a: float) -> float:
    """Logarithm of the multivariate gamma function of order ``p`` at ``a``.

    Equals ``p(p-1)/4 * log(pi) + sum_j log Gamma(a + (1 - j)/2)`` for
    ``j = 1..p``, defined for ``a > (p - 1)/2``.
    """
    if p < 1:
        raise DomainError(f"order p must be >= 1, got {p}")
    if a <= (p - 1) / 2.0:
        raise DomainError(f"requires a > (p-1)/2 = {(p - 1) / 2}, got a={a}")
    j = np.arange(1, p + 1)
    return float(p * (p - 1) / 4.0 * np.log(np.pi) + gammaln(a + (1.0 - j) / 2.0).sum())
