"""Samplers and exact log-densities for mixed singular Wishart families.

All families here are parameterised through a lower-trapezoidal factor
``T`` whose squared diagonal entries are Gamma distributed (``beta`` is a
*rate*: shape ``k/2`` with rate ``1/2`` recovers a chi-squared diagonal)
and whose strictly-lower entries are Gaussian.  A PSD random matrix is
then assembled as ``G = (A T B)(A T B)^T`` for a square mixing matrix
``A`` and a lower-triangular column mixer ``B``; the classical Wishart,
its Cholesky-scaled generalisation and the row-mixed family are the
special cases ``A = chol(scale), B = I`` with prior factor parameters,
``A`` lower triangular, and ``B = I`` respectively.

Densities are evaluated as functions of the factor ``T`` (with ``G``
derived); :func:`recover_T` inverts the assembly for externally supplied
Gram matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, ShapeMismatch, Singular, SupportError
from .linalg import (
    as_lower_triangular,
    as_matrix,
    as_symmetric,
    cholesky_with_jitter,
    log_multivariate_gamma,
    rank_cholesky,
    tri_solve,
)

# ---------------------------------------------------------------------------
# Index helpers
# ---------------------------------------------------------------------------


def trapezoid_mask(P: int, nu: int) -> np.ndarray:
    """Boolean mask of the stored entries of a ``(P, min(nu, P))`` factor."""
    nt = min(nu, P)
    rows = np.arange(P)[:, None]
    cols = np.arange(nt)[None, :]
    return rows >= cols


def strict_lower_trapezoid_mask(P: int, nu: int) -> np.ndarray:
    """Boolean mask of the strictly-lower entries of the trapezoid."""
    nt = min(nu, P)
    rows = np.arange(P)[:, None]
    cols = np.arange(nt)[None, :]
    return rows > cols


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BartlettFactor:
    """Lower-trapezoidal noise factor.

    ``matrix`` has shape ``(P, min(nu, P))`` with exact zeros above the
    diagonal.  Positivity of the diagonal is a support condition checked
    by the density functions, not by the container.
    """

    matrix: np.ndarray
    nu: int

    def __post_init__(self):
        m = as_matrix(self.matrix, "T")
        if self.nu < 1:
            raise DomainError(f"nu must be >= 1, got {self.nu}")
        nt = min(int(self.nu), m.shape[0])
        if m.shape[1] != nt:
            raise ShapeMismatch(
                f"T must have min(nu, P) = {nt} columns, got {m.shape[1]}"
            )
        if np.any(m[~trapezoid_mask(m.shape[0], self.nu)] != 0.0):
            raise ValueError("entries above the diagonal must be exactly zero")
        object.__setattr__(self, "matrix", m)

    @property
    def P(self) -> int:
        return self.matrix.shape[0]

    @property
    def nu_tilde(self) -> int:
        return self.matrix.shape[1]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)


@dataclass(frozen=True)
class GeneralizedBartlettParams:
    """Entrywise distribution parameters for a trapezoidal factor.

    ``alpha``/``beta`` are Gamma shape/rate pairs for the squared diagonal
    (length ``min(nu, P)``).  ``mu``/``sigma`` are Gaussian means and
    standard deviations for the strictly-lower trapezoid, stored as dense
    ``(P, min(nu, P))`` arrays whose entries outside that index set are
    ignored.
    """

    P: int
    nu: int
    alpha: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.P < 1 or self.nu < 1:
            raise DomainError(f"P and nu must be >= 1, got P={self.P}, nu={self.nu}")
        nt = self.nu_tilde
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        mu = as_matrix(self.mu, "mu")
        sigma = as_matrix(self.sigma, "sigma")
        if alpha.shape != (nt,) or beta.shape != (nt,):
            raise ShapeMismatch(f"alpha/beta must have shape ({nt},)")
        if mu.shape != (self.P, nt) or sigma.shape != (self.P, nt):
            raise ShapeMismatch(f"mu/sigma must have shape ({self.P}, {nt})")
        if np.any(alpha <= 0) or np.any(beta <= 0):
            raise DomainError("alpha and beta must be strictly positive")
        low = strict_lower_trapezoid_mask(self.P, self.nu)
        if np.any(sigma[low] <= 0):
            raise DomainError("sigma must be strictly positive on the lower trapezoid")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def nu_tilde(self) -> int:
        return min(self.nu, self.P)


@dataclass(frozen=True)
class GWParams:
    """Cholesky-scaled factor family: ``G = (L T)(L T)^T``."""

    scale_chol: np.ndarray
    nu: int
    bartlett: GeneralizedBartlettParams

    def __post_init__(self):
        L = as_lower_triangular(self.scale_chol, "scale_chol", positive_diagonal=True)
        if (self.bartlett.P, self.bartlett.nu) != (L.shape[0], self.nu):
            raise ShapeMismatch("bartlett parameters do not match (P, nu)")
        object.__setattr__(self, "scale_chol", L)

    @property
    def P(self) -> int:
        return self.scale_chol.shape[0]


@dataclass(frozen=True)
class ABGWParams:
    """Row/column-mixed factor family: ``G = (A T B)(A T B)^T``.

    ``B`` may be ``None``, meaning the identity: that special case is the
    row-mixed family on its own.
    """

    A: np.ndarray
    nu: int
    bartlett: GeneralizedBartlettParams
    B: np.ndarray | None = field(default=None)

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise ShapeMismatch(f"A must be square, got {A.shape}")
        sign, logdet = np.linalg.slogdet(A)
        if sign == 0 or not np.isfinite(logdet):
            raise Singular("A must be invertible")
        nt = min(self.nu, A.shape[0])
        if self.B is not None:
            B = as_lower_triangular(self.B, "B", positive_diagonal=True)
            if B.shape != (nt, nt):
                raise ShapeMismatch(f"B must have shape ({nt}, {nt}), got {B.shape}")
            object.__setattr__(self, "B", B)
        if (self.bartlett.P, self.bartlett.nu) != (A.shape[0], self.nu):
            raise ShapeMismatch("bartlett parameters do not match (P, nu)")
        object.__setattr__(self, "A", A)

    @property
    def P(self) -> int:
        return self.A.shape[0]

    @property
    def nu_tilde(self) -> int:
        return min(self.nu, self.P)

    def b_matrix(self) -> np.ndarray:
        """The column mixer as a concrete matrix (identity when ``B is None``)."""
        return np.eye(self.nu_tilde) if self.B is None else self.B


@dataclass(frozen=True)
class GramSample:
    """A PSD draw together with the factor noise that generated it."""

    G: np.ndarray
    T: BartlettFactor


# ---------------------------------------------------------------------------
# Scalar densities
# ---------------------------------------------------------------------------


def gamma_logpdf(x, shape, rate):
    """Log-density of the Gamma distribution in shape/rate form."""
    x = np.asarray(x, dtype=float)
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def normal_logpdf(x, mean, sd):
    """Log-density of the Gaussian distribution."""
    x = np.asarray(x, dtype=float)
    z = (x - mean) / sd
    return -0.5 * np.log(2.0 * np.pi) - np.log(sd) - 0.5 * z * z


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def bartlett_prior_params(P: int, nu: int) -> GeneralizedBartlettParams:
    """Factor parameters that make ``T T^T`` a standard Wishart draw.

    The squared diagonal entries get shapes ``(nu - j + 1)/2`` with rate
    ``1/2`` (chi-squared with decreasing degrees of freedom) and the
    strictly-lower entries are standard normal.
    """
    if P < 1 or nu < 1:
        raise DomainError(f"P and nu must be >= 1, got P={P}, nu={nu}")
    nt = min(nu, P)
    j = np.arange(1, nt + 1)
    return GeneralizedBartlettParams(
        P=P,
        nu=nu,
        alpha=(nu - j + 1) / 2.0,
        beta=np.full(nt, 0.5),
        mu=np.zeros((P, nt)),
        sigma=np.ones((P, nt)),
    )


def sample_generalized_bartlett(
    params: GeneralizedBartlettParams, rng: np.random.Generator
) -> BartlettFactor:
    """Draw a trapezoidal factor: sqrt-Gamma diagonal, Gaussian lower part.

    The draw is a deterministic function of the generator state: the
    diagonal is consumed first, then the strictly-lower entries in
    row-major order.
    """
    P, nt = params.P, params.nu_tilde
    T = np.zeros((P, nt))
    g = rng.gamma(shape=params.alpha, scale=1.0 / params.beta)
    T[np.arange(nt), np.arange(nt)] = np.sqrt(g)
    low = strict_lower_trapezoid_mask(P, params.nu)
    T[low] = rng.normal(params.mu[low], params.sigma[low])
    return BartlettFactor(matrix=T, nu=params.nu)


def assemble_gram(params: ABGWParams, T: BartlettFactor) -> GramSample:
    """Assemble ``G = (A T B)(A T B)^T`` from a factor draw."""
    if (T.P, T.nu_tilde) != (params.P, params.nu_tilde):
        raise ShapeMismatch(
            f"factor shape {(T.P, T.nu_tilde)} does not match params "
            f"{(params.P, params.nu_tilde)}"
        )
    F = T.matrix if params.B is None else T.matrix @ params.B
    F = params.A @ F
    G = F @ F.T
    return GramSample(G=(G + G.T) / 2.0, T=T)


def recover_T(G, params: ABGWParams) -> BartlettFactor:
    """Invert :func:`assemble_gram` for a Gram matrix in the support.

    Computes ``C = A^-1 G A^-T``, factors ``C = lam @ lam.T`` through the
    rank-truncated Cholesky, and strips the column mixer from the right.
    """
    G = as_symmetric(G, "G")
    if G.shape[0] != params.P:
        raise ShapeMismatch(f"G has dim {G.shape[0]}, params have P={params.P}")
    try:
        Y = np.linalg.solve(params.A, G)
        C = np.linalg.solve(params.A, Y.T).T
    except np.linalg.LinAlgError as exc:
        raise Singular("A is numerically singular") from exc
    C = (C + C.T) / 2.0
    lam = rank_cholesky(C, params.nu_tilde)
    if params.B is None:
        Tm = lam
    else:
        Tm = tri_solve(params.B, lam.T, transposed=True).T
        Tm[~trapezoid_mask(params.P, params.nu)] = 0.0
    return BartlettFactor(matrix=Tm, nu=params.nu)


def sample_gw(params: GWParams, rng: np.random.Generator) -> GramSample:
    """Draw ``G = (L T)(L T)^T`` with ``T`` from the factor distribution."""
    T = sample_generalized_bartlett(params.bartlett, rng)
    F = params.scale_chol @ T.matrix
    G = F @ F.T
    return GramSample(G=(G + G.T) / 2.0, T=T)


def sample_wishart(scale, nu: int, rng: np.random.Generator) -> GramSample:
    """Draw from the (possibly singular) Wishart with the given scale."""
    scale = as_symmetric(scale, "scale")
    L, _ = cholesky_with_jitter(scale, jitter_steps=(0.0,))
    return sample_gw(GWParams(L, nu, bartlett_prior_params(scale.shape[0], nu)), rng)


# ---------------------------------------------------------------------------
# Log-densities
# ---------------------------------------------------------------------------


def _logdet_psd_block(M, what: str) -> float:
    try:
        return 2.0 * float(np.log(np.diag(np.linalg.cholesky(M))).sum())
    except np.linalg.LinAlgError as exc:
        raise SupportError(f"{what} is not positive definite") from exc


def log_density_wishart(G, scale, nu: int, jitter_steps=None) -> float:
    """Log-density of the (singular) Wishart distribution at ``G``.

    Valid for integer ``nu`` both above and below the dimension ``P``;
    in the singular case the density lives on the rank-``nu`` manifold
    charted by the first ``nu`` columns of the lower triangle, and only
    the leading ``nu x nu`` block of ``G`` enters through its determinant.
    All determinants are evaluated in log space via Cholesky factors.
    """
    G = as_symmetric(G, "G")
    scale = as_symmetric(scale, "scale")
    P = G.shape[0]
    if scale.shape[0] != P:
        raise ShapeMismatch("G and scale must have equal dimension")
    if nu < 1:
        raise DomainError(f"nu must be >= 1, got {nu}")
    nt = min(nu, P)
    L, _ = cholesky_with_jitter(scale, jitter_steps)
    logdet_scale = 2.0 * float(np.log(np.diag(L)).sum())
    logdet_g_lead = _logdet_psd_block(G[:nt, :nt], "leading block of G")
    half_solve = tri_solve(L, G)
    trace = float(np.trace(tri_solve(L, half_solve.T)))
    return (
        nu * (nt - P) / 2.0 * np.log(np.pi)
        - nu * P / 2.0 * np.log(2.0)
        - nu / 2.0 * logdet_scale
        - log_multivariate_gamma(nt, nu / 2.0)
        + (nu - P - 1) / 2.0 * logdet_g_lead
        - 0.5 * trace
    )


def _check_support(T: BartlettFactor) -> np.ndarray:
    d = T.diagonal
    if np.any(d <= 0.0):
        raise SupportError("factor diagonal must be strictly positive")
    return d


def _lower_term(T: BartlettFactor, params: GeneralizedBartlettParams) -> float:
    low = strict_lower_trapezoid_mask(T.P, T.nu)
    return float(normal_logpdf(T.matrix[low], params.mu[low], params.sigma[low]).sum())


def log_density_gw(T: BartlettFactor, params: GWParams) -> float:
    """Log-density of the Cholesky-scaled family, evaluated at the factor.

    This is the density of ``G = (L T)(L T)^T`` with respect to the
    rank-manifold chart, written in terms of ``T`` and the diagonal of
    ``L`` only.
    """
    if (T.P, T.nu) != (params.P, params.nu):
        raise ShapeMismatch("factor shape does not match params")
    d = _check_support(T)
    L_diag = np.diag(params.scale_chol)
    P, nt = T.P, T.nu_tilde
    j = np.arange(1, nt + 1)
    val = -float((np.minimum(np.arange(1, P + 1), params.nu) * np.log(L_diag)).sum())
    val += float(gamma_logpdf(d * d, params.bartlett.alpha, params.bartlett.beta).sum())
    val -= float(((P - j) * np.log(d)).sum())
    val -= float(((P - j + 1) * np.log(L_diag[:nt])).sum())
    return val + _lower_term(T, params.bartlett)


def _mixed_density_terms(T: BartlettFactor, params: ABGWParams, lam: np.ndarray):
    """Shared pieces of the row-mixed and row/column-mixed densities."""
    d = _check_support(T)
    P, nt, nu = T.P, T.nu_tilde, params.nu
    F = params.A @ lam
    G = F @ F.T
    logdet_g_lead = _logdet_psd_block(G[:nt, :nt], "leading block of G")
    logdet_c_lead = 2.0 * float(np.log(np.diag(lam)[:nt]).sum())
    sign, logdet_a = np.linalg.slogdet(params.A)
    if sign == 0 or not np.isfinite(logdet_a):
        raise Singular("A is numerically singular")
    j = np.arange(1, nt + 1)
    val = (nu - P - 1) / 2.0 * (logdet_g_lead - logdet_c_lead) - nu * logdet_a
    val += float(gamma_logpdf(d * d, params.bartlett.alpha, params.bartlett.beta).sum())
    val -= float(((P - j) * np.log(d)).sum())
    return val + _lower_term(T, params.bartlett)


def log_density_agw(T: BartlettFactor, params: ABGWParams) -> float:
    """Log-density of the row-mixed family ``G = (A T)(A T)^T``.

    ``params.B`` must be absent (or the identity); the column mixer does
    not participate in this family.
    """
    if params.B is not None and np.any(params.B != np.eye(params.nu_tilde)):
        raise ValueError("row-mixed density requires B to be the identity")
    if (T.P, T.nu) != (params.P, params.nu):
        raise ShapeMismatch("factor shape does not match params")
    return _mixed_density_terms(T, params, T.matrix)


def log_density_abgw(T: BartlettFactor, params: ABGWParams) -> float:
    """Log-density of the row/column-mixed family ``G = (A T B)(A T B)^T``."""
    if (T.P, T.nu) != (params.P, params.nu):
        raise ShapeMismatch("factor shape does not match params")
    B = params.b_matrix()
    lam = T.matrix @ B
    val = _mixed_density_terms(T, params, lam)
    P, nt = T.P, T.nu_tilde
    j = np.arange(1, nt + 1)
    val -= float((2.0 * (P - j + 1) * np.log(np.diag(B))).sum())
    return val


# ---------------------------------------------------------------------------
# Monte-Carlo checks
# ---------------------------------------------------------------------------


def wishart_mean_check(scale, nu: int, n_samples: int, rng: np.random.Generator) -> float:
    """Largest elementwise z-score of the sample mean against ``nu * scale``.

    Draws ``n_samples`` standard-construction Wishart matrices and
    compares the elementwise sample mean with its known expectation,
    normalised by the empirical standard error.
    """
    scale = as_symmetric(scale, "scale")
    if n_samples < 2:
        raise DomainError("need at least two samples for a standard error")
    P = scale.shape[0]
    L, _ = cholesky_with_jitter(scale, jitter_steps=(0.0,))
    prior = bartlett_prior_params(P, nu)
    acc = np.zeros((P, P))
    acc_sq = np.zeros((P, P))
    for _ in range(n_samples):
        T = sample_generalized_bartlett(prior, rng)
        F = L @ T.matrix
        G = F @ F.T
        acc += G
        acc_sq += G * G
    mean = acc / n_samples
    var = np.maximum(acc_sq / n_samples - mean * mean, 0.0)
    se = np.sqrt(var / n_samples)
    z = np.abs(mean - nu * scale) / np.maximum(se, 1e-300)
    return float(z.max())


def noncentral_topleft_samples(
    mu: float, sigma2: float, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Top-left entries of a sheared rank-one outer product.

    Mixes a two-entry column ``(g, x)`` with the unit upper shear
    ``[[1, 1], [0, 1]]`` and returns the ``(1, 1)`` entry of the outer
    product, i.e. ``(g + x)^2`` with ``g ~ N(0, 1)`` and
    ``x ~ N(mu, sigma2)`` independent.  The first coordinate is a full
    (sign-carrying) Gaussian here, so the law is a scaled noncentral
    chi-squared: ``(1 + sigma2) * chi2_nc(1, mu^2 / (1 + sigma2))``.
    """
    if sigma2 <= 0:
        raise DomainError("sigma2 must be strictly positive")
    g = rng.normal(0.0, 1.0, n_samples)
    x = rng.normal(mu, np.sqrt(sigma2), n_samples)
    shear = np.array([[1.0, 1.0], [0.0, 1.0]])
    cols = shear @ np.stack([g, x])
    return cols[0] ** 2
