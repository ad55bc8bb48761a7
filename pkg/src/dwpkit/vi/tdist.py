"""Torch counterparts of the kernel, sampling, and density formulas.

These mirror :mod:`dwpkit.distributions` and :mod:`dwpkit.model` inside
the autodiff graph used for ELBO gradients; the test-suite pins each one
to its numpy reference at random evaluation points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import FactorizationFailure

DTYPE = torch.float64

#: Jitter multipliers for covariance factorisations inside the graph
#: (scaled by the mean diagonal; the smallest level that succeeds wins).
COV_JITTER_STEPS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)

#: Gentler escalation for the leading block of a sampled Gram matrix,
#: which is positive definite almost surely but can lose definiteness to
#: round-off for extreme draws.  Shared between the prior and posterior
#: terms, so any jitter here cancels from their difference.
GRAM_JITTER_STEPS = (0.0, 1e-14, 1e-12, 1e-10)

_LOG_2PI = math.log(2.0 * math.pi)


def chol_jittered(m: torch.Tensor, steps=COV_JITTER_STEPS, what: str = "matrix") -> torch.Tensor:
    mean_diag = m.diagonal().mean()
    scale = mean_diag if float(mean_diag.detach()) > 0 else torch.tensor(1.0, dtype=m.dtype)
    eye = torch.eye(m.shape[0], dtype=m.dtype)
    for step in steps:
        L, info = torch.linalg.cholesky_ex(m + step * scale * eye)
        if int(info) == 0 and not bool(torch.isnan(L).any()):
            return L
    raise FactorizationFailure(f"{what}: cholesky failed at every jitter level {steps}")


def tsolve(L: torch.Tensor, b: torch.Tensor, transposed: bool = False) -> torch.Tensor:
    if transposed:
        return torch.linalg.solve_triangular(L.mT, b, upper=True)
    return torch.linalg.solve_triangular(L, b, upper=False)


def gamma_logpdf(x, shape, rate):
    return shape * torch.log(rate) - torch.lgamma(shape) + (shape - 1.0) * torch.log(x) - rate * x


def normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * _LOG_2PI - torch.log(sd) - 0.5 * z * z


@dataclass(frozen=True)
class TrapezoidIdx:
    """Precomputed index tensors and exponents for one factor shape."""

    P: int
    nu: int
    nt: int
    rows: torch.Tensor
    cols: torch.Tensor
    diag: torch.Tensor
    p_minus_j: torch.Tensor      # P - j          for j = 1..nt
    p_minus_j_p1: torch.Tensor   # P - j + 1      for j = 1..nt
    min_i_nu: torch.Tensor       # min(i, nu)     for i = 1..P


def make_trapezoid_idx(P: int, nu: int) -> TrapezoidIdx:
    nt = min(nu, P)
    rows_np, cols_np = np.nonzero(np.tril(np.ones((P, nt)), -1))
    j = torch.arange(1, nt + 1, dtype=DTYPE)
    i = torch.arange(1, P + 1, dtype=DTYPE)
    return TrapezoidIdx(
        P=P,
        nu=nu,
        nt=nt,
        rows=torch.from_numpy(rows_np),
        cols=torch.from_numpy(cols_np),
        diag=torch.arange(nt),
        p_minus_j=P - j,
        p_minus_j_p1=P - j + 1,
        min_i_nu=torch.minimum(i, torch.tensor(float(nu), dtype=DTYPE)),
    )


def sample_trapezoid_factor(
    idx: TrapezoidIdx,
    alpha: torch.Tensor,
    beta: torch.Tensor,
    mu: torch.Tensor,
    sigma: torch.Tensor,
    gamma_gen: torch.Generator,
    normal_gen: torch.Generator,
    deterministic: bool = False,
) -> torch.Tensor:
    """Reparameterised draw of the trapezoidal factor.

    The squared diagonal comes from a pathwise-differentiable standard
    Gamma draw scaled by the rate; the strictly-lower entries are
    location-scale Gaussians.  Gamma draws consume their own generator so
    that a change in ``alpha`` cannot shift the Gaussian stream.  In
    deterministic mode the diagonal sits at its mean and the Gaussian
    noise at zero.
    """
    if deterministic:
        sq = alpha / beta
        eps = torch.zeros(idx.rows.shape[0], dtype=DTYPE)
    else:
        sq = torch._standard_gamma(alpha, generator=gamma_gen) / beta
        eps = torch.randn(idx.rows.shape[0], dtype=DTYPE, generator=normal_gen)
    T = torch.zeros(idx.P, idx.nt, dtype=DTYPE)
    T = T.index_put((idx.diag, idx.diag), torch.sqrt(sq))
    return T.index_put((idx.rows, idx.cols), mu + sigma * eps)


def _common_factor_terms(T, idx: TrapezoidIdx, alpha, beta, mu, sigma):
    d = T.diagonal()
    val = gamma_logpdf(d * d, alpha, beta).sum()
    val = val - (idx.p_minus_j * torch.log(d)).sum()
    return val + normal_logpdf(T[idx.rows, idx.cols], mu, sigma).sum()


def gw_logpdf(T, idx: TrapezoidIdx, L, alpha, beta, mu, sigma):
    """Cholesky-scaled family log-density at the factor ``T``."""
    ld = L.diagonal()
    val = -(idx.min_i_nu * torch.log(ld)).sum()
    val = val - (idx.p_minus_j_p1 * torch.log(ld[: idx.nt])).sum()
    return val + _common_factor_terms(T, idx, alpha, beta, mu, sigma)


def mixed_logpdf(T, idx: TrapezoidIdx, a_logabsdet, logdet_g_lead, alpha, beta, mu, sigma,
                 b_diag=None):
    """Row-mixed (``b_diag is None``) or row/column-mixed log-density.

    ``logdet_g_lead`` is the log-determinant of the leading block of the
    assembled Gram matrix; passing it in lets the caller share the value
    with the prior term so that it cancels exactly from their difference.
    """
    d = T.diagonal()
    lam_diag = d if b_diag is None else d * b_diag
    logdet_c_lead = 2.0 * torch.log(lam_diag).sum()
    val = (idx.nu - idx.P - 1) / 2.0 * (logdet_g_lead - logdet_c_lead)
    val = val - idx.nu * a_logabsdet
    if b_diag is not None:
        val = val - (2.0 * idx.p_minus_j_p1 * torch.log(b_diag)).sum()
    return val + _common_factor_terms(T, idx, alpha, beta, mu, sigma)


def wishart_logpdf_factor(F, idx: TrapezoidIdx, L_scale, logdet_g_lead):
    """Wishart log-density of ``G = F F^T`` given the scale Cholesky."""
    nu, P, nt = idx.nu, idx.P, idx.nt
    logdet_scale = 2.0 * torch.log(L_scale.diagonal()).sum()
    half = tsolve(L_scale, F)
    trace = (half * half).sum()
    const = (
        nu * (nt - P) / 2.0 * math.log(math.pi)
        - nu * P / 2.0 * math.log(2.0)
        - float(torch.special.multigammaln(torch.tensor(nu / 2.0, dtype=DTYPE), nt))
    )
    return const - nu / 2.0 * logdet_scale + (nu - P - 1) / 2.0 * logdet_g_lead - trace / 2.0


def gaussian_cols_logpdf(x, mean, L):
    """Sum over columns of the Gaussian log-density with covariance ``L L^T``."""
    z = tsolve(L, x - mean)
    n_cols = x.shape[1]
    p = x.shape[0]
    return (
        -0.5 * n_cols * p * _LOG_2PI
        - n_cols * torch.log(L.diagonal()).sum()
        - 0.5 * (z * z).sum()
    )


def unpack_lower(raw: torch.Tensor, n: int) -> torch.Tensor:
    """Lower-triangular matrix from raw storage (softplus on the diagonal)."""
    diag = torch.nn.functional.softplus(raw[:n])
    m = torch.zeros(n, n, dtype=raw.dtype)
    m = m.index_put((torch.arange(n), torch.arange(n)), diag)
    if n > 1:
        rows, cols = np.tril_indices(n, -1)
        m = m.index_put((torch.from_numpy(rows), torch.from_numpy(cols)), raw[n:])
    return m


def _zero_diagonal(R: torch.Tensor) -> torch.Tensor:
    return R - torch.diag_embed(R.diagonal())


def kernel_ard(X, lengthscales, variance):
    """Squared-exponential kernel on raw inputs with per-feature scales."""
    Z = X / lengthscales
    sq = (Z * Z).sum(dim=1)
    R = torch.clamp(sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.mT), min=0.0)
    return variance * torch.exp(-_zero_diagonal(R) / 2.0)


def kernel_gram(G, lengthscale, variance):
    """Squared-exponential kernel on a Gram matrix with a shared scale."""
    d = G.diagonal()
    R = torch.clamp(d[:, None] + d[None, :] - 2.0 * G, min=0.0)
    return variance * torch.exp(-_zero_diagonal(R) / (2.0 * lengthscale * lengthscale))
