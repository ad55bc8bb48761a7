"""Deep Wishart process building blocks.

A depth-``L`` process alternates between a squared-exponential kernel
applied to the previous Gram matrix and a Wishart draw centred on that
kernel; a GP layer with Gaussian observation noise sits on top.  This
module holds the deterministic pieces: kernels computed from Gram
matrices or raw inputs, the per-layer prior log-density, conditional
Gaussian feature sampling, and the output likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import GramSample, log_density_wishart
from .errors import DomainError, ShapeMismatch
from .linalg import as_matrix, as_symmetric, cholesky_with_jitter, tri_solve

#: Relative threshold below which a conditional (Schur) covariance is
#: treated as exactly degenerate and the draw collapses to its mean.
#: Sits above eps * cond(S_ii), the round-off floor of the Schur
#: complement when the conditioned rows duplicate the inducing rows.
DEGENERATE_SCHUR_RTOL = 1e-8


@dataclass(frozen=True)
class KernelConfig:
    """Squared-exponential kernel hyperparameters.

    ``lengthscales`` has one entry for a shared scale or one entry per
    input feature for automatic relevance determination (first layer
    only).
    """

    variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if self.variance <= 0 or np.any(ls <= 0):
            raise DomainError("kernel variance and lengthscales must be positive")
        object.__setattr__(self, "lengthscales", ls)


@dataclass(frozen=True)
class DWPConfig:
    """Architecture of a deep Wishart process.

    ``depth`` counts hidden Gram layers; zero is allowed and yields a
    plain sparse GP.  ``kernels`` has ``depth + 1`` entries: the first
    applies to the raw inputs (and may use per-feature lengthscales),
    the rest to the Gram matrix of the preceding layer.
    """

    depth: int
    widths: tuple
    inducing_count: int
    kernels: tuple
    noise_variance: float

    def __post_init__(self):
        if self.depth < 0:
            raise DomainError("depth must be >= 0")
        widths = tuple(int(w) for w in self.widths)
        if len(widths) != self.depth or any(w < 1 for w in widths):
            raise DomainError(f"widths must be {self.depth} positive counts")
        if self.inducing_count < 1:
            raise DomainError("inducing_count must be >= 1")
        kernels = tuple(self.kernels)
        if len(kernels) != self.depth + 1:
            raise DomainError(f"need {self.depth + 1} kernel configs, got {len(kernels)}")
        if self.noise_variance <= 0:
            raise DomainError("noise_variance must be positive")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "kernels", kernels)


def default_config(
    depth: int,
    n_features: int,
    inducing_count: int,
    widths=None,
    noise_variance: float = 0.1,
) -> DWPConfig:
    """Config with unit kernels and widths defaulting to the feature count."""
    if widths is None:
        widths = (n_features,) * depth
    kernels = [KernelConfig(1.0, np.ones(n_features))]
    kernels += [KernelConfig(1.0, np.ones(1)) for _ in range(depth)]
    return DWPConfig(depth, tuple(widths), inducing_count, tuple(kernels), noise_variance)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def sqdist_from_gram(G) -> np.ndarray:
    """Mean squared distances implied by a Gram matrix.

    ``R_ij = G_ii - 2 G_ij + G_jj``; the result is symmetric with an
    exactly zero diagonal, and negative round-off is clamped to zero
    since the value is a squared distance analytically.
    """
    G = as_symmetric(G, "G")
    d = np.diag(G)
    R = d[:, None] + d[None, :] - 2.0 * G
    R = np.maximum(R, 0.0)
    np.fill_diagonal(R, 0.0)
    return R


def kernel_from_gram(G, cfg: KernelConfig) -> np.ndarray:
    """Squared-exponential kernel applied to a Gram matrix.

    ``K_ij = variance * exp(-R_ij / (2 lengthscale^2))`` with ``R`` from
    :func:`sqdist_from_gram`; requires a single shared lengthscale.
    """
    if cfg.lengthscales.shape != (1,):
        raise ShapeMismatch("kernel_from_gram expects a single shared lengthscale")
    R = sqdist_from_gram(G)
    return cfg.variance * np.exp(-R / (2.0 * cfg.lengthscales[0] ** 2))


def kernel_ard_inputs(X, cfg: KernelConfig) -> np.ndarray:
    """Squared-exponential kernel on raw inputs with per-feature scales."""
    X = as_matrix(X, "X")
    if cfg.lengthscales.shape != (X.shape[1],):
        raise ShapeMismatch(
            f"need {X.shape[1]} lengthscales for {X.shape[1]} features, "
            f"got {cfg.lengthscales.shape[0]}"
        )
    Z = X / cfg.lengthscales
    sq = (Z * Z).sum(axis=1)
    R = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T), 0.0)
    np.fill_diagonal(R, 0.0)
    return cfg.variance * np.exp(-R / 2.0)


# ---------------------------------------------------------------------------
# Layer prior and conditionals
# ---------------------------------------------------------------------------


def layer_prior_logpdf(
    sample: GramSample, G_prev, nu: int, cfg: KernelConfig, jitter_steps=None
) -> float:
    """Log-density of a Gram draw under its layer prior.

    The prior is a Wishart with scale ``K(G_prev) / nu`` and ``nu``
    degrees of freedom, so the expected Gram matrix equals the kernel.
    """
    K = kernel_from_gram(G_prev, cfg)
    return log_density_wishart(sample.G, K / nu, nu, jitter_steps)


def conditional_feature_sample(
    S, n_inducing: int, F_i, rng: np.random.Generator, noise=None, jitter_steps=None
) -> np.ndarray:
    """Draw the non-inducing feature rows given the inducing rows.

    ``S`` is the joint row covariance over inducing-then-test points and
    ``F_i`` the inducing feature block; columns are independent.  Returns
    ``F_t = M + chol(S_tt.i) @ E`` with conditional mean
    ``M = S_it^T S_ii^-1 F_i`` and Schur complement
    ``S_tt.i = S_tt - S_it^T S_ii^-1 S_it``.  ``noise`` substitutes the
    standard-normal draw ``E`` when given (zeros give the conditional
    mean exactly); a Schur complement that vanishes relative to the
    ``S_tt`` diagonal collapses the draw to its mean.
    """
    S = as_symmetric(S, "S")
    F_i = as_matrix(np.atleast_2d(F_i), "F_i")
    n = S.shape[0]
    if not 0 < n_inducing <= n:
        raise ShapeMismatch(f"n_inducing={n_inducing} out of range for S of dim {n}")
    if F_i.shape[0] != n_inducing:
        raise ShapeMismatch("F_i must have one row per inducing point")
    n_t = n - n_inducing
    if n_t == 0:
        return np.zeros((0, F_i.shape[1]))
    S_ii = S[:n_inducing, :n_inducing]
    S_it = S[:n_inducing, n_inducing:]
    S_tt = S[n_inducing:, n_inducing:]
    L_ii, _ = cholesky_with_jitter(S_ii, jitter_steps)
    V = tri_solve(L_ii, S_it)
    M = V.T @ tri_solve(L_ii, F_i)
    schur = S_tt - V.T @ V
    schur = (schur + schur.T) / 2.0
    scale = max(float(np.abs(np.diag(S_tt)).max()), 1e-300)
    if float(np.abs(schur).max()) <= DEGENERATE_SCHUR_RTOL * scale:
        return M
    L_s, _ = cholesky_with_jitter(schur, jitter_steps)
    E = rng.standard_normal((n_t, F_i.shape[1])) if noise is None else np.asarray(noise, float)
    if E.shape != (n_t, F_i.shape[1]):
        raise ShapeMismatch(f"noise must have shape ({n_t}, {F_i.shape[1]})")
    return M + L_s @ E


def gp_output_loglik(F_out, Y, noise: float) -> float:
    """Gaussian observation log-likelihood summed over rows and outputs."""
    F_out = as_matrix(np.atleast_2d(F_out), "F_out")
    Y = as_matrix(np.atleast_2d(Y), "Y")
    if F_out.shape != Y.shape:
        raise ShapeMismatch(f"F_out {F_out.shape} and Y {Y.shape} differ")
    if noise <= 0:
        raise DomainError("noise variance must be positive")
    resid = Y - F_out
    n = Y.size
    return float(-0.5 * n * np.log(2.0 * np.pi * noise) - (resid * resid).sum() / (2.0 * noise))
