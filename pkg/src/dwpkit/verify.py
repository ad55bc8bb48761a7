"""Verification suites.

Runners that compare every analytic log-Jacobian against the
finite-difference oracle, check the density chain identities, and walk
the family reduction ladder.  Each returns :class:`~dwpkit.stats.StatReport`
rows so the command-line interface and the test-suite share one code
path.
"""

from __future__ import annotations

import numpy as np

from . import distributions as dist
from . import jacobians as jac
from .stats import StatReport, gamma_cdf, gamma_mle_fit, gamma_ppf, ks_statistic, noncentral_chi2_cdf

# ---------------------------------------------------------------------------
# Random instance generators (shared with the tests)
# ---------------------------------------------------------------------------


def random_lower(P: int, rng, lo: float = 0.6, hi: float = 1.6) -> np.ndarray:
    """Well-conditioned random lower-triangular matrix, positive diagonal."""
    return np.tril(rng.normal(0.0, 0.3, (P, P)), -1) + np.diag(rng.uniform(lo, hi, P))


def random_invertible(P: int, rng, spread: float = 0.3) -> np.ndarray:
    """Random square matrix close to the identity (hence well conditioned)."""
    return np.eye(P) + rng.normal(0.0, spread, (P, P))


def random_bartlett_params(P: int, nu: int, rng) -> dist.GeneralizedBartlettParams:
    nt = min(P, nu)
    return dist.GeneralizedBartlettParams(
        P=P,
        nu=nu,
        alpha=rng.uniform(0.4, 3.0, nt),
        beta=rng.uniform(0.3, 2.0, nt),
        mu=rng.normal(0.0, 1.0, (P, nt)),
        sigma=rng.uniform(0.5, 1.5, (P, nt)),
    )


def random_trapezoid(P: int, nu: int, rng) -> np.ndarray:
    """Random trapezoid with diagonal bounded away from zero."""
    nt = min(P, nu)
    m = np.zeros((P, nt))
    m[dist.strict_lower_trapezoid_mask(P, nu)] = rng.normal(
        0.0, 0.7, int(dist.strict_lower_trapezoid_mask(P, nu).sum())
    )
    m[np.arange(nt), np.arange(nt)] = rng.uniform(0.5, 1.5, nt)
    return m


def _rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(numeric))


# ---------------------------------------------------------------------------
# Jacobian suite
# ---------------------------------------------------------------------------


def jacobian_suite(
    max_p: int = 5, max_nu: int | None = None, trials: int = 25,
    tolerance: float = 1e-4, seed: int = 0,
) -> list[StatReport]:
    """Compare each analytic log-Jacobian with the finite-difference oracle.

    One report per (formula, shape) pair carrying the worst relative error
    over ``trials`` random points.  ``trials=0`` yields an empty list.
    """
    if trials == 0:
        return []
    rng = np.random.default_rng(seed)
    reports: list[StatReport] = []

    for P in range(1, max_p + 1):
        # squaring a full lower-triangular factor
        trap = jac.trapezoid_chart(P, P)
        sym = jac.symmetric_half_chart(P)
        worst = 0.0
        for _ in range(trials):
            lam = random_trapezoid(P, P, rng)
            num = jac.numeric_logjac(lambda m: m @ m.T, trap.extract(lam), trap, sym)
            worst = max(worst, _rel_err(jac.logjac_chol_square(lam), num))
        reports.append(StatReport(f"jac-square-factor P={P}", worst, tolerance, worst <= tolerance))

        # full-rank congruence: finite differences plus the algebraic collapse
        worst_fd, worst_alg = 0.0, 0.0
        for _ in range(trials):
            A = random_invertible(P, rng)
            C = random_invertible(P, rng)
            C = C @ C.T + P * np.eye(P)
            num = jac.numeric_logjac(lambda m: A @ m @ A.T, sym.extract(C), sym, sym)
            sld = np.linalg.slogdet
            ana = jac.logjac_congruence(A, sld(C)[1], sld(A @ C @ A.T)[1], P, P)
            worst_fd = max(worst_fd, _rel_err(ana, num))
            collapsed = (P + 1) * sld(A)[1]
            nu_big = P + rng.integers(0, 4)
            D = A @ C @ A.T
            ana_big = jac.logjac_congruence(A, sld(C)[1], sld(D)[1], nu_big, P)
            worst_alg = max(worst_alg, abs(ana_big - collapsed))
        reports.append(StatReport(f"jac-congruence-fd P={P}", worst_fd, tolerance, worst_fd <= tolerance))
        reports.append(StatReport(f"jac-congruence-collapse P={P}", worst_alg, 1e-9, worst_alg <= 1e-9))

        for nu in range(1, min(P, max_nu or P) + 1):
            trap = jac.trapezoid_chart(P, nu)
            rank = jac.rank_symmetric_chart(P, nu)
            worst_rect, worst_left, worst_right = 0.0, 0.0, 0.0
            for _ in range(trials):
                lam = random_trapezoid(P, nu, rng)
                num = jac.numeric_logjac(lambda m: m @ m.T, trap.extract(lam), trap, rank)
                worst_rect = max(worst_rect, _rel_err(jac.logjac_chol_rect(lam), num))

                L = random_lower(P, rng)
                T = random_trapezoid(P, nu, rng)
                num = jac.numeric_logjac(lambda m: L @ m, trap.extract(T), trap, trap)
                worst_left = max(worst_left, _rel_err(jac.logjac_left_lower(L, nu), num))

                B = random_lower(min(P, nu), rng)
                num = jac.numeric_logjac(lambda m: m @ B, trap.extract(T), trap, trap)
                worst_right = max(worst_right, _rel_err(jac.logjac_right_lower(B, P), num))
            reports.append(StatReport(
                f"jac-rect-factor P={P} nu={nu}", worst_rect, tolerance, worst_rect <= tolerance))
            reports.append(StatReport(
                f"jac-left-mix P={P} nu={nu}", worst_left, tolerance, worst_left <= tolerance))
            reports.append(StatReport(
                f"jac-right-mix P={P} nu={nu}", worst_right, tolerance, worst_right <= tolerance))
    return reports


# ---------------------------------------------------------------------------
# Chain identity suite
# ---------------------------------------------------------------------------


def _factor_logpdf(T: dist.BartlettFactor, params: dist.GeneralizedBartlettParams) -> float:
    """Log-density of the trapezoidal factor itself (diagonal in T, not T^2)."""
    d = T.diagonal
    low = dist.strict_lower_trapezoid_mask(T.P, T.nu)
    val = T.nu_tilde * np.log(2.0) + float(np.log(d).sum())
    val += float(dist.gamma_logpdf(d * d, params.alpha, params.beta).sum())
    val += float(dist.normal_logpdf(T.matrix[low], params.mu[low], params.sigma[low]).sum())
    return val


def chain_identity_suite(trials: int = 100, tolerance: float = 1e-8, seed: int = 0) -> list[StatReport]:
    """Check that each density equals the factor density minus the Jacobians.

    Three variants: the full row/column-mixed density, the row-mixed
    density (identity column mixer), and the prior-parameter case, which
    must land exactly on the (singular) Wishart density with scale
    ``A A^T``.
    """
    rng = np.random.default_rng(seed)
    worst_ab, worst_a, worst_w = 0.0, 0.0, 0.0
    for _ in range(trials):
        P = int(rng.integers(2, 7))
        nu = int(rng.integers(1, P + 1))
        nt = min(P, nu)
        A = random_invertible(P, rng)
        B = random_lower(nt, rng)
        bp = random_bartlett_params(P, nu, rng)
        T = dist.sample_generalized_bartlett(bp, rng)

        def chain_value(Bmat):
            lam = T.matrix @ Bmat
            C = lam @ lam.T
            F = A @ lam
            G = F @ F.T
            sld = np.linalg.slogdet
            val = _factor_logpdf(T, bp)
            val -= jac.logjac_right_lower(Bmat, P)
            val -= jac.logjac_chol_rect(lam)
            val -= jac.logjac_congruence(A, sld(C[:nt, :nt])[1], sld(G[:nt, :nt])[1], nu, P)
            return val

        ab = dist.ABGWParams(A=A, nu=nu, bartlett=bp, B=B)
        worst_ab = max(worst_ab, abs(dist.log_density_abgw(T, ab) - chain_value(B)))

        a_only = dist.ABGWParams(A=A, nu=nu, bartlett=bp)
        worst_a = max(worst_a, abs(dist.log_density_agw(T, a_only) - chain_value(np.eye(nt))))

        prior = dist.bartlett_prior_params(P, nu)
        Tp = dist.sample_generalized_bartlett(prior, rng)
        G = (A @ Tp.matrix) @ (A @ Tp.matrix).T
        sld = np.linalg.slogdet
        chain_w = (
            _factor_logpdf(Tp, prior)
            - jac.logjac_chol_rect(Tp.matrix)
            - jac.logjac_congruence(
                A,
                sld((Tp.matrix @ Tp.matrix.T)[:nt, :nt])[1],
                sld(G[:nt, :nt])[1],
                nu,
                P,
            )
        )
        worst_w = max(worst_w, abs(dist.log_density_wishart(G, A @ A.T, nu) - chain_w))
    return [
        StatReport("chain-row-column-mixed", worst_ab, tolerance, worst_ab <= tolerance),
        StatReport("chain-row-mixed", worst_a, tolerance, worst_a <= tolerance),
        StatReport("chain-wishart-prior", worst_w, tolerance, worst_w <= tolerance),
    ]


# ---------------------------------------------------------------------------
# Reduction ladder
# ---------------------------------------------------------------------------


def reduction_suite(points: int = 100, max_p: int = 6, seed: int = 0) -> list[StatReport]:
    """Pointwise equality along the family reduction ladder.

    Row/column-mixed with identity mixer equals row-mixed (1e-10);
    row-mixed with lower-triangular ``A`` equals the Cholesky-scaled
    family (1e-10); the Cholesky-scaled family at prior factor parameters
    equals the (singular) Wishart density (1e-8).
    """
    rng = np.random.default_rng(seed)
    worst_ab_a, worst_a_gw, worst_gw_w = 0.0, 0.0, 0.0
    for _ in range(points):
        P = int(rng.integers(1, max_p + 1))
        nu = int(rng.integers(1, P + 1))
        nt = min(P, nu)
        bp = random_bartlett_params(P, nu, rng)
        T = dist.sample_generalized_bartlett(bp, rng)
        A = random_invertible(P, rng)
        L = random_lower(P, rng)

        with_b = dist.ABGWParams(A=A, nu=nu, bartlett=bp, B=np.eye(nt))
        without_b = dist.ABGWParams(A=A, nu=nu, bartlett=bp)
        worst_ab_a = max(
            worst_ab_a,
            abs(dist.log_density_abgw(T, with_b) - dist.log_density_agw(T, without_b)),
        )

        lower_a = dist.ABGWParams(A=L, nu=nu, bartlett=bp)
        gw = dist.GWParams(scale_chol=L, nu=nu, bartlett=bp)
        worst_a_gw = max(
            worst_a_gw,
            abs(dist.log_density_agw(T, lower_a) - dist.log_density_gw(T, gw)),
        )

        prior = dist.bartlett_prior_params(P, nu)
        Tp = dist.sample_generalized_bartlett(prior, rng)
        gw_prior = dist.GWParams(scale_chol=L, nu=nu, bartlett=prior)
        F = L @ Tp.matrix
        worst_gw_w = max(
            worst_gw_w,
            abs(
                dist.log_density_gw(Tp, gw_prior)
                - dist.log_density_wishart(F @ F.T, L @ L.T, nu)
            ),
        )
    return [
        StatReport("reduce-identity-mixer", worst_ab_a, 1e-10, worst_ab_a <= 1e-10),
        StatReport("reduce-lower-row-mix", worst_a_gw, 1e-10, worst_a_gw <= 1e-10),
        StatReport("reduce-prior-to-wishart", worst_gw_w, 1e-8, worst_gw_w <= 1e-8),
    ]


def round_trip_suite(instances: int = 100, max_p: int = 8, rtol: float = 1e-8, seed: int = 0) -> list[StatReport]:
    """Recovering the factor from an assembled Gram matrix is the identity."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        P = int(rng.integers(1, max_p + 1))
        nu = int(rng.integers(1, P + 1))
        nt = min(P, nu)
        bp = random_bartlett_params(P, nu, rng)
        T = dist.sample_generalized_bartlett(bp, rng)
        params = dist.ABGWParams(
            A=random_invertible(P, rng), nu=nu, bartlett=bp, B=random_lower(nt, rng)
        )
        sample = dist.assemble_gram(params, T)
        T_back = dist.recover_T(sample.G, params)
        scale = max(1.0, float(np.abs(T.matrix).max()))
        worst = max(worst, float(np.abs(T_back.matrix - T.matrix).max()) / scale)
    return [StatReport("factor-round-trip", worst, rtol, worst <= rtol)]


# ---------------------------------------------------------------------------
# Probability-plot data
# ---------------------------------------------------------------------------


def probability_plot_data(mu: float, sigma2: float, n: int, rng: np.random.Generator):
    """Quantile pairs and KS reports for the sheared top-left construction.

    Samples the top-left entry of the sheared rank-one outer product,
    fits a Gamma by maximum likelihood, and returns ``(pairs, reports)``
    where ``pairs[:, 0]`` are fitted-Gamma quantiles at the plotting
    positions ``(i - 1/2)/n``, ``pairs[:, 1]`` the sorted samples, and
    ``reports`` holds the KS check against the fitted Gamma (expected to
    fail at the 1% level) followed by the KS check against the exact
    scaled noncentral chi-squared law (expected to pass).
    """
    samples = dist.noncentral_topleft_samples(mu, sigma2, n, rng)
    shape, rate = gamma_mle_fit(samples)
    ordered = np.sort(samples)
    positions = (np.arange(1, n + 1) - 0.5) / n
    pairs = np.column_stack([gamma_ppf(positions, shape, rate), ordered])
    scale = 1.0 + sigma2
    lam = mu * mu / scale
    report_gamma = ks_statistic(
        samples, lambda t: gamma_cdf(t, shape, rate), name="ks-fitted-gamma"
    )
    report_exact = ks_statistic(
        samples,
        lambda t: noncentral_chi2_cdf(np.asarray(t) / scale, 1, lam),
        name="ks-noncentral-chi2",
    )
    return pairs, [report_gamma, report_exact]
