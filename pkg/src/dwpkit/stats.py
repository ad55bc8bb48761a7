"""Statistical test helpers: one-sample Kolmogorov-Smirnov statistics,
Gamma maximum-likelihood fitting, and the noncentral chi-squared CDF."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammainc, gammaincinv, polygamma

from .errors import DomainError, NonConvergence

#: Asymptotic one-sample KS critical factors: statistic threshold is
#: ``factor / sqrt(n)``.
KS_CRITICAL_FACTORS = {0.10: 1.224, 0.05: 1.358, 0.01: 1.628}


@dataclass(frozen=True)
class StatReport:
    """Outcome of one statistical check."""

    name: str
    statistic: float
    critical: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        msg = f"[{tag}] {self.name}: statistic={self.statistic:.6g} critical={self.critical:.6g}"
        if self.detail:
            msg += f" ({self.detail})"
        return msg


def ks_statistic(samples, cdf, level: float = 0.01, name: str = "ks") -> StatReport:
    """One-sample KS statistic against a CDF callable.

    ``passed`` means the statistic is below the asymptotic critical value
    at the requested level.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise DomainError("need at least one sample")
    if level not in KS_CRITICAL_FACTORS:
        raise DomainError(f"unsupported level {level}; choose from {sorted(KS_CRITICAL_FACTORS)}")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    stat = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    crit = KS_CRITICAL_FACTORS[level] / np.sqrt(n)
    return StatReport(name, stat, crit, stat < crit, f"n={n}, level={level:g}")


def gamma_mle_fit(samples, max_iter: int = 100, rtol: float = 1e-12):
    """Maximum-likelihood (shape, rate) of a Gamma distribution.

    Newton iterations on ``log k - digamma(k) = log(mean) - mean(log x)``
    starting from the standard closed-form approximation.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0 or np.any(x <= 0):
        raise DomainError("samples must be positive and non-empty")
    mean = float(x.mean())
    s = float(np.log(mean) - np.log(x).mean())
    if not np.isfinite(s) or s <= 0:
        raise NonConvergence("degenerate sample: log-moment gap is not positive")
    k = (3.0 - s + np.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(max_iter):
        step = (np.log(k) - digamma(k) - s) / (1.0 / k - polygamma(1, k))
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) <= rtol * k:
            return float(k_new), float(k_new / mean)
        k = k_new
    raise NonConvergence(f"gamma MLE did not converge in {max_iter} iterations")


def gamma_cdf(x, shape: float, rate: float):
    """CDF of the Gamma distribution in shape/rate form."""
    return gammainc(shape, rate * np.asarray(x, dtype=float))


def gamma_ppf(p, shape: float, rate: float):
    """Quantile function of the Gamma distribution in shape/rate form."""
    return gammaincinv(shape, np.asarray(p, dtype=float)) / rate


def chi2_cdf(x, k: float):
    """CDF of the central chi-squared distribution."""
    return gammainc(k / 2.0, np.asarray(x, dtype=float) / 2.0)


def noncentral_chi2_cdf(x, k: float, lam: float, rtol: float = 1e-12):
    """CDF of the noncentral chi-squared distribution.

    Evaluated as the Poisson mixture of central chi-squared CDFs,
    truncated once the remaining mixture weight cannot move the result
    by more than ``rtol`` relatively.  Reduces to the central CDF at
    ``lam = 0``.
    """
    x_arr = np.asarray(x, dtype=float)
    if k < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {k}")
    if lam < 0:
        raise DomainError(f"noncentrality must be >= 0, got {lam}")
    if np.any(x_arr < 0):
        raise DomainError("x must be >= 0")
    if lam == 0:
        return gammainc(k / 2.0, x_arr / 2.0)
    half = lam / 2.0
    w = np.exp(-half)
    acc = w * gammainc(k / 2.0, x_arr / 2.0)
    cum_w = w
    j = 0
    while j < 100_000:
        j += 1
        w = w * half / j
        term_cdf = gammainc(k / 2.0 + j, x_arr / 2.0)
        acc = acc + w * term_cdf
        cum_w += w
        # F terms decrease in j, so the truncated tail is at most the
        # remaining Poisson weight times the current central CDF.
        tail_bound = (1.0 - cum_w) * float(np.max(term_cdf))
        if j > half and tail_bound <= rtol * max(float(np.min(acc)), 1e-300):
            break
    return acc if np.ndim(x) else float(acc)
