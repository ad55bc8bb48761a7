"""Reparameterised ELBO estimation, optimisation, and prediction.

One Monte-Carlo evaluation follows the generative pass layer by layer:
form the kernel of the previous Gram matrix, draw the inducing-block
factor from the posterior family, accumulate the prior/posterior
log-density difference, propagate the remaining rows through the
conditional Gaussian, and finish with the GP output layer and the
observation likelihood.  Gradients come from autodiff on that graph; a
common-random-numbers finite-difference fallback is kept as the
verification oracle for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.special import logsumexp

from ..data import Dataset, Normalization
from ..errors import DomainError, NonFiniteGradient, TrainingFailure
from ..model import DWPConfig
from . import tdist
from .parameters import FAMILIES, ModelParams, ParameterLayout, init_params, softplus
from .tdist import DTYPE

_SEED_MASK = (1 << 63) - 1

#: Relative threshold below which a conditional (Schur) covariance is
#: treated as degenerate and the draw collapses to its mean.  Must sit
#: above eps * cond(S_ii), the round-off floor of the Schur complement
#: when the conditioned rows duplicate the inducing rows.
_DEGENERATE_SCHUR_RTOL = 1e-8


@dataclass(frozen=True)
class ELBOReport:
    """Per-term decomposition of one ELBO estimate."""

    layer_terms: tuple
    final_term: float
    log_lik: float
    n_samples: int

    @property
    def total(self) -> float:
        return self.log_lik + self.final_term + sum(self.layer_terms)


@dataclass(frozen=True)
class TrainRecord:
    step: int
    elbo: float
    layer_terms: tuple
    final_term: float
    log_lik: float
    anneal: float


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation schedule; the defaults follow the full protocol."""

    steps: int = 20000
    lr: float = 1e-2
    lr_after: float = 1e-3
    lr_drop_step: int | None = None
    anneal_steps: int = 1000
    elbo_samples: int = 10


@dataclass(frozen=True)
class PredictResult:
    mean: np.ndarray
    variance: np.ndarray
    log_lik: np.ndarray | None
    mean_log_lik: float | None
    rmse: float | None


def anneal_factor(step: int, warmup: int) -> float:
    """Linear warm-up weight: exactly 0 at step 0, exactly 1 from ``warmup`` on."""
    if warmup <= 0 or step >= warmup:
        return 1.0
    return step / warmup


# ---------------------------------------------------------------------------
# Evaluation context and the forward pass
# ---------------------------------------------------------------------------


class _EvalContext:
    """Static tensors shared by every ELBO evaluation of one problem."""

    def __init__(self, layout: ParameterLayout, cfg: DWPConfig, family: str,
                 X_t: np.ndarray, Y: np.ndarray | None):
        if family not in FAMILIES:
            raise DomainError(f"family must be one of {FAMILIES}, got {family!r}")
        self.layout = layout
        self.cfg = cfg
        self.family = family
        self.X_t = torch.tensor(np.atleast_2d(X_t), dtype=DTYPE)
        self.Y = None if Y is None else torch.tensor(np.atleast_2d(Y), dtype=DTYPE)
        self.idx = [
            tdist.make_trapezoid_idx(cfg.inducing_count, nu) for nu in cfg.widths
        ]

    @classmethod
    def for_training(cls, layout, cfg, family, data: Dataset):
        return cls(layout, cfg, family, data.X_train, data.Y_train)


def _take(theta, layout: ParameterLayout, name: str):
    return theta[layout.slices[name]].reshape(layout.shapes[name])


def _generators(sample_seed: int, depth: int):
    seeds = np.random.SeedSequence(sample_seed).generate_state(depth + 1, dtype=np.uint64)
    gens = []
    for s in seeds:
        g = torch.Generator()
        g.manual_seed(int(s) & _SEED_MASK)
        gens.append(g)
    return gens[0], gens[1:]


def _conditional_rows(L_ii, S_it, S_tt, F_i, gen, n_cols: int, deterministic: bool):
    """Draw the non-inducing rows given inducing rows, columns independent."""
    if S_it.shape[1] == 0:
        return torch.zeros(0, n_cols, dtype=DTYPE)
    V = tdist.tsolve(L_ii, S_it)
    M = V.mT @ tdist.tsolve(L_ii, F_i)
    schur = S_tt - V.mT @ V
    schur = (schur + schur.mT) / 2.0
    scale = max(float(S_tt.diagonal().abs().max()), 1e-300)
    if float(schur.abs().max()) <= _DEGENERATE_SCHUR_RTOL * scale:
        return M
    L_s = tdist.chol_jittered(schur, what="conditional covariance")
    if deterministic:
        return M
    eps = torch.randn(S_tt.shape[0], n_cols, dtype=DTYPE, generator=gen)
    return M + L_s @ eps


def _forward(theta, ctx: _EvalContext, sample_seed: int, deterministic: bool = False):
    """One generative pass; returns (layer_terms, final_term, log_lik, F_t, noise)."""
    layout, cfg, family = ctx.layout, ctx.cfg, ctx.family
    pi = cfg.inducing_count
    sp = torch.nn.functional.softplus
    normal_gen, gamma_gens = _generators(sample_seed, cfg.depth)

    x_i = _take(theta, layout, "inducing.x")
    X = torch.cat([x_i, ctx.X_t], dim=0)
    var0 = sp(_take(theta, layout, "kernel0.variance_raw"))[0]
    ls0 = sp(_take(theta, layout, "kernel0.lengthscale_raw"))
    K = tdist.kernel_ard(X, ls0, var0)

    layer_terms = []
    G_full = None
    for layer in range(1, cfg.depth + 1):
        nu = cfg.widths[layer - 1]
        idx = ctx.idx[layer - 1]
        if layer > 1:
            var_l = sp(_take(theta, layout, f"kernel{layer - 1}.variance_raw"))[0]
            ls_l = sp(_take(theta, layout, f"kernel{layer - 1}.lengthscale_raw"))[0]
            K = tdist.kernel_gram(G_full, ls_l, var_l)
        S = K / nu
        S_ii, S_it, S_tt = S[:pi, :pi], S[:pi, pi:], S[pi:, pi:]

        L_S = tdist.chol_jittered(S_ii, what=f"layer {layer} prior scale")
        q = torch.sigmoid(_take(theta, layout, f"layer{layer}.q_raw"))[0]
        V = _take(theta, layout, f"layer{layer}.v")
        base = (1.0 - q) * S_ii + q * (V @ V.mT)
        L_A = tdist.chol_jittered(base, what=f"layer {layer} posterior scale")

        alpha = sp(_take(theta, layout, f"layer{layer}.alpha_raw"))
        beta = sp(_take(theta, layout, f"layer{layer}.beta_raw"))
        mu = _take(theta, layout, f"layer{layer}.mu")
        sigma = sp(_take(theta, layout, f"layer{layer}.sigma_raw"))
        T = tdist.sample_trapezoid_factor(
            idx, alpha, beta, mu, sigma, gamma_gens[layer - 1], normal_gen, deterministic
        )

        if family == "gw":
            A_full = L_A
            a_logabsdet = None
        else:
            a_prime = _take(theta, layout, f"layer{layer}.a_prime")
            A_full = L_A @ a_prime
            a_logabsdet = torch.log(L_A.diagonal()).sum() + torch.linalg.slogdet(a_prime)[1]

        if family == "abgw":
            B = tdist.unpack_lower(_take(theta, layout, f"layer{layer}.b_raw"), idx.nt)
            lam = T @ B
            b_diag = B.diagonal()
        else:
            B = None
            lam = T
            b_diag = None

        F_i = A_full @ lam
        G_ii = F_i @ F_i.mT
        G_ii = (G_ii + G_ii.mT) / 2.0
        L_G = tdist.chol_jittered(
            G_ii[: idx.nt, : idx.nt],
            steps=tdist.GRAM_JITTER_STEPS,
            what=f"layer {layer} sampled Gram leading block",
        )
        logdet_g_lead = 2.0 * torch.log(L_G.diagonal()).sum()

        log_p = tdist.wishart_logpdf_factor(F_i, idx, L_S, logdet_g_lead)
        if family == "gw":
            log_q = tdist.gw_logpdf(T, idx, L_A, alpha, beta, mu, sigma)
        else:
            log_q = tdist.mixed_logpdf(
                T, idx, a_logabsdet, logdet_g_lead, alpha, beta, mu, sigma, b_diag
            )
        layer_terms.append(log_p - log_q)

        F_t = _conditional_rows(L_S, S_it, S_tt, F_i, normal_gen, idx.nt, deterministic)
        F_full = torch.cat([F_i, F_t], dim=0)
        G_full = F_full @ F_full.mT
        G_full = (G_full + G_full.mT) / 2.0

    if cfg.depth > 0:
        var_out = sp(_take(theta, layout, f"kernel{cfg.depth}.variance_raw"))[0]
        ls_out = sp(_take(theta, layout, f"kernel{cfg.depth}.lengthscale_raw"))[0]
        K = tdist.kernel_gram(G_full, ls_out, var_out)
    K_ii, K_it, K_tt = K[:pi, :pi], K[:pi, pi:], K[pi:, pi:]
    L_K = tdist.chol_jittered(K_ii, what="output-layer prior")

    n_out = layout.n_outputs
    f_mean = _take(theta, layout, "final.mean")
    S_chol = tdist.unpack_lower(_take(theta, layout, "final.chol_raw"), pi)
    if deterministic:
        eps = torch.zeros(pi, n_out, dtype=DTYPE)
    else:
        eps = torch.randn(pi, n_out, dtype=DTYPE, generator=normal_gen)
    F_i_out = f_mean + S_chol @ eps
    log_q_f = (
        -0.5 * n_out * pi * np.log(2.0 * np.pi)
        - n_out * torch.log(S_chol.diagonal()).sum()
        - 0.5 * (eps * eps).sum()
    )
    log_p_f = tdist.gaussian_cols_logpdf(F_i_out, torch.zeros_like(F_i_out), L_K)
    final_term = log_p_f - log_q_f

    F_t_out = _conditional_rows(L_K, K_it, K_tt, F_i_out, normal_gen, n_out, deterministic)
    noise = sp(_take(theta, layout, "noise_raw"))[0]
    if ctx.Y is None:
        log_lik = None
    else:
        resid = ctx.Y - F_t_out
        log_lik = (
            -0.5 * ctx.Y.numel() * torch.log(2.0 * np.pi * noise)
            - (resid * resid).sum() / (2.0 * noise)
        )
    return layer_terms, final_term, log_lik, F_t_out, noise


def _evaluate(theta, ctx: _EvalContext, seeds, kl_scale: float):
    """Mean objective over the given seeds plus averaged float parts."""
    n = len(seeds)
    obj = None
    depth = ctx.cfg.depth
    lt_acc = np.zeros(depth)
    ft_acc = 0.0
    ll_acc = 0.0
    for seed in seeds:
        layer_terms, final_term, log_lik, _, _ = _forward(theta, ctx, seed)
        kl_sum = final_term
        for t in layer_terms:
            kl_sum = kl_sum + t
        sample_obj = log_lik + kl_scale * kl_sum
        obj = sample_obj if obj is None else obj + sample_obj
        lt_acc += np.array([float(t.detach()) for t in layer_terms])
        ft_acc += float(final_term.detach())
        ll_acc += float(log_lik.detach())
    return obj / n, (tuple(lt_acc / n), ft_acc / n, ll_acc / n)


# ---------------------------------------------------------------------------
# Public evaluation API
# ---------------------------------------------------------------------------


def elbo_single_sample(params: ModelParams, data: Dataset, cfg: DWPConfig,
                       family: str, rng: np.random.Generator) -> ELBOReport:
    """One reparameterised ELBO draw, deterministic given the stream."""
    ctx = _EvalContext.for_training(params.layout, cfg, family, data)
    seed = int(rng.integers(_SEED_MASK))
    with torch.no_grad():
        theta = torch.tensor(params.vector, dtype=DTYPE)
        layer_terms, final_term, log_lik, _, _ = _forward(theta, ctx, seed)
    return ELBOReport(
        layer_terms=tuple(float(t) for t in layer_terms),
        final_term=float(final_term),
        log_lik=float(log_lik),
        n_samples=1,
    )


def elbo_estimate(params: ModelParams, data: Dataset, cfg: DWPConfig, family: str,
                  n_samples: int, rng: np.random.Generator) -> ELBOReport:
    """Mean of independent single-sample reports (ordered reduction)."""
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    reports = [elbo_single_sample(params, data, cfg, family, rng) for _ in range(n_samples)]
    depth = len(reports[0].layer_terms)
    return ELBOReport(
        layer_terms=tuple(
            float(np.mean([r.layer_terms[i] for r in reports])) for i in range(depth)
        ),
        final_term=float(np.mean([r.final_term for r in reports])),
        log_lik=float(np.mean([r.log_lik for r in reports])),
        n_samples=n_samples,
    )


def gradient(params: ModelParams, data: Dataset, cfg: DWPConfig, family: str,
             n_samples: int, rng: np.random.Generator, method: str = "autograd",
             kl_scale: float = 1.0) -> np.ndarray:
    """Gradient of the ELBO estimate with common random numbers.

    ``method="autograd"`` differentiates the reparameterised graph
    exactly; ``method="fd"`` uses central differences with step
    ``1e-4 * (1 + |theta|)`` per coordinate on the same noise draws and
    exists as the verification oracle for the exact path.
    """
    seeds = [int(rng.integers(_SEED_MASK)) for _ in range(n_samples)]
    ctx = _EvalContext.for_training(params.layout, cfg, family, data)
    if method == "autograd":
        theta = torch.tensor(params.vector, dtype=DTYPE, requires_grad=True)
        obj, _ = _evaluate(theta, ctx, seeds, kl_scale)
        obj.backward()
        grad = theta.grad.detach().numpy().copy()
    elif method == "fd":
        base = params.vector

        def value(vec):
            with torch.no_grad():
                obj, _ = _evaluate(torch.tensor(vec, dtype=DTYPE), ctx, seeds, kl_scale)
            return float(obj)

        grad = np.zeros(base.size)
        for i in range(base.size):
            h = 1e-4 * (1.0 + abs(base[i]))
            up, down = base.copy(), base.copy()
            up[i] += h
            down[i] -= h
            grad[i] = (value(up) - value(down)) / (2.0 * h)
    else:
        raise DomainError(f"unknown gradient method {method!r}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient(f"{int(np.sum(~np.isfinite(grad)))} non-finite components")
    return grad


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), t=0)


def adam_step(state: AdamState, params_vec: np.ndarray, grad_vec: np.ndarray,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8):
    """One Adam ascent step; returns the new state and parameter vector."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad_vec
    v = beta2 * state.v + (1.0 - beta2) * grad_vec * grad_vec
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_vec = params_vec + lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m=m, v=v, t=t), new_vec


def train(data: Dataset, cfg: DWPConfig, family: str,
          schedule: TrainConfig | None = None,
          rng: np.random.Generator | None = None):
    """Optimise the ELBO; returns the final parameters and the trajectory.

    The learning rate drops to ``lr_after`` at ``lr_drop_step`` (default:
    halfway), and the prior/posterior terms are weighted by the linear
    warm-up factor during the first ``anneal_steps`` steps.  Training
    aborts with diagnostics as soon as the ELBO or its gradient goes
    non-finite, or a row mixer loses invertibility.
    """
    schedule = schedule or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng()
    params = init_params(cfg, data, rng)
    ctx = _EvalContext.for_training(params.layout, cfg, family, data)
    state = AdamState.zeros(params.layout.size)
    drop = schedule.lr_drop_step if schedule.lr_drop_step is not None else schedule.steps // 2
    records = []
    for step in range(schedule.steps):
        lr = schedule.lr if step < drop else schedule.lr_after
        kl = anneal_factor(step, schedule.anneal_steps)
        seeds = [int(rng.integers(_SEED_MASK)) for _ in range(schedule.elbo_samples)]
        theta = torch.tensor(params.vector, dtype=DTYPE, requires_grad=True)
        obj, (lt, ft, ll) = _evaluate(theta, ctx, seeds, kl)
        elbo = ll + ft + sum(lt)
        if not np.isfinite(elbo):
            raise TrainingFailure(
                f"step {step}: non-finite ELBO (log_lik={ll}, final={ft}, layers={lt})"
            )
        obj.backward()
        grad = theta.grad.detach().numpy()
        if not np.all(np.isfinite(grad)):
            raise TrainingFailure(f"step {step}: non-finite gradient")
        if family != "gw":
            for layer in range(1, cfg.depth + 1):
                logdet = np.linalg.slogdet(params.get(f"layer{layer}.a_prime"))[1]
                if not np.isfinite(logdet):
                    raise TrainingFailure(
                        f"step {step}: layer {layer} row mixer lost invertibility"
                    )
        records.append(TrainRecord(step, elbo, lt, ft, ll, kl))
        state, new_vec = adam_step(state, params.vector, grad, lr)
        params = ModelParams(params.layout, new_vec)
    return params, records


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict(params: ModelParams, cfg: DWPConfig, family: str, X_test,
            n_samples: int, rng: np.random.Generator, norm: Normalization,
            y_test=None, deterministic: bool = False) -> PredictResult:
    """Monte-Carlo predictive distribution at new inputs.

    Each sample is one full generative pass; the predictive density is
    the equally weighted Gaussian mixture over passes with the learned
    observation noise, evaluated by log-mean-exp.  Outputs are reported
    in original target units.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    x_norm = norm.normalize_x(X_test)
    ctx = _EvalContext(params.layout, cfg, family, x_norm, None)
    draws = []
    with torch.no_grad():
        theta = torch.tensor(params.vector, dtype=DTYPE)
        for _ in range(n_samples):
            seed = int(rng.integers(_SEED_MASK))
            _, _, _, F_t, noise_t = _forward(theta, ctx, seed, deterministic)
            draws.append(F_t.numpy().copy())
    F = np.stack(draws)  # (samples, points, outputs)
    noise = float(noise_t)
    y_std = np.atleast_1d(norm.y_std)
    mean_norm = F.mean(axis=0)
    var_norm = F.var(axis=0) + noise
    mean = norm.denormalize_y(mean_norm)
    variance = var_norm * y_std**2

    log_lik = mean_log_lik = rmse = None
    if y_test is not None:
        y_test = np.asarray(y_test, dtype=float)
        if y_test.ndim == 1:
            y_test = y_test[:, None]
        y_norm = norm.normalize_y(y_test)
        point_ll = (
            -0.5 * np.log(2.0 * np.pi * noise) - (y_norm[None] - F) ** 2 / (2.0 * noise)
        ).sum(axis=2)
        log_lik = logsumexp(point_ll, axis=0) - np.log(n_samples) - np.log(y_std).sum()
        mean_log_lik = float(log_lik.mean())
        rmse = float(np.sqrt(np.mean((mean - y_test) ** 2)))
    return PredictResult(mean=mean, variance=variance, log_lik=log_lik,
                         mean_log_lik=mean_log_lik, rmse=rmse)
