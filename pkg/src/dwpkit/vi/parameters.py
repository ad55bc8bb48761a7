"""Parameter layout, initialisation, and checkpoints for the VI engine.

All learnable quantities live in one flat float64 vector of *raw*
(unconstrained) values; positivity is imposed through softplus and the
mixing probability through a sigmoid when the vector is consumed.  The
layout is a pure function of the architecture, so checkpoints only need
the architecture plus the named tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from ..data import Dataset, Normalization
from ..distributions import bartlett_prior_params, strict_lower_trapezoid_mask
from ..errors import ConfigError, DomainError, ShapeMismatch
from ..linalg import cholesky_with_jitter
from ..model import DWPConfig, KernelConfig, kernel_ard_inputs, kernel_from_gram

FAMILIES = ("gw", "agw", "abgw")

CHECKPOINT_SCHEMA = 1


def softplus(x):
    return np.logaddexp(0.0, np.asarray(x, dtype=float))


def inv_softplus(y):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("inverse softplus requires positive input")
    return np.where(y > 30.0, y, np.log(np.expm1(np.minimum(y, 30.0))))


def pack_lower_raw(L) -> np.ndarray:
    """Pack a lower-triangular matrix into raw storage.

    Layout is the softplus-inverted diagonal followed by the strictly
    lower entries in row-major order; :func:`dwpkit.vi.engine` applies
    the inverse when rebuilding the matrix.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    low = np.tril_indices(n, -1)
    return np.concatenate([inv_softplus(np.diag(L)), L[low]])


def n_strict_lower(P: int, nu: int) -> int:
    return int(strict_lower_trapezoid_mask(P, nu).sum())


class ParameterLayout:
    """Named slices into the flat raw-parameter vector."""

    def __init__(self, cfg: DWPConfig, n_features: int, n_outputs: int):
        self.cfg = cfg
        self.n_features = int(n_features)
        self.n_outputs = int(n_outputs)
        pi = cfg.inducing_count
        fields: list[tuple[str, tuple]] = []
        for layer, nu in enumerate(cfg.widths, start=1):
            nt = min(nu, pi)
            nlow = n_strict_lower(pi, nu)
            fields += [
                (f"layer{layer}.a_prime", (pi, pi)),
                (f"layer{layer}.b_raw", (nt * (nt + 1) // 2,)),
                (f"layer{layer}.v", (pi, pi)),
                (f"layer{layer}.q_raw", (1,)),
                (f"layer{layer}.alpha_raw", (nt,)),
                (f"layer{layer}.beta_raw", (nt,)),
                (f"layer{layer}.mu", (nlow,)),
                (f"layer{layer}.sigma_raw", (nlow,)),
            ]
        fields += [
            ("final.mean", (pi, self.n_outputs)),
            ("final.chol_raw", (pi * (pi + 1) // 2,)),
            ("inducing.x", (pi, self.n_features)),
            ("kernel0.variance_raw", (1,)),
            ("kernel0.lengthscale_raw", (self.n_features,)),
        ]
        for layer in range(1, cfg.depth + 1):
            fields += [
                (f"kernel{layer}.variance_raw", (1,)),
                (f"kernel{layer}.lengthscale_raw", (1,)),
            ]
        fields.append(("noise_raw", (1,)))

        self.fields = tuple(fields)
        self.shapes = {name: shape for name, shape in fields}
        self.slices: dict[str, slice] = {}
        offset = 0
        for name, shape in fields:
            size = int(np.prod(shape))
            self.slices[name] = slice(offset, offset + size)
            offset += size
        self.size = offset


@dataclass
class ModelParams:
    """Flat raw parameter vector plus its layout."""

    layout: ParameterLayout
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=float)
        if vec.shape != (self.layout.size,):
            raise ShapeMismatch(
                f"vector must have shape ({self.layout.size},), got {vec.shape}"
            )
        self.vector = vec

    def get(self, name: str) -> np.ndarray:
        return self.vector[self.layout.slices[name]].reshape(self.layout.shapes[name]).copy()

    def set(self, name: str, value) -> None:
        value = np.asarray(value, dtype=float)
        if value.shape != self.layout.shapes[name]:
            raise ShapeMismatch(
                f"{name}: expected shape {self.layout.shapes[name]}, got {value.shape}"
            )
        self.vector[self.layout.slices[name]] = value.ravel()

    def copy(self) -> "ModelParams":
        return ModelParams(self.layout, self.vector.copy())


def init_params(
    cfg: DWPConfig,
    dataset: Dataset,
    rng: np.random.Generator,
    prior_matched: bool = False,
) -> ModelParams:
    """Initialise at (or near) the conditional prior.

    The mixers start at the identity, the factor parameters at their
    prior values, and each layer's free covariance factor at the Cholesky
    of the kernel over the initial inducing inputs, so the mixing weight
    ``q`` has no effect at step zero.  With ``prior_matched=True`` the raw
    mixing weight is pushed to negative infinity for all practical
    purposes, which makes the posterior coincide with the conditional
    prior exactly.
    """
    layout = ParameterLayout(cfg, dataset.n_features, dataset.n_outputs)
    params = ModelParams(layout, np.zeros(layout.size))
    pi = cfg.inducing_count

    n_train = dataset.X_train.shape[0]
    pick = rng.choice(n_train, size=pi, replace=n_train < pi)
    # Nudged off the training rows: exact coincidence makes the step-0
    # conditional covariance singular and its factor gradient explode.
    x_i = dataset.X_train[pick] + 0.01 * rng.standard_normal((pi, dataset.n_features))
    params.set("inducing.x", x_i)

    g0_ii = (x_i @ x_i.T) / dataset.n_features
    for layer, nu in enumerate(cfg.widths, start=1):
        nt = min(nu, pi)
        kcfg = cfg.kernels[layer - 1]
        K = kernel_ard_inputs(x_i, kcfg) if layer == 1 else kernel_from_gram(g0_ii, kcfg)
        v, _ = cholesky_with_jitter(K / nu)
        prior = bartlett_prior_params(pi, nu)
        params.set(f"layer{layer}.a_prime", np.eye(pi))
        params.set(f"layer{layer}.b_raw", pack_lower_raw(np.eye(nt)))
        params.set(f"layer{layer}.v", v)
        params.set(f"layer{layer}.q_raw", [-1000.0 if prior_matched else -2.0])
        params.set(f"layer{layer}.alpha_raw", inv_softplus(prior.alpha))
        params.set(f"layer{layer}.beta_raw", inv_softplus(prior.beta))
        params.set(f"layer{layer}.mu", np.zeros(n_strict_lower(pi, nu)))
        params.set(f"layer{layer}.sigma_raw", np.full(n_strict_lower(pi, nu), inv_softplus(1.0)))

    params.set("final.mean", np.zeros((pi, dataset.n_outputs)))
    params.set("final.chol_raw", pack_lower_raw(np.eye(pi)))
    params.set("kernel0.variance_raw", inv_softplus([cfg.kernels[0].variance]))
    params.set("kernel0.lengthscale_raw", inv_softplus(cfg.kernels[0].lengthscales))
    for layer in range(1, cfg.depth + 1):
        kcfg = cfg.kernels[layer]
        params.set(f"kernel{layer}.variance_raw", inv_softplus([kcfg.variance]))
        params.set(f"kernel{layer}.lengthscale_raw", inv_softplus(kcfg.lengthscales))
    params.set("noise_raw", inv_softplus([cfg.noise_variance]))
    return params


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckpointData:
    params: ModelParams
    cfg: DWPConfig
    family: str
    norm: Normalization
    seed: int


def config_to_dict(cfg: DWPConfig) -> dict:
    return {
        "depth": cfg.depth,
        "widths": [int(w) for w in cfg.widths],
        "inducing_count": cfg.inducing_count,
        "noise_variance": float(cfg.noise_variance),
        "kernels": [
            {"variance": float(k.variance), "lengthscales": k.lengthscales.tolist()}
            for k in cfg.kernels
        ],
    }


def config_from_dict(d: dict) -> DWPConfig:
    try:
        kernels = tuple(
            KernelConfig(float(k["variance"]), np.asarray(k["lengthscales"], dtype=float))
            for k in d["kernels"]
        )
        return DWPConfig(
            depth=int(d["depth"]),
            widths=tuple(int(w) for w in d["widths"]),
            inducing_count=int(d["inducing_count"]),
            kernels=kernels,
            noise_variance=float(d["noise_variance"]),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"config: {exc!r}") from exc


def save_checkpoint(path, params: ModelParams, cfg: DWPConfig, family: str,
                    norm: Normalization, seed: int) -> None:
    """Write a self-describing text checkpoint (schema 1)."""
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "kind": "dwp-checkpoint",
        "family": family,
        "seed": int(seed),
        "n_features": params.layout.n_features,
        "n_outputs": params.layout.n_outputs,
        "config": config_to_dict(cfg),
        "normalization": {
            "x_mean": norm.x_mean.tolist(),
            "x_std": norm.x_std.tolist(),
            "y_mean": norm.y_mean.tolist(),
            "y_std": norm.y_std.tolist(),
        },
        "parameters": {
            name: {
                "shape": list(shape),
                "data": params.get(name).ravel().tolist(),
            }
            for name, shape in params.layout.fields
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None)


def load_checkpoint(path) -> CheckpointData:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or doc.get("schema") != CHECKPOINT_SCHEMA:
        raise ConfigError(f"{path}: not a schema-{CHECKPOINT_SCHEMA} checkpoint")
    family = doc.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"family: expected one of {FAMILIES}, got {family!r}")
    cfg = config_from_dict(doc.get("config", {}))
    layout = ParameterLayout(cfg, int(doc["n_features"]), int(doc["n_outputs"]))
    params = ModelParams(layout, np.zeros(layout.size))
    stored = doc.get("parameters", {})
    for name, shape in layout.fields:
        if name not in stored:
            raise ConfigError(f"parameters.{name}: missing from checkpoint")
        arr = np.asarray(stored[name]["data"], dtype=float).reshape(shape)
        params.set(name, arr)
    nd = doc.get("normalization", {})
    norm = Normalization(
        x_mean=np.asarray(nd["x_mean"], dtype=float),
        x_std=np.asarray(nd["x_std"], dtype=float),
        y_mean=np.asarray(nd["y_mean"], dtype=float),
        y_std=np.asarray(nd["y_std"], dtype=float),
    )
    return CheckpointData(params=params, cfg=cfg, family=family, norm=norm,
                          seed=int(doc.get("seed", 0)))
