"""Scikit-learn style regressor wrapping the VI engine.

The estimator normalises inputs and targets internally, trains a deep
Wishart process by stochastic variational inference on ``fit``, and
returns Monte-Carlo predictive means (optionally with standard
deviations) in original units on ``predict``.  It follows the estimator
protocol (``get_params``/``set_params``, clone-compatible constructor),
so it composes with model selection utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from .data import from_arrays
from .model import default_config
from .vi import TrainConfig, elbo_estimate, predict, train


class DeepWishartProcessRegressor(BaseEstimator, RegressorMixin):
    """Deep Wishart process regression trained by variational inference.

    Parameters
    ----------
    n_layers : int
        Number of hidden Gram layers (0 gives a plain sparse GP).
    width : int or None
        Degrees of freedom per hidden layer; defaults to the number of
        input features.
    n_inducing : int
        Number of learned inducing inputs.
    family : {"gw", "agw", "abgw"}
        Posterior family: Cholesky-scaled, row-mixed, or row/column-mixed.
    n_steps : int
        Adam steps.  The learning rate starts at ``learning_rate`` and
        drops tenfold halfway through.
    anneal_steps : int
        Linear warm-up length for the prior/posterior terms.
    n_elbo_samples : int
        Monte-Carlo samples per gradient step.
    n_predict_samples : int
        Monte-Carlo samples per prediction.
    noise_variance : float
        Initial observation-noise variance (in normalised target units).
    random_state : int
        Seed for initialisation, training, and prediction streams.
    """

    def __init__(self, n_layers=2, width=None, n_inducing=10, family="abgw",
                 n_steps=500, learning_rate=1e-2, anneal_steps=100,
                 n_elbo_samples=3, n_predict_samples=64, noise_variance=0.1,
                 random_state=0):
        self.n_layers = n_layers
        self.width = width
        self.n_inducing = n_inducing
        self.family = family
        self.n_steps = n_steps
        self.learning_rate = learning_rate
        self.anneal_steps = anneal_steps
        self.n_elbo_samples = n_elbo_samples
        self.n_predict_samples = n_predict_samples
        self.noise_variance = noise_variance
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        dataset = from_arrays(X, y)
        widths = None if self.width is None else (self.width,) * self.n_layers
        cfg = default_config(
            depth=self.n_layers,
            n_features=dataset.n_features,
            inducing_count=min(self.n_inducing, X.shape[0]),
            widths=widths,
            noise_variance=self.noise_variance,
        )
        schedule = TrainConfig(
            steps=self.n_steps,
            lr=self.learning_rate,
            lr_after=self.learning_rate / 10.0,
            anneal_steps=self.anneal_steps,
            elbo_samples=self.n_elbo_samples,
        )
        rng = np.random.default_rng(self.random_state)
        params, records = train(dataset, cfg, self.family, schedule, rng)
        self.params_ = params
        self.config_ = cfg
        self.norm_ = dataset.norm
        self.trajectory_ = records
        self.elbo_ = elbo_estimate(
            params, dataset, cfg, self.family, max(self.n_elbo_samples, 10), rng
        ).total
        self.n_features_in_ = dataset.n_features
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit before predict")

    def predict(self, X, return_std=False):
        self._check_fitted()
        X = check_array(X)
        rng = np.random.default_rng(self.random_state + 1)
        result = predict(
            self.params_, self.config_, self.family, X,
            self.n_predict_samples, rng, self.norm_,
        )
        mean = result.mean[:, 0]
        if return_std:
            return mean, np.sqrt(result.variance[:, 0])
        return mean
