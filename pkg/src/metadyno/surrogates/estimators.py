"""scikit-learn compatible wrappers around the functional surrogates.

Both estimators fit their parameters by first-order descent from an
explicit starting point, which is what lets a meta-learned initialization
be handed in through ``fit(..., init_params=theta_ml)``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._data import Dataset
from ._fit import fit_params, predict
from ._params import GPR, NN, gpr_params, init_mlp_params


class _SurrogateRegressor(RegressorMixin, BaseEstimator):
    kind = None

    def _default_params(self, n_inputs):
        raise NotImplementedError

    def fit(self, X, y, init_params=None):
        X, y = check_X_y(X, y, y_numeric=True)
        data = Dataset(X, y).normalized(self.bounds)
        start = init_params if init_params is not None else self._default_params(X.shape[1])
        if start.kind != self.kind:
            raise ValueError(f"init_params are for {start.kind}, estimator is {self.kind}")
        self.params_, self.loss_history_ = fit_params(
            start, data, self.learning_rate, self.max_iter, self.tol, self.optimizer
        )
        self.dataset_ = data
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_std=False):
        check_is_fitted(self, "params_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        pred = predict(self.params_, self.dataset_, X)
        if return_std:
            return np.asarray(pred.mean), np.sqrt(np.asarray(pred.variance))
        return np.asarray(pred.mean)


class GPRSurrogate(_SurrogateRegressor):
    """Exact GP regressor with a squared-exponential kernel.

    Parameters
    ----------
    length_scale, signal_variance, noise_variance : float
        Starting hyperparameters used when ``fit`` gets no ``init_params``.
    bounds : pair of arrays or None
        Search-space box used to scale inputs to ``[0, 1]``; the data range
        is used when omitted.
    learning_rate, max_iter, tol, optimizer
        Settings of the descent on the negative log marginal likelihood.
    """

    kind = GPR

    def __init__(
        self,
        length_scale=1.0,
        signal_variance=1.0,
        noise_variance=0.01,
        bounds=None,
        learning_rate=0.01,
        max_iter=100,
        tol=1e-6,
        optimizer="sgd",
    ):
        self.length_scale = length_scale
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance
        self.bounds = bounds
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol
        self.optimizer = optimizer

    def _default_params(self, n_inputs):
        return gpr_params(self.length_scale, self.signal_variance, self.noise_variance)


class MLPSurrogate(_SurrogateRegressor):
    """Three hidden layers of 40 ReLU units trained on mean squared error."""

    kind = NN

    def __init__(
        self,
        bounds=None,
        learning_rate=0.01,
        max_iter=100,
        tol=1e-6,
        optimizer="sgd",
        random_state=None,
    ):
        self.bounds = bounds
        self.learning_rate = learning_rate
        self.max_iter = max_iter
        self.tol = tol
        self.optimizer = optimizer
        self.random_state = random_state

    def _default_params(self, n_inputs):
        return init_mlp_params(n_inputs, np.random.default_rng(self.random_state))
