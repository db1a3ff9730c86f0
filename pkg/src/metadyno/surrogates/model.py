from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ._params import GPR, Prediction
from .gpr import _check as _check_gpr
from .gpr import _cholesky, _sqdist
from .mlp import forward


class FittedSurrogate:
    """A surrogate frozen at fitted parameters, for repeated batch prediction.

    The GP factorization is computed once. Predictions are memoized per
    query row and ``n_evals`` counts distinct surrogate evaluations, which
    is what the budget checks look at.
    """

    def __init__(self, params, data):
        self.params = params
        self.data = data
        self.n_evals = 0
        self._cache = {}
        if params.kind == GPR:
            _check_gpr(params, data)
            log_l, log_sf2, log_sn2 = params.values
            self._l2 = np.exp(2.0 * log_l)
            self._sf2 = np.exp(log_sf2)
            K = self._sf2 * np.exp(-0.5 * _sqdist(data.X, data.X) / self._l2)
            K += np.exp(log_sn2) * np.eye(len(data))
            self._L = _cholesky(K)
            self._alpha = cho_solve((self._L, True), data.y, check_finite=False)

    @property
    def kind(self):
        return self.params.kind

    def _raw_predict(self, Z):
        if self.params.kind == GPR:
            Ks = self._sf2 * np.exp(-0.5 * _sqdist(Z, self.data.X) / self._l2)
            mean = Ks @ self._alpha
            V = solve_triangular(self._L, Ks.T, lower=True, check_finite=False)
            var = np.clip(self._sf2 - np.sum(V * V, axis=0), 0.0, None)
        else:
            mean = forward(self.params, Z)
            var = np.zeros_like(mean)
        norm = self.data.norm
        if norm is not None:
            mean, var = norm.inverse_y(mean), norm.inverse_var(var)
        return mean, var

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        keys = [row.tobytes() for row in X]
        todo = [i for i, k in enumerate(keys) if k not in self._cache]
        if todo:
            uniq = {}
            for i in todo:
                uniq.setdefault(keys[i], i)
            rows = np.array(list(uniq.values()))
            Z = X[rows]
            if self.data.norm is not None:
                Z = self.data.norm.transform_x(Z)
            mean, var = self._raw_predict(Z)
            for k, m, v in zip(uniq, mean, var):
                self._cache[k] = (float(m), float(v))
            self.n_evals += len(uniq)
        mv = np.array([self._cache[k] for k in keys])
        return Prediction(mv[:, 0], mv[:, 1])
