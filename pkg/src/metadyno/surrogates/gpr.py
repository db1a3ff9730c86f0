"""Exact Gaussian process regression with a squared-exponential kernel.

Hyperparameters live in log space, ``theta = (log l, log sf2, log sn2)``,
so unconstrained gradient steps keep them positive. The loss is the
negative log marginal likelihood

    NLL = 1/2 y^T K^-1 y + 1/2 log|K| + N/2 log(2 pi),
    K   = sf2 * exp(-||x - x'||^2 / (2 l^2)) + sn2 * I.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from ._params import GPR, Prediction, SurrogateParams

__all__ = [
    "SingularCovarianceError",
    "gpr_loss",
    "gpr_loss_grad",
    "gpr_loss_and_grad",
    "gpr_loss_hessian",
    "gpr_predict",
]

_LOG_2PI = np.log(2.0 * np.pi)
JITTER_START = 1e-10
JITTER_MAX = 1e-4


class SingularCovarianceError(np.linalg.LinAlgError):
    """Covariance matrix stayed indefinite after the largest jitter."""


def _sqdist(A, B):
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _check(params, data):
    if params.kind != GPR:
        raise ValueError(f"expected GPR parameters, got {params.kind}")
    if len(data) == 0:
        raise ValueError("GPR needs at least one observation")


def _cholesky(K):
    """Lower Cholesky factor, adding diagonal jitter only if plain factorization fails."""
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(K)))
    jitter = JITTER_START * scale
    while jitter <= JITTER_MAX * scale * (1 + 1e-9):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(K.shape[0]))
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise SingularCovarianceError("covariance matrix is numerically singular")


def _factor(theta, X, y):
    log_l, log_sf2, log_sn2 = theta
    l2 = np.exp(2.0 * log_l)
    sf2, sn2 = np.exp(log_sf2), np.exp(log_sn2)
    D = _sqdist(X, X) / l2
    E = np.exp(-0.5 * D)
    K = sf2 * E + sn2 * np.eye(X.shape[0])
    L = _cholesky(K)
    alpha = cho_solve((L, True), y, check_finite=False)
    return D, E, sf2, sn2, L, alpha


def _nll(L, alpha, y):
    return 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * y.size * _LOG_2PI


def gpr_loss(params: SurrogateParams, data) -> float:
    _check(params, data)
    *_, L, alpha = _factor(params.values, data.X, data.y)
    return float(_nll(L, alpha, data.y))


def _kernel_derivs(D, E, sf2, sn2, n):
    # dK / d(log l), dK / d(log sf2), dK / d(log sn2)
    return [sf2 * E * D, sf2 * E, sn2 * np.eye(n)]


def gpr_loss_and_grad(params: SurrogateParams, data):
    _check(params, data)
    X, y = data.X, data.y
    D, E, sf2, sn2, L, alpha = _factor(params.values, X, y)
    Kinv = cho_solve((L, True), np.eye(X.shape[0]), check_finite=False)
    inner = Kinv - np.outer(alpha, alpha)
    grad = np.array([0.5 * np.sum(inner * dK) for dK in _kernel_derivs(D, E, sf2, sn2, y.size)])
    return float(_nll(L, alpha, y)), grad


def gpr_loss_grad(params: SurrogateParams, data) -> np.ndarray:
    return gpr_loss_and_grad(params, data)[1]


def gpr_loss_hessian(params: SurrogateParams, data) -> np.ndarray:
    """Analytic 3x3 Hessian of the NLL in log-hyperparameter space.

    Used for the exact second-order meta-gradient.
    """
    _check(params, data)
    X, y = data.X, data.y
    N = y.size
    D, E, sf2, sn2, L, alpha = _factor(params.values, X, y)
    Kinv = cho_solve((L, True), np.eye(N), check_finite=False)
    dK = _kernel_derivs(D, E, sf2, sn2, N)
    zero = np.zeros((N, N))
    # second derivatives of K; (l, sf2) and (sf2, sf2) share the SE block
    d2K = [
        [sf2 * E * (D * D - 2.0 * D), sf2 * E * D, zero],
        [sf2 * E * D, sf2 * E, zero],
        [zero, zero, sn2 * np.eye(N)],
    ]
    KinvdK = [Kinv @ M for M in dK]
    dKa = [M @ alpha for M in dK]
    H = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            h = (
                dKa[i] @ Kinv @ dKa[j]
                - 0.5 * alpha @ d2K[i][j] @ alpha
                + 0.5 * np.sum(Kinv * d2K[i][j])
                - 0.5 * np.sum(KinvdK[i] * KinvdK[j].T)
            )
            H[i, j] = H[j, i] = h
    return H


def gpr_predict(params: SurrogateParams, data, x) -> Prediction:
    """Posterior mean and variance at ``x`` (one point or a batch).

    If ``data.norm`` is set, ``x`` is in raw coordinates and the result is
    mapped back to raw target units.
    """
    _check(params, data)
    Xq = np.asarray(x, dtype=float)
    single = Xq.ndim == 1
    Xq = np.atleast_2d(Xq)
    if data.norm is not None:
        Xq = data.norm.transform_x(Xq)
    log_l, log_sf2, _ = params.values
    sf2 = np.exp(log_sf2)
    *_, L, alpha = _factor(params.values, data.X, data.y)
    Ks = sf2 * np.exp(-0.5 * _sqdist(Xq, data.X) / np.exp(2.0 * log_l))
    mean = Ks @ alpha
    V = solve_triangular(L, Ks.T, lower=True, check_finite=False)
    var = np.clip(sf2 - np.sum(V * V, axis=0), 0.0, None)
    if data.norm is not None:
        mean, var = data.norm.inverse_y(mean), data.norm.inverse_var(var)
    if single:
        return Prediction(float(mean[0]), float(var[0]))
    return Prediction(mean, var)
